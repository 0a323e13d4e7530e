"""PSNR / SSIM and per-plane volume evaluation."""

import math

import numpy as np
from scipy.ndimage import correlate1d

__all__ = ["psnr", "ssim", "gaussian_window", "evaluate_volume", "PLANES", "format_metric"]

PLANES = ("axial", "coronal", "sagittal")

WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """``10 log10(peak^2 / MSE)``; identical inputs give ``inf``."""
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def gaussian_window(size=WINDOW_SIZE, sigma=WINDOW_SIGMA):
    """Normalised 1D Gaussian taps; the 2D window is their outer product."""
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t**2) / (2 * sigma**2))
    return g / g.sum()


def _filter(img, taps):
    pad = len(taps) // 2
    out = correlate1d(correlate1d(img, taps, axis=0, mode="constant"), taps, axis=1, mode="constant")
    return out[pad:-pad, pad:-pad]


def ssim(a, b, peak=1.0, win_size=WINDOW_SIZE, sigma=WINDOW_SIGMA):
    """Mean SSIM over all window positions that fit inside the image."""
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ValueError(f"ssim expects 2D images, got shape {a.shape}")
    if min(a.shape) < win_size:
        raise ValueError(f"image {a.shape} is smaller than the {win_size}x{win_size} window")
    taps = gaussian_window(win_size, sigma)
    c1, c2 = (K1 * peak) ** 2, (K2 * peak) ** 2
    mu_a, mu_b = _filter(a, taps), _filter(b, taps)
    var_a = _filter(a * a, taps) - mu_a * mu_a
    var_b = _filter(b * b, taps) - mu_b * mu_b
    cov = _filter(a * b, taps) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def _plane_slices(vol, plane):
    if plane == "axial":
        return [vol[k] for k in range(vol.shape[0])]
    if plane == "coronal":
        return [vol[:, k, :] for k in range(vol.shape[1])]
    if plane == "sagittal":
        return [vol[:, :, k] for k in range(vol.shape[2])]
    raise ValueError(f"unknown plane {plane!r}")


def evaluate_volume(recon, truth, peak=1.0):
    """Slice-averaged PSNR and SSIM for each orthogonal plane family.

    Volumes are ``(S, H, W)``: axial slices are the stored ``H x W`` images,
    coronal slices are ``S x W`` and sagittal ``S x H``.  SSIM is ``None``
    for a plane whose slices are smaller than the SSIM window.

    Returns a list of ``(plane, psnr, ssim)`` tuples.
    """
    recon, truth = _pair(recon, truth)
    if recon.ndim != 3:
        raise ValueError(f"volumes must be 3D, got shape {recon.shape}")
    rows = []
    for plane in PLANES:
        pairs = list(zip(_plane_slices(recon, plane), _plane_slices(truth, plane)))
        p = float(np.mean([psnr(r, t, peak) for r, t in pairs]))
        if min(pairs[0][0].shape) >= WINDOW_SIZE:
            s = float(np.mean([ssim(r, t, peak) for r, t in pairs]))
        else:
            s = None
        rows.append((plane, p, s))
    return rows


def format_metric(value, digits=6):
    """CSV text for a metric: ``inf`` for infinite PSNR, ``n/a`` for ``None``."""
    if value is None:
        return "n/a"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"
