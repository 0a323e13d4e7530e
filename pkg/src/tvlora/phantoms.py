"""Analytic test phantoms.

All phantoms are evaluated on a supersampled grid and box-averaged, which
keeps edge pixels close to their true area fractions.
"""

import numpy as np

__all__ = ["PHANTOM_KINDS", "gen_phantom", "shepp_logan", "uniform_disk", "random_disks"]

PHANTOM_KINDS = ("shepp-logan", "disks", "uniform-disk")

# Toft's modified Shepp-Logan: (value, semi-axis a, semi-axis b, x0, y0, angle in degrees)
_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)

UNIFORM_DISK_RADIUS = 0.35  # fraction of the side length


def _grid(side, oversample):
    n = side * oversample
    # sample centres of the sub-pixels, in the [-1, 1] frame with y up
    t = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    return t[None, :], -t[:, None]


def _downsample(img, oversample):
    if oversample == 1:
        return img
    n = img.shape[0] // oversample
    return img.reshape(n, oversample, n, oversample).mean(axis=(1, 3))


def _ellipses(side, ellipses, oversample, scale_z=None):
    x, y = _grid(side, oversample)
    img = np.zeros((side * oversample,) * 2)
    for k, (value, a, b, x0, y0, phi) in enumerate(ellipses):
        if scale_z is not None:
            s = scale_z[k]
            if s <= 0:
                continue
            a, b = a * s, b * s
        phi = np.deg2rad(phi)
        c, s_ = np.cos(phi), np.sin(phi)
        xr = (x - x0) * c + (y - y0) * s_
        yr = -(x - x0) * s_ + (y - y0) * c
        img += value * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return np.clip(_downsample(img, oversample), 0.0, 1.0)


def shepp_logan(side, oversample=4):
    """Modified Shepp-Logan phantom with values in [0, 1]."""
    return _ellipses(side, _SHEPP_LOGAN, oversample)


def uniform_disk(side, radius=None, oversample=4):
    """Centred disk of value 1; ``radius`` in pixels, default ``0.35*side``."""
    if radius is None:
        radius = UNIFORM_DISK_RADIUS * side
    r = 2.0 * radius / side
    return _ellipses(side, ((1.0, r, r, 0.0, 0.0, 0.0),), oversample)


def random_disks(side, n_disks=8, seed=0, oversample=4):
    """A unit background disk holding ``n_disks`` random inclusions."""
    rng = np.random.default_rng(seed)
    ellipses = [(0.5, 0.85, 0.85, 0.0, 0.0, 0.0)]
    for _ in range(n_disks):
        rad = rng.uniform(0.05, 0.2)
        ang = rng.uniform(0, 2 * np.pi)
        dist = rng.uniform(0, 0.8 - rad)
        ellipses.append(
            (rng.uniform(-0.4, 0.5), rad, rad, dist * np.cos(ang), dist * np.sin(ang), 0.0)
        )
    return _ellipses(side, ellipses, oversample)


def _volume(side, n_slices, ellipses, oversample):
    out = np.empty((n_slices, side, side))
    z = (np.arange(n_slices) + 0.5) / n_slices * 2.0 - 1.0
    for k, zk in enumerate(z):
        # each ellipse becomes an ellipsoid whose third semi-axis equals b
        scale = [np.sqrt(max(0.0, 1.0 - (zk / b) ** 2)) for (_, _, b, _, _, _) in ellipses]
        out[k] = _ellipses(side, ellipses, oversample, scale_z=scale)
    return out


def gen_phantom(kind, side, n_slices=None, seed=0):
    """Build a phantom image, or a ``(n_slices, side, side)`` volume.

    Parameters
    ----------
    kind : {'shepp-logan', 'disks', 'uniform-disk'}
    side : int
        Image side in pixels, at least 16.
    n_slices : int, optional
        When given, an ellipsoidal 3D version is returned.
    seed : int
        Only used by ``'disks'``.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}; choose from {PHANTOM_KINDS}")
    if side < 16:
        raise ValueError(f"phantom side must be >= 16, got {side}")
    if kind == "shepp-logan":
        ellipses = _SHEPP_LOGAN
    elif kind == "uniform-disk":
        r = 2.0 * UNIFORM_DISK_RADIUS
        ellipses = ((1.0, r, r, 0.0, 0.0, 0.0),)
    if n_slices is None:
        if kind == "disks":
            return random_disks(side, seed=seed)
        return _ellipses(side, ellipses, 4)
    if n_slices < 1:
        raise ValueError(f"n_slices must be >= 1, got {n_slices}")
    if kind == "disks":
        base = random_disks(side, seed=seed)
        z = (np.arange(n_slices) + 0.5) / n_slices * 2.0 - 1.0
        return np.stack([base * np.sqrt(max(0.0, 1.0 - zk**2)) for zk in z])
    return _volume(side, n_slices, ellipses, 4)
