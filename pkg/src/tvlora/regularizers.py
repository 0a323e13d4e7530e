"""Proximal building blocks: periodic finite differences, soft thresholding,
patch unfolding and singular value thresholding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import NumericalError

__all__ = [
    "grad_x",
    "grad_y",
    "grad_x_adjoint",
    "grad_y_adjoint",
    "shrink",
    "PatchLayout",
    "patch_unfold",
    "patch_fold",
    "svt",
    "nuclear_norm",
]


# Periodic forward differences.  Columns are the x direction, rows the y
# direction; the wrap-around keeps D^T D circulant.

def grad_x(img):
    return np.roll(img, -1, axis=1) - img


def grad_y(img):
    return np.roll(img, -1, axis=0) - img


def grad_x_adjoint(field):
    return np.roll(field, 1, axis=1) - field


def grad_y_adjoint(field):
    return np.roll(field, 1, axis=0) - field


def shrink(v, tau):
    """Soft threshold ``sign(v) * max(|v| - tau, 0)``, the prox of ``tau*||.||_1``."""
    if tau < 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    v = np.asarray(v, dtype=np.float64)
    if tau == 0:
        return v.copy()
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


@dataclass(frozen=True)
class PatchLayout:
    """Patch grid over an ``(H, W)`` image.

    Images whose sides are not covered exactly by the grid are zero-padded
    on the bottom/right before unfolding and cropped after folding.
    """

    image_shape: tuple
    patch_shape: tuple = (16, 16)
    stride: tuple | None = None

    def __post_init__(self):
        image_shape = tuple(int(n) for n in self.image_shape)
        patch_shape = tuple(int(n) for n in self.patch_shape)
        stride = patch_shape if self.stride is None else tuple(int(n) for n in self.stride)
        if len(image_shape) != 2 or len(patch_shape) != 2 or len(stride) != 2:
            raise ValueError("image_shape, patch_shape and stride must be pairs")
        if min(patch_shape) < 1 or min(stride) < 1:
            raise ValueError(f"patch sizes and strides must be >= 1, got {patch_shape}, {stride}")
        if min(image_shape) < 1:
            raise ValueError(f"invalid image shape {image_shape}")
        object.__setattr__(self, "image_shape", image_shape)
        object.__setattr__(self, "patch_shape", patch_shape)
        object.__setattr__(self, "stride", stride)

    @property
    def grid(self):
        """Number of patches along (rows, cols)."""
        return tuple(
            1 if n <= p else math.ceil((n - p) / s) + 1
            for n, p, s in zip(self.image_shape, self.patch_shape, self.stride)
        )

    @property
    def padded_shape(self):
        return tuple(
            (g - 1) * s + p for g, p, s in zip(self.grid, self.patch_shape, self.stride)
        )

    @property
    def matrix_shape(self):
        """``(pixels per patch, number of patches)``."""
        return (self.patch_shape[0] * self.patch_shape[1], self.grid[0] * self.grid[1])

    @property
    def overlapping(self):
        return any(s < p for p, s in zip(self.patch_shape, self.stride))


def _pad(img, layout):
    ph, pw = layout.padded_shape
    h, w = layout.image_shape
    if (ph, pw) == (h, w):
        return img
    out = np.zeros((ph, pw))
    out[:h, :w] = img
    return out


def patch_unfold(img, layout: PatchLayout):
    """Stack the patches of ``img`` as columns, patch grid in row-major order."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != layout.image_shape:
        raise ValueError(f"image shape {img.shape} does not match layout {layout.image_shape}")
    padded = _pad(img, layout)
    (p0, p1), (s0, s1) = layout.patch_shape, layout.stride
    windows = sliding_window_view(padded, (p0, p1))[::s0, ::s1]
    return windows.reshape(-1, p0 * p1).T.copy()


def patch_fold(mat, layout: PatchLayout, average=True):
    """Scatter patch columns back into an image.

    With ``average=True`` pixels covered by several patches get the mean of
    their copies; otherwise the copies are summed, which is the adjoint of
    :func:`patch_unfold`.  The two coincide for non-overlapping layouts.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape != layout.matrix_shape:
        raise ValueError(f"patch matrix shape {mat.shape} does not match layout {layout.matrix_shape}")
    (p0, p1), (s0, s1) = layout.patch_shape, layout.stride
    g0, g1 = layout.grid
    out = np.zeros(layout.padded_shape)
    patches = mat.T.reshape(g0, g1, p0, p1)
    if not layout.overlapping:
        view = out[: g0 * s0, : g1 * s1].reshape(g0, s0, g1, s1)[:, :p0, :, :p1]
        view[...] = patches.transpose(0, 2, 1, 3)
    else:
        count = np.zeros(layout.padded_shape)
        for a in range(g0):
            for b in range(g1):
                out[a * s0 : a * s0 + p0, b * s1 : b * s1 + p1] += patches[a, b]
                count[a * s0 : a * s0 + p0, b * s1 : b * s1 + p1] += 1.0
        if average:
            out /= count
    h, w = layout.image_shape
    return out[:h, :w].copy()


def svt(mat, tau):
    """Singular value thresholding, the prox of ``tau*||.||_*``."""
    if tau < 0:
        raise ValueError(f"threshold must be >= 0, got {tau}")
    mat = np.asarray(mat, dtype=np.float64)
    if not np.all(np.isfinite(mat)):
        raise NumericalError(f"svt input {mat.shape[0]}x{mat.shape[1]} has non-finite entries", "svt")
    if tau == 0:
        return mat.copy()
    try:
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed on a {mat.shape[0]}x{mat.shape[1]} matrix: {exc}", "svt")
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    return (u[:, keep] * s[keep]) @ vt[keep]


def nuclear_norm(mat):
    return float(np.linalg.svd(np.asarray(mat, dtype=np.float64), compute_uv=False).sum())
