"""Parallel-beam projection geometry.

Images are ``(H, W)`` float arrays indexed ``img[row, col]``.  The physical
frame puts the origin at the image centre with ``x`` growing to the right
and ``y`` growing upwards, so pixel ``(i, j)`` sits at
``x = j - (W - 1) / 2``, ``y = (H - 1) / 2 - i``.  A ray at angle ``theta``
and detector offset ``s`` is the line ``x cos(theta) + y sin(theta) = s``.
Detector cells are one pixel wide and centred on the rotation axis.

Line integrals use Joseph's method: the ray is stepped one pixel at a time
along its dominant axis and the image is linearly interpolated across the
other axis.  The weights are assembled once into a sparse matrix, so the
back projection is the exact transpose of the forward projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .validation import check_image

__all__ = [
    "Sinogram",
    "ProjectionOperator",
    "default_detector_count",
    "make_angles",
    "forward_project",
    "back_project",
    "ramp_filter",
    "fbp_reconstruct",
    "add_projection_noise",
    "circular_mask",
]


def default_detector_count(side: int) -> int:
    """Detector cells needed to cover the image diagonal, ``ceil(side*sqrt(2))``."""
    if side < 2:
        raise ValueError(f"side must be >= 2, got {side}")
    return math.ceil(side * math.sqrt(2))


def make_angles(n_view: int) -> np.ndarray:
    """Uniform projection angles ``k*pi/n_view`` for ``k = 0..n_view-1``."""
    n_view = int(n_view)
    if n_view < 1:
        raise ValueError(f"n_view must be >= 1, got {n_view}")
    return np.array([k * math.pi / n_view for k in range(n_view)], dtype=np.float64)


@dataclass
class Sinogram:
    """Angle-major projection data.

    Attributes
    ----------
    angles : ndarray of shape (n_view,)
        Projection angles in radians.
    data : ndarray of shape (n_view, n_det)
        Line integrals, one row per angle.
    """

    angles: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=np.float64).ravel()
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] != self.angles.size:
            raise ValueError(
                f"sinogram data of shape {self.data.shape} does not match "
                f"{self.angles.size} angles"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sinogram contains non-finite values")

    @property
    def n_view(self) -> int:
        return self.angles.size

    @property
    def n_det(self) -> int:
        return self.data.shape[1]

    def copy(self) -> "Sinogram":
        return Sinogram(self.angles.copy(), self.data.copy())


def _joseph_matrix(shape, angles, n_det):
    height, width = shape
    det = np.arange(n_det) - (n_det - 1) / 2.0
    rows, cols, vals = [], [], []
    for k, theta in enumerate(angles):
        c, s = math.cos(theta), math.sin(theta)
        if abs(c) >= abs(s):
            # step over image rows, interpolate across columns
            i = np.arange(height)
            y = (height - 1) / 2.0 - i
            x = (det[:, None] - y[None, :] * s) / c
            u = x + (width - 1) / 2.0
            j0 = np.floor(u).astype(np.int64)
            frac = u - j0
            weight = 1.0 / abs(c)
            ii = np.broadcast_to(i[None, :], u.shape)
            dd = np.broadcast_to(np.arange(n_det)[:, None], u.shape)
            for jj, w in ((j0, 1.0 - frac), (j0 + 1, frac)):
                ok = (jj >= 0) & (jj < width) & (w > 0)
                rows.append(k * n_det + dd[ok])
                cols.append(ii[ok] * width + jj[ok])
                vals.append(weight * w[ok])
        else:
            # step over image columns, interpolate across rows
            j = np.arange(width)
            x = j - (width - 1) / 2.0
            y = (det[:, None] - x[None, :] * c) / s
            v = (height - 1) / 2.0 - y
            i0 = np.floor(v).astype(np.int64)
            frac = v - i0
            weight = 1.0 / abs(s)
            jj = np.broadcast_to(j[None, :], v.shape)
            dd = np.broadcast_to(np.arange(n_det)[:, None], v.shape)
            for ii, w in ((i0, 1.0 - frac), (i0 + 1, frac)):
                ok = (ii >= 0) & (ii < height) & (w > 0)
                rows.append(k * n_det + dd[ok])
                cols.append(ii[ok] * width + jj[ok])
                vals.append(weight * w[ok])
    n_rows = len(angles) * n_det
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, height * width),
    )
    return mat.tocsr()


@dataclass(frozen=True, eq=False)
class ProjectionOperator:
    """Matrix-free view of the parallel-beam system matrix ``A``.

    Parameters
    ----------
    shape : tuple of int
        Image shape ``(H, W)``.
    angles : array_like
        Projection angles in radians.
    n_det : int, optional
        Detector cell count; defaults to ``ceil(max(H, W) * sqrt(2))``.
    """

    shape: tuple
    angles: np.ndarray
    n_det: int | None = None
    _matrix: sp.csr_matrix = field(init=False, repr=False)
    _matrix_t: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 2 or min(shape) < 2:
            raise ValueError(f"image shape must be 2D with sides >= 2, got {shape}")
        angles = np.asarray(self.angles, dtype=np.float64).ravel()
        if angles.size < 1:
            raise ValueError("at least one projection angle is required")
        n_det = self.n_det if self.n_det is not None else default_detector_count(max(shape))
        if n_det < 1:
            raise ValueError(f"n_det must be >= 1, got {n_det}")
        mat = _joseph_matrix(shape, angles, int(n_det))
        angles.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "n_det", int(n_det))
        object.__setattr__(self, "_matrix", mat)
        object.__setattr__(self, "_matrix_t", mat.T.tocsr())

    @classmethod
    def for_views(cls, side: int, n_view: int, n_det: int | None = None):
        """Square ``side x side`` geometry with ``n_view`` uniform angles."""
        return cls((side, side), make_angles(n_view), n_det)

    @property
    def n_view(self) -> int:
        return self.angles.size

    @property
    def sino_shape(self) -> tuple:
        return (self.n_view, self.n_det)

    @property
    def matrix(self) -> sp.csr_matrix:
        """The assembled sparse system matrix (read-only use)."""
        return self._matrix

    def apply(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != self.shape:
            raise ValueError(f"image shape {img.shape} does not match operator {self.shape}")
        return (self._matrix @ img.ravel()).reshape(self.sino_shape)

    def apply_adjoint(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        if data.shape != self.sino_shape:
            raise ValueError(
                f"sinogram shape {data.shape} does not match operator {self.sino_shape}"
            )
        return (self._matrix_t @ data.ravel()).reshape(self.shape)

    def normal(self, img: np.ndarray) -> np.ndarray:
        """``A^T A img``."""
        return self.apply_adjoint(self.apply(img))


def forward_project(op: ProjectionOperator, img) -> Sinogram:
    img = check_image(img)
    return Sinogram(op.angles.copy(), op.apply(img))


def back_project(op: ProjectionOperator, sino: Sinogram) -> np.ndarray:
    if sino.n_view != op.n_view or not np.array_equal(sino.angles, op.angles):
        raise ValueError("sinogram angles do not match the operator")
    return op.apply_adjoint(sino.data)


def ramp_filter(data: np.ndarray) -> np.ndarray:
    """Ram-Lak filter each row of ``data`` (unit detector spacing).

    The ramp is taken as the DFT of the band-limited spatial kernel
    (1/4 at zero, ``-1/(pi n)^2`` at odd lags) on a zero-padded grid, which
    keeps the DC term correct.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = data.shape[-1]
    size = max(64, 1 << int(math.ceil(math.log2(2 * n))))
    lag = np.concatenate([np.arange(0, size // 2 + 1), np.arange(-size // 2 + 1, 0)])
    kernel = np.zeros(size)
    kernel[0] = 0.25
    odd = lag % 2 == 1
    kernel[odd] = -1.0 / (math.pi * lag[odd]) ** 2
    response = np.real(np.fft.rfft(kernel))
    spectrum = np.fft.rfft(data, n=size, axis=-1)
    return np.fft.irfft(spectrum * response, n=size, axis=-1)[..., :n]


def fbp_reconstruct(sino: Sinogram, shape, op: ProjectionOperator | None = None) -> np.ndarray:
    """Filtered back-projection with an unwindowed ramp.

    ``op`` may be passed to reuse an already assembled operator with the
    same geometry.
    """
    shape = tuple(int(n) for n in shape)
    if op is None:
        op = ProjectionOperator(shape, sino.angles, sino.n_det)
    elif op.shape != shape or op.n_det != sino.n_det:
        raise ValueError("operator geometry does not match the sinogram")
    filtered = ramp_filter(sino.data)
    return op.apply_adjoint(filtered) * (math.pi / sino.n_view)


def add_projection_noise(sino: Sinogram, sigma: float, seed: int | None = None) -> Sinogram:
    """Return ``sino`` plus i.i.d. ``N(0, sigma^2)`` noise."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return sino.copy()
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(sino.data.shape)
    return Sinogram(sino.angles.copy(), sino.data + sigma * noise)


def circular_mask(shape) -> np.ndarray:
    """Boolean mask of the inscribed field of view."""
    height, width = shape
    yy = np.arange(height)[:, None] - (height - 1) / 2.0
    xx = np.arange(width)[None, :] - (width - 1) / 2.0
    radius = min(height, width) / 2.0
    return xx**2 + yy**2 <= radius**2
