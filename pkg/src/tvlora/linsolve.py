"""The x-step linear system and its FFT-preconditioned CG solver.

The system matrix is

    M = A^T A + rho1 Dx^T Dx + rho2 Dy^T Dy + rho3 I

With periodic differences the regulariser part is diagonalised by the 2D
DFT.  ``A^T A`` is not circulant.  The preconditioner replaces it either by
T. Chan's optimal circulant approximation (the default) or by the scalar
``c_A = trace(A^T A) / (H W)``, which is the mean of the Chan eigenvalues.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .exceptions import NumericalError
from .geometry import ProjectionOperator

__all__ = [
    "XStepOperator",
    "CirculantPreconditioner",
    "apply_xstep_operator",
    "estimate_normal_trace",
    "circulant_normal_eigenvalues",
    "build_preconditioner",
    "pcg_solve",
    "PCGResult",
]


@dataclass(frozen=True)
class XStepOperator:
    """``A^T A + rho1 Dx^T Dx + rho2 Dy^T Dy + rho3 I`` as a matrix-free map.

    ``projector=None`` stands for ``A = 0``, in which case ``shape`` must be
    given.
    """

    projector: ProjectionOperator | None
    rho1: float
    rho2: float
    rho3: float
    shape: tuple | None = None

    def __post_init__(self):
        if self.shape is None:
            if self.projector is None:
                raise ValueError("shape is required when projector is None")
            object.__setattr__(self, "shape", self.projector.shape)
        elif self.projector is not None and tuple(self.shape) != self.projector.shape:
            raise ValueError("shape disagrees with the projector")
        object.__setattr__(self, "shape", tuple(self.shape))
        if min(self.rho1, self.rho2) < 0 or self.rho3 < 0:
            raise ValueError("penalties must be non-negative")

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise ValueError(f"image shape {x.shape} does not match operator {self.shape}")
        # periodic D^T D x = 2x - x[shift +1] - x[shift -1], fused for speed
        out = (self.rho3 + 2 * self.rho1 + 2 * self.rho2) * x
        if self.rho1:
            out -= self.rho1 * (np.roll(x, 1, axis=1) + np.roll(x, -1, axis=1))
        if self.rho2:
            out -= self.rho2 * (np.roll(x, 1, axis=0) + np.roll(x, -1, axis=0))
        if self.projector is not None:
            out += self.projector.normal(x)
        return out


def apply_xstep_operator(op: XStepOperator, x):
    return op(x)


def estimate_normal_trace(projector, n_probes=8, seed=0):
    """Hutchinson estimate of ``trace(A^T A) / n_pixels`` from Rademacher probes."""
    if projector is None:
        return 0.0
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_probes):
        z = rng.choice((-1.0, 1.0), size=projector.shape)
        ax = projector.apply(z)
        total += float(np.vdot(ax, ax))
    return total / (n_probes * z.size)


class CirculantPreconditioner:
    """Inverse of a DFT-diagonal operator, given its eigenvalues on the grid."""

    def __init__(self, eigenvalues):
        eig = np.asarray(eigenvalues, dtype=np.float64)
        if not np.all(eig > 0):
            raise NumericalError("preconditioner has non-positive eigenvalues", "precond")
        self.eigenvalues = eig
        # eigenvalues of a real symmetric circulant are Hermitian-symmetric,
        # so the half spectrum used by rfft2 carries all of them
        self._half = eig[:, : eig.shape[1] // 2 + 1]

    @property
    def shape(self):
        return self.eigenvalues.shape

    def __call__(self, r):
        return sfft.irfft2(sfft.rfft2(r) / self._half, s=self.shape)

    def apply_inverse(self, x):
        """Multiply by the approximated operator itself."""
        return sfft.irfft2(sfft.rfft2(x) * self._half, s=self.shape)


def circulant_normal_eigenvalues(projector, batch=64):
    """DFT eigenvalues of the Frobenius-nearest circulant to ``A^T A``.

    For ray weight rows ``a_r`` this is ``sum_r |fft2(a_r)|^2 / n_pixels``,
    non-negative by construction.
    """
    h, w = projector.shape
    eig = np.zeros((h, w))
    mat = projector.matrix
    for start in range(0, mat.shape[0], batch):
        rows = mat[start : start + batch].toarray().reshape(-1, h, w)
        eig += np.sum(np.abs(np.fft.fft2(rows)) ** 2, axis=0)
    return eig / (h * w)


def build_preconditioner(op: XStepOperator, c_a=None, mode=None, n_probes=8, seed=0):
    """Circulant preconditioner for ``op``.

    ``mode='chan'`` approximates ``A^T A`` by its optimal circulant;
    ``mode='scalar'`` by ``c_a``, which defaults to a probed trace estimate.
    Passing ``c_a`` alone selects the scalar mode.
    """
    if mode is None:
        mode = "scalar" if c_a is not None else "chan"
    h, w = op.shape
    lam_x = 4.0 * np.sin(np.pi * np.arange(w) / w) ** 2
    lam_y = 4.0 * np.sin(np.pi * np.arange(h) / h) ** 2
    eig = op.rho3 + op.rho1 * lam_x[None, :] + op.rho2 * lam_y[:, None]
    if mode == "chan":
        if op.projector is not None:
            eig = eig + circulant_normal_eigenvalues(op.projector)
        if op.rho3 <= 0 and op.projector is None:
            raise ValueError("rho3 must be positive when A = 0")
    elif mode == "scalar":
        if c_a is None:
            c_a = estimate_normal_trace(op.projector, n_probes=n_probes, seed=seed)
        if c_a < 0:
            raise ValueError(f"c_a must be >= 0, got {c_a}")
        if op.rho3 + c_a <= 0:
            raise ValueError("rho3 + c_a must be positive")
        eig = eig + c_a
    else:
        raise ValueError(f"unknown preconditioner mode {mode!r}")
    return CirculantPreconditioner(eig)


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list

    def __iter__(self):
        # unpacks as (x, iterations, final relative residual)
        return iter((self.x, self.iterations, self.residual))


def pcg_solve(op, rhs, x0=None, max_iter=100, tol=1e-6, precond=None):
    """Preconditioned conjugate gradients for the SPD map ``op``.

    Stops once ``||r|| / ||rhs|| <= tol`` or after ``max_iter`` iterations.
    At least one iteration runs whenever the starting residual is nonzero.
    ``history`` holds the relative residual before each iteration and after
    the last one.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 0:
        raise ValueError(f"max_iter must be >= 0, got {max_iter}")
    rhs = np.asarray(rhs, dtype=np.float64)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != rhs.shape:
        raise ValueError(f"x0 shape {x.shape} does not match rhs {rhs.shape}")
    if not (np.all(np.isfinite(rhs)) and np.all(np.isfinite(x))):
        raise NumericalError("non-finite right-hand side or starting point", "pcg")

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return PCGResult(np.zeros_like(rhs), 0, 0.0, [0.0])
    r = rhs - op(x)
    rnorm = np.linalg.norm(r)
    history = [rnorm / bnorm]
    if rnorm == 0:
        return PCGResult(x, 0, 0.0, history)

    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = np.vdot(r, z)
    it = 0
    while it < max_iter:
        q = op(p)
        pq = np.vdot(p, q)
        if not np.isfinite(pq) or pq <= 0:
            raise NumericalError(f"curvature p^T M p = {pq} at iteration {it}", "pcg")
        step = rz / pq
        x += step * p
        r -= step * q
        it += 1
        rnorm = np.linalg.norm(r)
        history.append(rnorm / bnorm)
        if not np.isfinite(rnorm):
            raise NumericalError(f"residual became non-finite at iteration {it}", "pcg")
        if rnorm <= tol * bnorm:
            break
        z = precond(r) if precond is not None else r
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return PCGResult(x, it, history[-1], history)
