"""scikit-learn style wrappers around the reconstruction functions.

A "sample" here is one sinogram, either a :class:`~tvlora.geometry.Sinogram`
or a plain ``(n_view, n_det)`` array whose angles are assumed uniform
(``k*pi/n_view``).  ``transform`` maps a list of sinograms to a stack of
images.  The estimators hold no learned state beyond the cached projector
and, for the iterative method, the report of the last ``fit``.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .admm import AdmmConfig, preset_from_table2, reconstruct
from .geometry import ProjectionOperator, Sinogram, fbp_reconstruct, make_angles
from .metrics import psnr
from .priors import NoOpPrior, ScorePrior
from .validation import check_image

__all__ = ["check_sinogram", "infer_image_side", "FBPReconstructor", "TVLoRAReconstructor"]


def check_sinogram(sino, name="sinogram") -> Sinogram:
    """Coerce ``sino`` to a validated :class:`Sinogram`."""
    if isinstance(sino, Sinogram):
        return sino
    data = check_image(sino, name, min_side=1)
    return Sinogram(make_angles(data.shape[0]), data)


def infer_image_side(n_det):
    """Largest square side whose default detector count is ``n_det``."""
    side = int(n_det / math.sqrt(2)) + 1
    while side > 1 and math.ceil(side * math.sqrt(2)) > n_det:
        side -= 1
    if math.ceil(side * math.sqrt(2)) != n_det:
        raise ValueError(f"no square image has {n_det} default detector cells; pass image_shape")
    return side


def _as_list(X):
    if isinstance(X, Sinogram) or (isinstance(X, np.ndarray) and X.ndim == 2):
        return [X]
    return list(X)


class _ReconBase(TransformerMixin, BaseEstimator):
    def _shape_for(self, sino):
        if self.image_shape is not None:
            return tuple(int(v) for v in self.image_shape)
        if getattr(self, "_ref_shape", None) is not None:
            return self._ref_shape
        side = infer_image_side(sino.n_det)
        return (side, side)

    def _operator(self, sino):
        shape = self._shape_for(sino)
        key = (shape, sino.n_det, tuple(sino.angles))
        cache = self.__dict__.setdefault("_op_cache", {})
        if key not in cache:
            cache[key] = ProjectionOperator(shape, sino.angles, sino.n_det)
        return cache[key]

    def fit(self, X, y=None):
        raise NotImplementedError

    def transform(self, X):
        """Reconstruct each sinogram in ``X``; returns ``(n, H, W)``."""
        check_is_fitted(self, "n_features_in_")
        return np.stack([self._reconstruct_one(check_sinogram(s))[0] for s in _as_list(X)])

    def score(self, X, y):
        """Mean PSNR (dB, peak 1) of the reconstructions of ``X`` against ``y``."""
        images = self.transform(X)
        y = np.asarray(y, dtype=np.float64).reshape(images.shape)
        return float(np.mean([psnr(a, b) for a, b in zip(images, y)]))


class FBPReconstructor(_ReconBase):
    """Filtered back-projection with a Ram-Lak filter.

    Parameters
    ----------
    image_shape : tuple of int, optional
        Output ``(H, W)``.  Inferred from the detector count when omitted.
    """

    def __init__(self, image_shape=None):
        self.image_shape = image_shape

    def fit(self, X, y=None):
        sino = check_sinogram(_as_list(X)[0])
        self._operator(sino)
        self.n_features_in_ = sino.data.size
        return self

    def _reconstruct_one(self, sino):
        op = self._operator(sino)
        return fbp_reconstruct(sino, op.shape, op), None


class TVLoRAReconstructor(_ReconBase):
    """ADMM reconstruction with TV, patch nuclear-norm and score-prior terms.

    Parameters mirror :class:`~tvlora.admm.AdmmConfig`; ``prior`` is a
    :class:`~tvlora.priors.ScorePrior` (``None`` means no denoising step).

    Attributes
    ----------
    image_ : ndarray
        Reconstruction of the sinogram passed to ``fit``.
    report_ : ReconReport
        Objective, residual, timing and PSNR history of that run.
    """

    def __init__(self, alpha=0.04, beta=0.02, rho1=10.0, rho2=10.0, rho3=1.0, n_outer=200,
                 pcg_inner=1, patch_size=16, patch_stride=16, sigma_min=0.01, sigma_max=50.0,
                 n_steps=2000, seed=0, fft_precond=True, precond_mode="chan", stop_tol=None,
                 prior=None, image_shape=None):
        self.alpha = alpha
        self.beta = beta
        self.rho1 = rho1
        self.rho2 = rho2
        self.rho3 = rho3
        self.n_outer = n_outer
        self.pcg_inner = pcg_inner
        self.patch_size = patch_size
        self.patch_stride = patch_stride
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.n_steps = n_steps
        self.seed = seed
        self.fft_precond = fft_precond
        self.precond_mode = precond_mode
        self.stop_tol = stop_tol
        self.prior = prior
        self.image_shape = image_shape

    @classmethod
    def from_preset(cls, n_view, **params):
        """Estimator with the tuned settings for 2, 4 or 8 views."""
        cfg = preset_from_table2(n_view)
        base = {k: getattr(cfg, k) for k in ("alpha", "beta", "rho1", "rho2", "rho3")}
        base.update(params)
        return cls(**base)

    def solver_config(self) -> AdmmConfig:
        names = AdmmConfig.field_names()
        return AdmmConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def _prior(self):
        if self.prior is None:
            return NoOpPrior()
        if not isinstance(self.prior, ScorePrior):
            raise TypeError(f"prior must be a ScorePrior, got {type(self.prior).__name__}")
        return self.prior

    def _reconstruct_one(self, sino, reference=None):
        op = self._operator(sino)
        report = reconstruct(sino, op, self.solver_config(), prior=self._prior(),
                             reference=reference)
        return report.image, report

    def fit(self, X, y=None):
        """Reconstruct one sinogram; ``y`` (optional) is a reference image
        whose PSNR is tracked per iteration."""
        sino = check_sinogram(X if not isinstance(X, (list, tuple)) else X[0])
        ref = None
        if y is not None:
            ref = check_image(y, "reference")
            self._ref_shape = ref.shape
        self.image_, self.report_ = self._reconstruct_one(sino, ref)
        self.n_features_in_ = sino.data.size
        return self
