"""Sparse-view CT reconstruction by ADMM with total variation, patch
low-rank (nuclear norm) regularization and a score-based diffusion prior."""

from .admm import (
    AdmmConfig,
    AdmmState,
    ReconReport,
    admm_iterate,
    init_state,
    objective,
    preset_from_table2,
    reconstruct,
)
from .estimators import FBPReconstructor, TVLoRAReconstructor, check_sinogram
from .exceptions import FormatError, NumericalError
from .geometry import (
    ProjectionOperator,
    Sinogram,
    back_project,
    default_detector_count,
    fbp_reconstruct,
    forward_project,
    make_angles,
)
from .metrics import evaluate_volume, psnr, ssim
from .phantoms import gen_phantom
from .priors import (
    CallbackPrior,
    GaussianAnalyticPrior,
    GridScorePrior,
    NoOpPrior,
    ScorePrior,
    diffusion_denoise,
    make_schedule,
    reverse_em_step,
)
from .regularizers import PatchLayout, nuclear_norm, patch_fold, patch_unfold, shrink, svt

__version__ = "0.1.0"
