"""ADMM with anisotropic TV, patch nuclear norm and a diffusion denoise step.

Splitting ``v_x = Dx x``, ``v_y = Dy x``, ``Z = P(x)`` with scaled duals
``u1, u2, u3``, each outer iteration runs

1. denoise: ``x' = reverse diffusion steps applied to x``
2. x-step: PCG on ``(A^T A + rho1 Dx^T Dx + rho2 Dy^T Dy + rho3 I) x =
   A^T b + rho1 Dx^T (v_x + u1) + rho2 Dy^T (v_y + u2) + rho3 fold(Z + u3)``
   warm-started at ``x'``
3. v-step: ``v_x = shrink(Dx x - u1, alpha/rho1)``, same for ``y``
4. Z-step: ``Z = svt(P(x) - u3, beta/rho3)``
5. duals: ``u1 += v_x - Dx x``, ``u2 += v_y - Dy x``, ``u3 += Z - P(x)``
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .exceptions import NumericalError
from .geometry import ProjectionOperator, Sinogram, fbp_reconstruct
from .linsolve import XStepOperator, build_preconditioner, pcg_solve
from .metrics import psnr
from .priors import (
    N_STEPS,
    SIGMA_MAX,
    SIGMA_MIN,
    NoOpPrior,
    diffusion_denoise,
    make_schedule,
)
from .regularizers import (
    PatchLayout,
    grad_x,
    grad_x_adjoint,
    grad_y,
    grad_y_adjoint,
    nuclear_norm,
    patch_fold,
    patch_unfold,
    shrink,
    svt,
)

__all__ = [
    "AdmmConfig",
    "AdmmState",
    "ReconReport",
    "VIEW_PRESETS",
    "PHASES",
    "preset_from_table2",
    "objective",
    "init_state",
    "admm_iterate",
    "reconstruct",
]

PHASES = ("denoise", "x", "v", "z", "u")

# n_view -> (rho_0, rho_1, lambda_TV, lambda_LoRA)
VIEW_PRESETS = {
    8: (10.0, 1.0, 0.04, 0.02),
    4: (10.0, 3.0, 0.04, 0.02),
    2: (10.0, 3.0, 0.04, 0.02),
}


@dataclass
class AdmmConfig:
    """Solver hyperparameters.

    ``alpha`` and ``beta`` weight the TV and nuclear-norm terms; ``rho1``,
    ``rho2`` are the penalties of the two gradient constraints and ``rho3``
    that of the patch constraint.
    """

    alpha: float = 0.04
    beta: float = 0.02
    rho1: float = 10.0
    rho2: float = 10.0
    rho3: float = 1.0
    n_outer: int = 200
    pcg_inner: int = 1
    patch_size: int = 16
    patch_stride: int = 16
    sigma_min: float = SIGMA_MIN
    sigma_max: float = SIGMA_MAX
    n_steps: int = N_STEPS
    seed: int = 0
    fft_precond: bool = True
    precond_mode: str = "chan"
    stop_tol: float | None = None

    def __post_init__(self):
        for name in ("alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("rho1", "rho2", "rho3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.n_outer < 0:
            raise ValueError("n_outer must be >= 0")
        if self.pcg_inner < 1:
            raise ValueError("pcg_inner must be >= 1")
        if self.patch_size < 1 or self.patch_stride < 1:
            raise ValueError("patch_size and patch_stride must be >= 1")
        if not 0 < self.sigma_min < self.sigma_max:
            raise ValueError("need 0 < sigma_min < sigma_max")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.precond_mode not in ("chan", "scalar"):
            raise ValueError(f"unknown precond_mode {self.precond_mode!r}")
        if self.stop_tol is not None and not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")

    def layout(self, shape):
        p, s = self.patch_size, self.patch_stride
        return PatchLayout(tuple(shape), (p, p), (s, s))

    def schedule(self):
        return make_schedule(self.sigma_min, self.sigma_max, self.n_steps)

    def replace(self, **changes):
        params = asdict(self)
        unknown = set(changes) - set(params)
        if unknown:
            raise TypeError(f"unknown AdmmConfig fields: {sorted(unknown)}")
        params.update(changes)
        return AdmmConfig(**params)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def preset_from_table2(n_view, **overrides):
    """Tuned settings for 2, 4 or 8 views.

    ``rho_0`` is used for both gradient penalties and ``rho_1`` for the
    patch penalty; ``lambda_TV`` and ``lambda_LoRA`` become ``alpha`` and
    ``beta``.
    """
    if n_view not in VIEW_PRESETS:
        raise ValueError(f"no preset for n_view={n_view}; available: {sorted(VIEW_PRESETS)}")
    rho0, rho1, lam_tv, lam_lora = VIEW_PRESETS[n_view]
    cfg = AdmmConfig(alpha=lam_tv, beta=lam_lora, rho1=rho0, rho2=rho0, rho3=rho1)
    return cfg.replace(**overrides) if overrides else cfg


@dataclass
class AdmmState:
    x: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    z: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    k: int = 0
    history: list = field(default_factory=list)

    def copy(self):
        return AdmmState(
            *(getattr(self, n).copy() for n in ("x", "vx", "vy", "z", "u1", "u2", "u3")),
            k=self.k,
            history=[dict(h) for h in self.history],
        )


def init_state(x0, layout: PatchLayout):
    """Start at ``x0`` with all splitting variables and duals at zero."""
    x0 = np.array(x0, dtype=np.float64)
    zeros = np.zeros_like(x0)
    zmat = np.zeros(layout.matrix_shape)
    return AdmmState(x0, zeros.copy(), zeros.copy(), zmat, zeros.copy(), zeros.copy(), zmat.copy())


def objective(x, sino: Sinogram, op: ProjectionOperator, cfg: AdmmConfig, layout=None):
    """``0.5 ||Ax - b||^2 + alpha (|Dx x|_1 + |Dy x|_1) + beta ||P(x)||_*``."""
    x = np.asarray(x, dtype=np.float64)
    resid = op.apply(x) - sino.data
    value = 0.5 * float(np.vdot(resid, resid))
    if cfg.alpha:
        value += cfg.alpha * float(np.abs(grad_x(x)).sum() + np.abs(grad_y(x)).sum())
    if cfg.beta:
        layout = layout or cfg.layout(x.shape)
        value += cfg.beta * nuclear_norm(patch_unfold(x, layout))
    return value


class _Workspace:
    """Quantities fixed for a whole run: system operator, preconditioner, A^T b."""

    def __init__(self, sino, op, cfg, prior):
        self.layout = cfg.layout(op.shape)
        self.xop = XStepOperator(op, cfg.rho1, cfg.rho2, cfg.rho3)
        self.precond = build_preconditioner(self.xop, mode=cfg.precond_mode) if cfg.fft_precond else None
        self.atb = op.apply_adjoint(sino.data)
        self.schedule = cfg.schedule()
        self.prior = prior if prior is not None else NoOpPrior()


def _check_finite(arrays, phase):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalError("non-finite values in solver state", phase)


def admm_iterate(state: AdmmState, sino, op, cfg: AdmmConfig, prior=None, reference=None,
                 workspace=None, noise=True):
    """Advance ``state`` by one outer iteration and return the new state.

    The input state is not modified.
    """
    ws = workspace or _Workspace(sino, op, cfg, prior)
    st = state.copy()
    times = {}

    t0 = time.perf_counter()
    total = max(cfg.n_outer, st.k + 1)
    x_warm = diffusion_denoise(st.x, st.k, total, ws.schedule, ws.prior, seed=cfg.seed, noise=noise)
    _check_finite([x_warm], "denoise")
    t1 = time.perf_counter()
    times["denoise"] = t1 - t0

    rhs = (
        ws.atb
        + cfg.rho1 * grad_x_adjoint(st.vx + st.u1)
        + cfg.rho2 * grad_y_adjoint(st.vy + st.u2)
        + cfg.rho3 * patch_fold(st.z + st.u3, ws.layout)
    )
    result = pcg_solve(ws.xop, rhs, x_warm, max_iter=cfg.pcg_inner, tol=1e-12, precond=ws.precond)
    x = result.x
    _check_finite([x], "x")
    t2 = time.perf_counter()
    times["x"] = t2 - t1

    dx, dy = grad_x(x), grad_y(x)
    vx = shrink(dx - st.u1, cfg.alpha / cfg.rho1)
    vy = shrink(dy - st.u2, cfg.alpha / cfg.rho2)
    t3 = time.perf_counter()
    times["v"] = t3 - t2

    px = patch_unfold(x, ws.layout)
    z = svt(px - st.u3, cfg.beta / cfg.rho3)
    t4 = time.perf_counter()
    times["z"] = t4 - t3

    u1 = st.u1 + vx - dx
    u2 = st.u2 + vy - dy
    u3 = st.u3 + z - px
    _check_finite([vx, vy, z, u1, u2, u3], "u")
    t5 = time.perf_counter()
    times["u"] = t5 - t4

    record = {
        "iteration": st.k + 1,
        "objective": objective(x, sino, op, cfg, ws.layout),
        "r_vx": float(np.linalg.norm(vx - dx)),
        "r_vy": float(np.linalg.norm(vy - dy)),
        "r_z": float(np.linalg.norm(z - px)),
        "pcg_iters": result.iterations,
    }
    if reference is not None:
        record["psnr"] = psnr(x, reference, 1.0)
    record.update({f"t_{p}": times[p] for p in PHASES})
    st.history.append(record)
    st.x, st.vx, st.vy, st.z, st.u1, st.u2, st.u3 = x, vx, vy, z, u1, u2, u3
    st.k += 1
    return st


@dataclass
class ReconReport:
    image: np.ndarray
    iterations: int
    objective: list
    residuals: dict
    psnr: list
    timings: dict
    history: list
    state: AdmmState | None = None
    init_image: np.ndarray | None = None


def initial_image(sino, op, cfg, prior):
    """FBP start without a prior, ``N(0, sigma_max^2)`` noise with one."""
    if prior is None or isinstance(prior, NoOpPrior):
        return fbp_reconstruct(sino, op.shape, op)
    rng = np.random.default_rng([cfg.seed, 2**31 - 1])
    return cfg.sigma_max * rng.standard_normal(op.shape)


def reconstruct(sino, op, cfg: AdmmConfig, prior=None, reference=None, state=None,
                callback=None, noise=True):
    """Run ``cfg.n_outer`` outer iterations (fewer if ``stop_tol`` triggers).

    ``state`` resumes from a checkpoint; otherwise the run starts from
    :func:`initial_image`.  ``callback(state)`` is called after every
    iteration.
    """
    if sino.data.shape != op.sino_shape:
        raise ValueError(f"sinogram shape {sino.data.shape} does not match operator {op.sino_shape}")
    ws = _Workspace(sino, op, cfg, prior)
    if state is None:
        x0 = initial_image(sino, op, cfg, ws.prior)
        state = init_state(x0, ws.layout)
    init_img = state.x.copy()
    while state.k < cfg.n_outer:
        state = admm_iterate(state, sino, op, cfg, ws.prior, reference, ws, noise=noise)
        if callback is not None:
            callback(state)
        last = state.history[-1]
        if cfg.stop_tol is not None and max(last["r_vx"], last["r_vy"], last["r_z"]) < cfg.stop_tol:
            break
    hist = state.history
    return ReconReport(
        image=state.x.copy(),
        iterations=state.k,
        objective=[h["objective"] for h in hist],
        residuals={key: [h[key] for h in hist] for key in ("r_vx", "r_vy", "r_z")},
        psnr=[h["psnr"] for h in hist if "psnr" in h],
        timings={p: float(sum(h[f"t_{p}"] for h in hist)) for p in PHASES},
        history=hist,
        state=state,
        init_image=init_img,
    )
