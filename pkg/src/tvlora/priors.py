"""Variance-exploding diffusion priors and the Euler-Maruyama reverse sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalError

__all__ = [
    "NoiseSchedule",
    "make_schedule",
    "ScorePrior",
    "NoOpPrior",
    "GaussianAnalyticPrior",
    "GridScorePrior",
    "CallbackPrior",
    "forward_perturb",
    "reverse_em_step",
    "step_blocks",
    "diffusion_denoise",
    "SIGMA_MIN",
    "SIGMA_MAX",
    "N_STEPS",
    "LAMBDA_DIFF",
]

SIGMA_MIN = 0.01
SIGMA_MAX = 50.0
N_STEPS = 2000

# Weight of the -log p(x) term in the joint objective.  It has no numeric
# value and no operational role: the prior only acts through the denoise
# step, so the objective reported by the solver omits that term.
LAMBDA_DIFF = None


@dataclass(frozen=True)
class NoiseSchedule:
    """Geometric noise levels ``sigmas[i] = sigma_min (sigma_max/sigma_min)^(i/N)``."""

    sigma_min: float
    sigma_max: float
    n_steps: int
    sigmas: np.ndarray

    def __len__(self):
        return self.n_steps + 1


def make_schedule(sigma_min=SIGMA_MIN, sigma_max=SIGMA_MAX, n_steps=N_STEPS):
    if not 0 < sigma_min < sigma_max:
        raise ValueError(f"need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    i = np.arange(n_steps + 1)
    sigmas = sigma_min * (sigma_max / sigma_min) ** (i / n_steps)
    sigmas[0], sigmas[-1] = sigma_min, sigma_max
    sigmas.setflags(write=False)
    return NoiseSchedule(float(sigma_min), float(sigma_max), int(n_steps), sigmas)


class ScorePrior:
    """Interface for ``score(x, sigma) ~ grad_x log p_sigma(x)``."""

    name = "prior"

    def score(self, x, sigma):
        raise NotImplementedError


class NoOpPrior(ScorePrior):
    """Zero score.  The solver treats it as "no prior" and skips denoising."""

    name = "none"

    def score(self, x, sigma):
        return np.zeros_like(x, dtype=np.float64)


class GaussianAnalyticPrior(ScorePrior):
    """Isotropic Gaussian data model ``N(mean, std^2 I)``.

    Its noised marginals stay Gaussian, so the score is exact:
    ``-(x - mean) / (std^2 + sigma^2)``.
    """

    name = "gaussian"

    def __init__(self, mean=0.0, std=1.0):
        if not std > 0:
            raise ValueError(f"std must be positive, got {std}")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = float(std)

    def score(self, x, sigma):
        return -(np.asarray(x, dtype=np.float64) - self.mean) / (self.std**2 + sigma**2)


class GridScorePrior(ScorePrior):
    """Frozen score fields tabulated at fixed noise levels.

    ``score(x, sigma)`` returns the table whose level is nearest to
    ``sigma`` in log scale; ``x`` only fixes the output shape.
    """

    name = "file"

    def __init__(self, sigmas, fields):
        sigmas = np.asarray(sigmas, dtype=np.float64)
        fields = np.asarray(fields, dtype=np.float64)
        if sigmas.ndim != 1 or sigmas.size < 1 or np.any(sigmas <= 0):
            raise ValueError("sigmas must be a non-empty list of positive levels")
        if fields.ndim != 3 or fields.shape[0] != sigmas.size:
            raise ValueError(f"fields of shape {fields.shape} do not match {sigmas.size} levels")
        if not np.all(np.isfinite(fields)):
            raise ValueError("score fields contain non-finite values")
        self.sigmas = sigmas
        self.fields = fields

    @property
    def shape(self):
        return self.fields.shape[1:]

    def score(self, x, sigma):
        if np.shape(x) != self.shape:
            raise ValueError(f"image shape {np.shape(x)} does not match prior grid {self.shape}")
        k = int(np.argmin(np.abs(np.log(self.sigmas) - np.log(sigma))))
        return self.fields[k].copy()


class CallbackPrior(ScorePrior):
    """Wrap a plain ``fn(x, sigma) -> score`` callable."""

    name = "callback"

    def __init__(self, fn):
        self.fn = fn

    def score(self, x, sigma):
        return np.asarray(self.fn(x, sigma), dtype=np.float64)


def forward_perturb(x0, sigma, seed=None):
    """Sample the forward process at noise level ``sigma``: ``x0 + sigma z``."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    x0 = np.asarray(x0, dtype=np.float64)
    if sigma == 0:
        return x0.copy()
    rng = np.random.default_rng(seed)
    return x0 + sigma * rng.standard_normal(x0.shape)


def reverse_em_step(x, i, sched: NoiseSchedule, prior: ScorePrior, rng=None, noise=True):
    """One Euler-Maruyama step of the reverse SDE, from level ``i`` to ``i-1``.

    ``x_{i-1} = x_i + d s(x_i, sigma_i) + sqrt(d) z`` with
    ``d = sigma_i^2 - sigma_{i-1}^2``.  ``noise=False`` sets ``z = 0``.
    ``rng`` may be a Generator or a seed.
    """
    if not 1 <= i <= sched.n_steps:
        raise IndexError(f"step index {i} outside 1..{sched.n_steps}")
    x = np.asarray(x, dtype=np.float64)
    s_hi, s_lo = sched.sigmas[i], sched.sigmas[i - 1]
    d = s_hi**2 - s_lo**2
    score = prior.score(x, s_hi)
    if score.shape != x.shape:
        raise ValueError(f"prior returned shape {score.shape} for input {x.shape}")
    out = x + d * score
    if noise:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        out += np.sqrt(d) * rng.standard_normal(x.shape)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"reverse step {i} produced non-finite values", "denoise")
    return out


def step_blocks(total, n_steps):
    """Split the reverse indices ``n_steps..1`` into ``total`` contiguous blocks.

    Earlier blocks take the higher noise levels; when ``n_steps`` is not a
    multiple of ``total`` the first blocks are one step longer.
    """
    if total < 1:
        raise ValueError(f"total must be >= 1, got {total}")
    return [list(b) for b in np.array_split(np.arange(n_steps, 0, -1), total)]


def diffusion_denoise(x, k, total, sched, prior, seed=None, noise=True):
    """Run the reverse steps allotted to outer iteration ``k`` of ``total``.

    The no-op prior leaves ``x`` untouched.  Randomness for iteration ``k``
    is drawn from a generator seeded with ``(seed, k)``.
    """
    if not 0 <= k < total:
        raise ValueError(f"iteration {k} outside 0..{total - 1}")
    x = np.asarray(x, dtype=np.float64)
    if isinstance(prior, NoOpPrior):
        return x.copy()
    block = step_blocks(total, sched.n_steps)[k]
    rng = np.random.default_rng(None if seed is None else [seed, k])
    for i in block:
        x = reverse_em_step(x, int(i), sched, prior, rng=rng, noise=noise)
    return x.copy() if not block else x
