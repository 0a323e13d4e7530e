"""Pipeline configuration: flat ``key = value`` files merged with CLI flags."""

from __future__ import annotations

import dataclasses
import json
import os
import types
import typing
from dataclasses import dataclass, fields

from .admm import VIEW_PRESETS, AdmmConfig, preset_from_table2
from .phantoms import PHANTOM_KINDS

__all__ = ["ConfigError", "PipelineConfig", "load_config_file", "SOLVER_KEYS"]

SOLVER_KEYS = (
    "alpha", "beta", "rho1", "rho2", "rho3", "n_outer", "pcg_inner", "patch_size",
    "patch_stride", "sigma_min", "sigma_max", "n_steps", "precond_mode", "stop_tol",
)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    """Resolved settings for one CLI invocation.

    ``None`` in a solver field means "take it from the view-count preset, or
    the solver default when there is no preset".
    """

    # geometry and data
    size: int = 64
    views: int = 8
    n_det: int | None = None
    phantom: str = "shepp-logan"
    slices: int = 1
    volume: str | None = None
    volume_dims: str | None = None
    element_type: str = "u16le"
    peak: float | None = None
    noise_sigma: float = 0.0
    dataset: str = "phantom"
    # run control
    seed: int = 0
    out: str = "out"
    input: str | None = None
    truth: str | None = None
    threads: int | None = None
    method: str = "tvlora"
    checkpoint: bool = False
    resume: bool = False
    # prior
    prior: str = "none"
    gaussian_mean: str = "0"
    gaussian_std: float = 0.1
    # ablation switches
    no_lora: bool = False
    no_prior: bool = False
    no_fft_precond: bool = False
    # solver overrides
    alpha: float | None = None
    beta: float | None = None
    rho1: float | None = None
    rho2: float | None = None
    rho3: float | None = None
    n_outer: int | None = None
    pcg_inner: int | None = None
    patch_size: int | None = None
    patch_stride: int | None = None
    sigma_min: float | None = None
    sigma_max: float | None = None
    n_steps: int | None = None
    precond_mode: str | None = None
    stop_tol: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.size >= 16, f"size must be >= 16, got {self.size}")
        need(self.views >= 1, f"views must be >= 1, got {self.views}")
        need(self.n_det is None or self.n_det >= 1, "n_det must be >= 1")
        need(self.phantom in PHANTOM_KINDS, f"phantom must be one of {PHANTOM_KINDS}")
        need(self.slices >= 1, "slices must be >= 1")
        need(self.noise_sigma >= 0, "noise_sigma must be >= 0")
        need(self.peak is None or self.peak > 0, "peak must be positive")
        need(self.threads is None or self.threads >= 1, "threads must be >= 1")
        need(self.method in ("tvlora", "fbp"), "method must be 'tvlora' or 'fbp'")
        need(self.gaussian_std > 0, "gaussian_std must be positive")
        need(
            self.prior in ("none", "gaussian") or self.prior.startswith("file:"),
            f"prior must be none, gaussian or file:PATH, got {self.prior!r}",
        )
        if self.volume is not None:
            need(self.volume_dims is not None, "volume_dims (W,H,S) is required with volume")
            self.volume_shape()
        try:
            self.admm_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def volume_shape(self):
        try:
            dims = tuple(int(v) for v in self.volume_dims.replace("x", ",").split(","))
        except (AttributeError, ValueError):
            raise ConfigError(f"volume_dims must look like W,H,S, got {self.volume_dims!r}") from None
        if len(dims) != 3 or min(dims) < 1:
            raise ConfigError(f"volume_dims must be three positive integers, got {self.volume_dims!r}")
        return dims

    def admm_config(self) -> AdmmConfig:
        base = preset_from_table2(self.views) if self.views in VIEW_PRESETS else AdmmConfig()
        overrides = {k: getattr(self, k) for k in SOLVER_KEYS if getattr(self, k) is not None}
        overrides["seed"] = self.seed
        if self.no_lora:
            overrides["beta"] = 0.0
        if self.no_fft_precond:
            overrides["fft_precond"] = False
        return base.replace(**overrides)

    @property
    def n_threads(self):
        return self.threads or os.cpu_count() or 1

    def manifest(self, command):
        return {
            "command": command,
            "config": dataclasses.asdict(self),
            "solver": dataclasses.asdict(self.admm_config()),
        }

    def manifest_json(self, command):
        return json.dumps(self.manifest(command), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_sources(cls, file_values=None, flag_values=None):
        """Merge config-file values with flags (flags win) and validate."""
        merged = {}
        for source in (file_values or {}, flag_values or {}):
            for key, value in source.items():
                if value is not None:
                    merged[key] = value
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(merged) - names)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**merged)


def _field_type(name):
    hints = typing.get_type_hints(PipelineConfig)
    tp = hints[name]
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        tp = next(a for a in typing.get_args(tp) if a is not type(None))
    return tp


def _convert(key, text):
    tp = _field_type(key)
    text = text.strip()
    if text.lower() in ("none", "null", ""):
        return None
    try:
        if tp is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r} (expected {tp.__name__})") from None
    return text


def load_config_file(path):
    """Parse a flat config file.

    One ``key = value`` (or ``key value``) per line; ``#`` starts a comment;
    dashes in keys are read as underscores.  Unknown keys are rejected.
    """
    names = {f.name for f in fields(PipelineConfig)}
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, value = line.partition("=")
            else:
                key, _, value = line.partition(" ")
            key = key.strip().replace("-", "_")
            if key not in names:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _convert(key, value)
    return values
