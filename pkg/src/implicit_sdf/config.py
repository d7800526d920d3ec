"""Run configurations for the command-line tools.

A config file is a flat YAML mapping of parameter names to values for one
command. Unknown keys and out-of-range values are rejected by name before
any work starts. Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import yaml


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


@dataclass
class NetConfig:
    layers: int = 4
    width: int = 128
    beta: float = 100.0
    skip: bool = True

    def _validate_net(self):
        _check(self.layers >= 2, "layers", "must be at least 2")
        _check(self.width >= 4, "width", "must be at least 4")
        _check(self.beta > 0, "beta", "must be positive")


@dataclass
class ReconstructConfig(NetConfig):
    input: Optional[str] = None
    lam: float = 0.1
    tau: float = 1.0
    iters: int = 5000
    batch_size: int = 256
    lr: float = 1e-3
    k: Optional[int] = None
    resolution: Optional[int] = None
    margin: float = 0.1
    normalize: bool = True
    init_radius: float = 1.0

    def validate(self):
        self._validate_net()
        _check(self.input is not None, "input", "an input point-cloud path is required")
        _check(self.lam > 0, "lam", "must be positive")
        _check(self.tau in (0.0, 1.0), "tau", "must be 0 or 1")
        _check(self.iters >= 0, "iters", "must be nonnegative")
        _check(self.batch_size >= 2, "batch_size", "must be at least 2")
        _check(self.lr > 0, "lr", "must be positive")
        _check(self.k is None or self.k >= 1, "k", "must be at least 1")
        _check(self.resolution is None or 2 <= self.resolution <= 512, "resolution", "must be in [2, 512]")
        _check(self.margin >= 0, "margin", "must be nonnegative")
        _check(self.init_radius > 0, "init_radius", "must be positive")


@dataclass
class SdfProbeConfig(NetConfig):
    shape: str = "sphere"
    radius: float = 0.5
    dim: int = 3
    lam: float = 0.1
    iters: int = 10000
    batch_size: int = 512
    lr: float = 1e-3
    k: Optional[int] = None
    reference_points: int = 2048
    n_probe: int = 100_000
    band: float = 0.1
    box_half: float = 1.0
    init_radius: Optional[float] = None
    resolution: int = 0

    def validate(self):
        self._validate_net()
        _check(self.shape in ("plane", "sphere"), "shape", f"unknown shape {self.shape!r} (plane or sphere)")
        _check(self.radius > 0, "radius", "must be positive")
        _check(self.dim in (2, 3), "dim", "must be 2 or 3")
        _check(self.lam > 0, "lam", "must be positive")
        _check(self.iters >= 0, "iters", "must be nonnegative")
        _check(self.batch_size >= 2, "batch_size", "must be at least 2")
        _check(self.lr > 0, "lr", "must be positive")
        _check(self.reference_points >= 2, "reference_points", "must be at least 2")
        _check(self.n_probe >= 1, "n_probe", "must be positive")
        _check(self.band >= 0, "band", "must be nonnegative")
        _check(self.box_half > 0, "box_half", "must be positive")
        _check(self.init_radius is None or self.init_radius > 0, "init_radius", "must be positive")
        _check(self.resolution == 0 or 2 <= self.resolution <= 512, "resolution", "must be 0 or in [2, 512]")


@dataclass
class ShapeSpaceConfig(NetConfig):
    inputs: list = field(default_factory=list)
    latent_dim: int = 8
    lam: float = 0.1
    tau: float = 1.0
    latent_reg: float = 0.01
    epochs: int = 2000
    shapes_per_batch: int = 8
    points_per_shape: int = 256
    lr: float = 5e-4
    lr_halving_interval: int = 500
    k: Optional[int] = None
    resolution: Optional[int] = None
    margin: float = 0.1
    normalize: bool = True
    init_radius: float = 1.0

    def validate(self):
        self._validate_net()
        _check(len(self.inputs) >= 2, "inputs", "need at least two input clouds")
        _check(self.latent_dim >= 1, "latent_dim", "must be at least 1")
        _check(self.lam > 0, "lam", "must be positive")
        _check(self.tau in (0.0, 1.0), "tau", "must be 0 or 1")
        _check(self.latent_reg >= 0, "latent_reg", "must be nonnegative")
        _check(self.epochs >= 0, "epochs", "must be nonnegative")
        _check(self.shapes_per_batch >= 1, "shapes_per_batch", "must be at least 1")
        _check(self.points_per_shape >= 2, "points_per_shape", "must be at least 2")
        _check(self.lr > 0, "lr", "must be positive")
        _check(self.lr_halving_interval >= 1, "lr_halving_interval", "must be at least 1")
        _check(self.resolution is None or 2 <= self.resolution <= 512, "resolution", "must be in [2, 512]")
        _check(self.margin >= 0, "margin", "must be nonnegative")
        _check(self.init_radius > 0, "init_radius", "must be positive")


@dataclass
class InferConfig:
    checkpoint: Optional[str] = None
    input: Optional[str] = None
    iters: int = 800
    lr: float = 5e-3
    batch_size: int = 256
    k: Optional[int] = None
    resolution: Optional[int] = None

    def validate(self):
        _check(self.checkpoint is not None, "checkpoint", "a checkpoint path is required")
        _check(self.input is not None, "input", "an input point-cloud path is required")
        _check(self.iters >= 0, "iters", "must be nonnegative")
        _check(self.lr > 0, "lr", "must be positive")
        _check(self.batch_size >= 2, "batch_size", "must be at least 2")
        _check(self.resolution is None or 2 <= self.resolution <= 512, "resolution", "must be in [2, 512]")


@dataclass
class InterpolateConfig:
    checkpoint: Optional[str] = None
    latents: Optional[str] = None
    ids: list = field(default_factory=list)
    weights: list = field(default_factory=list)
    resolution: Optional[int] = None

    def validate(self):
        _check(self.checkpoint is not None, "checkpoint", "a checkpoint path is required")
        _check(self.latents is not None, "latents", "a latent table path is required")
        _check(len(self.ids) >= 1, "ids", "need at least one shape id")
        _check(len(self.weights) == len(self.ids), "weights", "need one weight per id")
        _check(all(w >= 0 for w in self.weights), "weights", "must be nonnegative")
        _check(abs(sum(self.weights) - 1.0) <= 1e-9, "weights", "must sum to 1")
        _check(self.resolution is None or 2 <= self.resolution <= 512, "resolution", "must be in [2, 512]")


@dataclass
class TheoryConfig:
    dim: int = 3
    lam: float = 0.1
    eps: list = field(default_factory=lambda: [0.0])
    seeds: int = 100
    n_points: int = 500
    eigvals: Optional[list] = None
    alpha: Optional[float] = None
    max_iters: int = 1_000_000
    tol: float = 1e-8
    liapunov_samples: int = 1000

    def validate(self):
        _check(self.dim >= 2, "dim", "must be at least 2")
        _check(self.lam > 0, "lam", "must be positive")
        _check(len(self.eps) >= 1 and all(e >= 0 for e in self.eps), "eps", "need nonnegative values")
        _check(self.seeds >= 1, "seeds", "must be at least 1")
        _check(self.n_points >= 1, "n_points", "must be at least 1")
        if self.eigvals is not None:
            ev = list(self.eigvals)
            _check(len(ev) == self.dim, "eigvals", "need one eigenvalue per dimension")
            _check(all(v >= 0 for v in ev) and ev == sorted(ev), "eigvals", "must be nonnegative and ascending")
        _check(self.alpha is None or self.alpha > 0, "alpha", "must be positive")
        _check(self.max_iters >= 1, "max_iters", "must be at least 1")
        _check(self.tol > 0, "tol", "must be positive")
        _check(self.liapunov_samples >= 0, "liapunov_samples", "must be nonnegative")


COMMANDS = {
    "reconstruct": ReconstructConfig,
    "sdf-probe": SdfProbeConfig,
    "shape-space": ShapeSpaceConfig,
    "infer": InferConfig,
    "interpolate": InterpolateConfig,
    "theory-verify": TheoryConfig,
}


# types for fields whose default is None
_OPTIONAL_TYPES = {
    "input": "", "checkpoint": "", "latents": "",
    "k": 0, "resolution": 0, "alpha": 0.0, "eigvals": [], "init_radius": 0.0,
}


def _coerce(key: str, value, default):
    """Match a file value to the field's default type (ints stay ints, etc.)."""
    if value is None:
        return None
    if default is None:
        default = _OPTIONAL_TYPES.get(key)
    if isinstance(default, str):
        _check(isinstance(value, str), key, f"expected a string, got {value!r}")
        return value
    if isinstance(default, bool):
        _check(isinstance(value, bool), key, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        _check(isinstance(value, int) and not isinstance(value, bool), key, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), key,
               f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        _check(isinstance(value, list), key, f"expected a list, got {value!r}")
        return list(value)
    return value


def build_config(command: str, file_values: Optional[dict] = None, overrides: Optional[dict] = None):
    """Defaults, then file values, then overrides; validated."""
    cls = COMMANDS[command]
    cfg = cls()
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in fields:
                raise ConfigError(f"{key}: unknown key for {command}")
            setattr(cfg, key, _coerce(key, value, getattr(cls(), key)))
    cfg.validate()
    return cfg


def load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data
