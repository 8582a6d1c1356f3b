"""Flat ``key = value`` experiment configuration.

Lines are ``dotted.key = value``; ``#`` starts a comment.  Lists are comma
separated.  Unknown keys are rejected so typos surface early.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError

ALGORITHMS = ("GP-UCB", "GP-BUCB", "GP-TS", "BI-UCB", "BI-BUCB", "BI-TS", "RANDOM")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "auto", "none") else float(s)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _strs(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


# key -> (attribute, parser)
_KEYS = {
    "env.kind": ("env_kind", str.strip),
    "env.network": ("network", str.strip),
    "env.routes": ("routes", _strs),
    "env.route": ("routes", _strs),
    "env.p_vol": ("p_vol", float),
    "synthetic.n_arms": ("n_arms", int),
    "synthetic.K": ("K", int),
    "synthetic.dim": ("dim", int),
    "synthetic.p_avail": ("p_avail", float),
    "algorithms": ("algorithms", _strs),
    "T": ("T", int),
    "replicates": ("replicates", int),
    "seed": ("seed", int),
    "schedule.xi": ("xi", float),
    "schedule.omega": ("omega", float),
    "schedule.beta_scale": ("beta_scale", float),
    "schedule.rectify_with": ("rectify_with", str.strip),
    "kernel.sigma_f": ("sigma_f", _opt_float),
    "kernel.sigma_f_add": ("sigma_f_add", _opt_float),
    "kernel.lengthscale": ("lengthscale", float),
    "kernel.sigma_g": ("sigma_g", _opt_float),
    "kernel.nu_g": ("nu_g", float),
    "kernel.kappa_g": ("kappa_g", float),
    "kernel.lengthscale_sweep": ("lengthscale_sweep", _floats),
    "kernel.prior_scale": ("prior_scale", float),
    "noise.scale": ("noise_scale", float),
    "noise.variance": ("noise_variance", float),
    "svgp.enabled": ("svgp_enabled", _bool),
    "svgp.M": ("svgp_M", int),
    "svgp.G": ("svgp_G", int),
    "svgp.B": ("svgp_B", int),
    "svgp.threshold": ("svgp_threshold", int),
    "truth.resample_per_replicate": ("resample_truth", _bool),
    "output.wall_time": ("wall_time", _bool),
    "bounds.enabled": ("bounds_enabled", _bool),
    "constants.C1": ("C1", float),
    "constants.C2": ("C2", float),
    "constants.C3": ("C3", float),
    "constants.L": ("L", float),
    "constants.d": ("d", int),
    "constants.K": ("const_K", int),
    "constants.sigma": ("const_sigma", float),
    "bounds.lambda_star": ("bound_lambda_star", float),
    "bounds.gamma": ("bound_gamma", float),
    "bounds.cardinality": ("bound_cardinality", float),
}


@dataclass(frozen=True)
class ExperimentConfig:
    env_kind: str = "navigation"
    network: str = "bundled:grid5.net"
    routes: tuple[str, ...] = ("A",)
    p_vol: float = 0.0
    n_arms: int = 20
    K: int = 2
    dim: int = 2
    p_avail: float = 1.0
    algorithms: tuple[str, ...] = ("GP-UCB", "GP-BUCB", "GP-TS")
    T: int = 200
    replicates: int = 5
    seed: int = 0
    xi: float = 1.0
    omega: float = 1.0
    beta_scale: float = 1.0
    rectify_with: str = "noise"
    sigma_f: float | None = None
    sigma_f_add: float | None = None
    lengthscale: float = 1.0
    sigma_g: float | None = None
    nu_g: float = 2.0
    kappa_g: float = 1.0
    lengthscale_sweep: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0)
    prior_scale: float = 0.25
    noise_scale: float = 0.1
    noise_variance: float = 0.1
    svgp_enabled: bool = False
    svgp_M: int = 1000
    svgp_G: int = 1
    svgp_B: int = 2500
    svgp_threshold: int = 3000
    resample_truth: bool = True
    wall_time: bool = False
    bounds_enabled: bool = True
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    L: float = 1.0
    d: int = 1
    const_K: int = 1
    const_sigma: float = 1.0
    bound_lambda_star: float = 1.0
    bound_gamma: float = 1.0
    bound_cardinality: float = 10.0
    base_dir: str = "."

    def __post_init__(self) -> None:
        if self.T < 1 or self.replicates < 1:
            raise ConfigError("T and replicates must be at least 1")
        if not self.algorithms:
            raise ConfigError("algorithm list is empty")
        for a in self.algorithms:
            if a.upper() not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}; choose from {', '.join(ALGORITHMS)}")
        if any(v <= 0 for v in self.lengthscale_sweep):
            raise ConfigError("lengthscale sweep values must be positive")
        if self.lengthscale <= 0:
            raise ConfigError("kernel.lengthscale must be positive")
        if self.env_kind not in ("navigation", "synthetic"):
            raise ConfigError(f"env.kind must be navigation or synthetic, got {self.env_kind!r}")
        if not 0.0 <= self.p_vol < 1.0:
            raise ConfigError("env.p_vol must lie in [0, 1)")
        if not 0.0 < self.p_avail <= 1.0:
            raise ConfigError("synthetic.p_avail must lie in (0, 1]")
        if self.rectify_with not in ("noise", "posterior"):
            raise ConfigError("schedule.rectify_with must be noise or posterior")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not self.routes:
            raise ConfigError("at least one route is required")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        attr, conv = _KEYS[key]
        try:
            values[attr] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=lineno) from None
    try:
        return ExperimentConfig(base_dir=base_dir, **values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:  # pragma: no cover - conversions above
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, base_dir=str(p.parent))

