"""Index policies for combinatorial GP bandits and their confidence schedules.

Sign convention: ``mode="maximize"`` treats the GP as a reward model and the
index is optimistic upward; ``mode="minimize"`` treats it as a cost model (the
navigation setting) and the index is optimistic downward, then rectified so it
can be fed to Dijkstra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy import special

from .errors import InputError

Family = Literal["UCB", "BUCB", "TS"]
FAMILIES = ("UCB", "BUCB", "TS")
SQRT_2PI = math.sqrt(2.0 * math.pi)
ETA_CAP = 0.5 - 1e-12


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


def ucb_beta(t: float, cardinality: float, scale: float = 1.0) -> float:
    """``scale * 2 log(cardinality t^2 / sqrt(2 pi))``; may be negative."""
    if t < 1 or cardinality <= 0:
        raise InputError(f"need t >= 1 and cardinality > 0, got t={t}, cardinality={cardinality}")
    return scale * 2.0 * (math.log(cardinality) + 2.0 * math.log(t) - math.log(SQRT_2PI))


def bucb_eta_raw(t: float, cardinality: float, xi: float, omega: float) -> float:
    return (2.0 * math.pi) ** (omega / 2.0) / (2.0 * cardinality**omega * t**xi)


def bucb_eta(t: float, cardinality: float, xi: float = 1.0, omega: float = 1.0) -> float:
    """Quantile tail mass eta_t, clamped strictly below 1/2."""
    if t < 1 or cardinality <= 0:
        raise InputError(f"need t >= 1 and cardinality > 0, got t={t}, cardinality={cardinality}")
    return min(bucb_eta_raw(t, cardinality, xi, omega), ETA_CAP)


def bucb_beta(t: float, cardinality: float, xi: float = 1.0, omega: float = 1.0) -> float:
    eta = bucb_eta(t, cardinality, xi, omega)
    return 2.0 * float(erf_inv(1.0 - 2.0 * eta)) ** 2


def c_omega(omega: float) -> float:
    if not omega > 1:
        raise InputError(f"C_omega requires omega > 1, got {omega}")
    return (math.sqrt(math.pi) * omega / math.sqrt(2.0 * math.e * (omega - 1.0))) ** (1.0 / omega)


@dataclass(frozen=True)
class ScheduleParams:
    family: str
    cardinality: float
    xi: float = 1.0
    omega: float = 1.0
    beta_scale: float = 1.0

    def __post_init__(self) -> None:
        fam = self.family.upper()
        if fam not in FAMILIES:
            raise InputError(f"unknown policy family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if self.cardinality < 1:
            raise InputError(f"arm cardinality must be >= 1, got {self.cardinality}")
        if not self.xi > 0:
            raise InputError(f"xi must be positive, got {self.xi}")
        if not self.beta_scale > 0:
            raise InputError(f"beta scale must be positive, got {self.beta_scale}")

    @property
    def invalid_bound(self) -> bool:
        """True when the BUCB parameters fall outside xi > omega > 1."""
        return self.family == "BUCB" and not (self.xi > self.omega > 1.0)

    def eta(self, t: float) -> float:
        return bucb_eta(t, self.cardinality, self.xi, self.omega)

    def beta(self, t: float) -> float:
        """Confidence parameter at round t, clamped at zero."""
        if self.family == "BUCB":
            b = bucb_beta(t, self.cardinality, self.xi, self.omega)
        else:
            b = ucb_beta(t, self.cardinality)
        return max(0.0, self.beta_scale * b)

    def reported(self, t: float) -> float:
        """The schedule value written to traces: eta_t for BUCB, beta_t otherwise."""
        return self.eta(t) if self.family == "BUCB" else self.beta(t)

    def with_cardinality(self, cardinality: float) -> "ScheduleParams":
        return replace(self, cardinality=cardinality)


# ---------------------------------------------------------------------------
# erf^{-1} and its elementary bounds
# ---------------------------------------------------------------------------


def _erfinv_initial(u: np.ndarray) -> np.ndarray:
    # Winitzki's closed-form approximation, ~2e-3 relative error.
    a = 0.147
    ln = np.log1p(-u * u)
    t1 = 2.0 / (np.pi * a) + 0.5 * ln
    return np.sign(u) * np.sqrt(np.sqrt(t1 * t1 - ln / a) - t1)


def erf_inv(u):
    """Inverse error function, refined by Halley steps on erf/erfc."""
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) >= 1.0):
        raise InputError("erf_inv requires |u| < 1")
    s = np.sign(arr)
    a = np.abs(arr)
    x = _erfinv_initial(a)
    tail = 1.0 - a
    for _ in range(4):
        # residual erf(x) - a, evaluated through erfc in the upper tail
        r = np.where(a > 0.5, tail - special.erfc(x), special.erf(x) - a)
        d = 2.0 / math.sqrt(math.pi) * np.exp(-x * x)
        step = np.divide(r, d + x * r, out=np.zeros_like(r), where=d + x * r != 0)
        x = x - step
    out = s * x
    return float(out) if np.ndim(out) == 0 else out


def erf_inv_lower_bound(u, omega: float = 2.0):
    """Lower bound on erf^{-1}(u) valid for omega > 1, using the largest admissible theta."""
    if not omega > 1:
        raise InputError(f"lower bound needs omega > 1, got {omega}")
    theta = math.sqrt(2.0 * math.e / math.pi) * math.sqrt(omega - 1.0) / omega
    return _erf_inv_bound(u, omega, theta)


def erf_inv_upper_bound(u, omega: float = 1.0, theta: float = 1.0):
    """Upper bound on erf^{-1}(u) valid for 0 < omega <= 1 and theta >= 1."""
    if not 0 < omega <= 1 or theta < 1:
        raise InputError(f"upper bound needs 0 < omega <= 1, theta >= 1; got {omega}, {theta}")
    return _erf_inv_bound(u, omega, theta)


def _erf_inv_bound(u, omega, theta):
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0) or np.any(arr >= 1):
        raise InputError("bound defined on u in [0, 1)")
    inner = -np.log((1.0 - arr) / theta) / omega
    out = np.sqrt(np.maximum(inner, 0.0))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Gaussian helpers
# ---------------------------------------------------------------------------


def gaussian_quantile(p, mean=0.0, variance=1.0):
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0) or np.any(p_arr >= 1):
        raise InputError("quantile level must lie in (0, 1)")
    if np.any(np.asarray(variance) < 0):
        raise InputError("variance must be non-negative")
    out = np.asarray(mean) + np.sqrt(variance) * math.sqrt(2.0) * erf_inv(2.0 * p_arr - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _rectified_unit(z: np.ndarray) -> np.ndarray:
    """phi(z) + z Phi(z), the rectified mean of N(z, 1), without cancellation for z < 0."""
    out = np.empty_like(z)
    hi = z >= 0
    zh = z[hi]
    out[hi] = zh * special.ndtr(zh) + np.exp(-0.5 * zh * zh) / SQRT_2PI
    a = -z[~hi]
    mid = a < 2.5
    am = a[mid]
    # Phi(-a) = 0.5 erfcx(a / sqrt 2) exp(-a^2 / 2)
    mid_val = np.exp(-0.5 * am * am) * (1.0 / SQRT_2PI - 0.5 * am * special.erfcx(am / math.sqrt(2.0)))
    at = a[~mid]
    # Laplace continued fraction for the Mills ratio: h(-a) = phi(a) / (1 + a D)
    D = at.copy()
    for k in range(80, 1, -1):
        D = at + k / D
    tail_val = np.exp(-0.5 * at * at) / SQRT_2PI / (1.0 + at * D)
    neg = np.empty_like(a)
    neg[mid] = mid_val
    neg[~mid] = tail_val
    out[~hi] = neg
    return out


def rectified_mean(mean, variance):
    """E[max(0, X)] for X ~ N(mean, variance)."""
    mu = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    mu, sd = np.broadcast_arrays(mu, sd)
    shape = mu.shape
    mu, sd = mu.ravel(), sd.ravel()
    out = np.maximum(mu, 0.0)
    pos = sd > 0
    if np.any(pos):
        # z^2 may overflow for tiny sd; the Gaussian factor then correctly underflows to 0
        with np.errstate(over="ignore"):
            z = mu[pos] / sd[pos]
            out[pos] = np.maximum(sd[pos] * _rectified_unit(z), out[pos])
    return float(out[0]) if shape == () else out.reshape(shape)


# ---------------------------------------------------------------------------
# Algorithm-level index computation
# ---------------------------------------------------------------------------


def optimistic_means(
    family: str,
    mean: np.ndarray,
    variance: np.ndarray,
    t: int,
    schedule: ScheduleParams,
    rng: np.random.Generator | int | None = None,
    mode: str = "minimize",
) -> np.ndarray:
    """Per-arm optimistic (UCB/BUCB) or sampled (TS) value before rectification."""
    family = family.upper()
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    sign = -1.0 if mode == "minimize" else 1.0
    if mode not in ("minimize", "maximize"):
        raise InputError(f"mode must be 'minimize' or 'maximize', got {mode!r}")
    if family == "UCB":
        return mean + sign * math.sqrt(schedule.beta(t)) * sd
    if family == "BUCB":
        eta = schedule.eta(t)
        z = math.sqrt(2.0) * float(erf_inv(1.0 - 2.0 * eta)) * math.sqrt(schedule.beta_scale)
        return mean + sign * z * sd
    if family == "TS":
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return mean + sd * rng.standard_normal(mean.shape)
    raise InputError(f"unknown policy family {family!r}")


def compute_indices(
    family: str,
    mean: np.ndarray,
    variance: np.ndarray,
    t: int,
    schedule: ScheduleParams,
    rng: np.random.Generator | int | None = None,
    mode: str = "minimize",
    noise_variance=None,
    rectify: bool | None = None,
    rectify_with: str = "noise",
) -> np.ndarray:
    """Per-arm indices U_t.

    In minimize mode the optimistic value is passed through the rectified
    Gaussian mean, with variance taken from the noise model
    (``rectify_with="noise"``) or from the posterior (``"posterior"``).
    """
    mu_tilde = optimistic_means(family, mean, variance, t, schedule, rng, mode)
    if rectify is None:
        rectify = mode == "minimize"
    if not rectify:
        return mu_tilde
    if rectify_with == "noise":
        if noise_variance is None:
            raise InputError("noise variance required for rectification")
        rv = np.broadcast_to(np.asarray(noise_variance, dtype=float), mu_tilde.shape)
    elif rectify_with == "posterior":
        rv = np.asarray(variance, dtype=float)
    else:
        raise InputError(f"rectify_with must be 'noise' or 'posterior', got {rectify_with!r}")
    return np.asarray(rectified_mean(mu_tilde, rv), dtype=float).reshape(mu_tilde.shape)


# ---------------------------------------------------------------------------
# Independent-Gaussian (BI) baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BIState:
    mean: np.ndarray
    variance: np.ndarray
    noise_variance: float

    def __post_init__(self) -> None:
        if np.any(np.asarray(self.variance) <= 0):
            raise InputError("BI variances must be positive")
        if not self.noise_variance > 0:
            raise InputError("BI noise variance must be positive")


def bi_update(state: BIState, edge: int, rewards) -> BIState:
    """Conjugate normal update of one edge with known noise variance."""
    r = np.asarray(rewards, dtype=float).reshape(-1)
    if r.size == 0:
        return state
    prec0 = 1.0 / state.variance[edge]
    prec = prec0 + r.size / state.noise_variance
    var_n = 1.0 / prec
    mean_n = var_n * (prec0 * state.mean[edge] + r.sum() / state.noise_variance)
    mean = state.mean.copy()
    var = state.variance.copy()
    mean[edge] = mean_n
    var[edge] = var_n
    return BIState(mean, var, state.noise_variance)


def bi_update_many(state: BIState, edges, rewards) -> BIState:
    """Vectorized conjugate update for several (edge, reward) pairs."""
    edges = np.asarray(edges, dtype=np.intp)
    r = np.asarray(rewards, dtype=float)
    if edges.size == 0:
        return state
    n = len(state.mean)
    counts = np.bincount(edges, minlength=n)
    sums = np.bincount(edges, weights=r, minlength=n)
    prec0 = 1.0 / state.variance
    prec = prec0 + counts / state.noise_variance
    var = 1.0 / prec
    mean = var * (prec0 * state.mean + sums / state.noise_variance)
    return BIState(mean, var, state.noise_variance)
