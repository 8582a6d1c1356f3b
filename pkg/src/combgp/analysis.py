"""Information gain, lambda*_K tracking, regret-bound calculators and the
discretization-size schedule for the continuous-arm analysis.

All logarithms are natural; information gain is in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, special

from .errors import InputError, NumericError
from .policies import ScheduleParams, c_omega

SQRT_2PI = math.sqrt(2.0 * math.pi)
EIG_SYM_TOL = 1e-10


# ---------------------------------------------------------------------------
# Information gain
# ---------------------------------------------------------------------------


def information_gain(K: np.ndarray, noise_variance: float) -> float:
    """``0.5 log det(I + K / noise)`` via a Cholesky log-determinant."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.size == 0:
        return 0.0
    if K.shape[0] != K.shape[1]:
        raise InputError(f"Gram matrix must be square, got {K.shape}")
    if not noise_variance > 0:
        raise InputError("noise variance must be positive")
    A = np.eye(K.shape[0]) + 0.5 * (K + K.T) / noise_variance
    try:
        L = linalg.cholesky(A, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError(f"I + K/noise is not positive definite: {exc}") from None
    return float(np.log(np.diag(L)).sum())


def greedy_gamma(arms, kernel, noise_variance: float, T: int) -> float:
    """Greedy surrogate for the maximal information gain with ``T`` observations.

    Repeated observations of one arm are allowed, matching a length-T
    observation sequence.  Each step observes the arm of largest current
    posterior variance (lowest index on ties).
    """
    T = int(T)
    if T < 0:
        raise InputError("budget must be non-negative")
    if T == 0 or len(arms) == 0:
        return 0.0
    S = np.array(kernel.gram(list(arms)), dtype=float)
    gain = 0.0
    for _ in range(T):
        var = np.clip(np.diag(S), 0.0, None)
        i = int(np.argmax(var))
        v = var[i]
        if v <= 0.0:
            break
        gain += 0.5 * math.log1p(v / noise_variance)
        col = S[:, i].copy()
        S -= np.outer(col, col) / (v + noise_variance)
    return gain


def greedy_gamma_curve(arms, kernel, noise_variance: float, T: int) -> np.ndarray:
    """Greedy information gain after 0..T observations (monotone by construction)."""
    S = np.array(kernel.gram(list(arms)), dtype=float)
    out = np.zeros(int(T) + 1)
    for k in range(1, int(T) + 1):
        var = np.clip(np.diag(S), 0.0, None)
        i = int(np.argmax(var))
        v = var[i]
        out[k] = out[k - 1] + (0.5 * math.log1p(v / noise_variance) if v > 0 else 0.0)
        if v > 0:
            col = S[:, i].copy()
            S -= np.outer(col, col) / (v + noise_variance)
    return out


# ---------------------------------------------------------------------------
# lambda*_K
# ---------------------------------------------------------------------------


@dataclass
class LambdaStarTracker:
    """Running maximum eigenvalue of observed posterior covariance blocks.

    A lower estimate of the supremum over all histories.
    """

    K: int | None = None
    value: float = 0.0
    count: int = 0
    label: str = "lower estimate (observed blocks)"

    def update(self, block) -> float:
        B = np.atleast_2d(np.asarray(block, dtype=float))
        if B.shape[0] != B.shape[1]:
            raise InputError(f"covariance block must be square, got {B.shape}")
        if self.K is not None and B.shape[0] > self.K:
            raise InputError(f"block of size {B.shape[0]} exceeds K={self.K}")
        if B.size == 0:
            return self.value
        scale = max(1.0, float(np.abs(B).max()))
        if np.abs(B - B.T).max() > EIG_SYM_TOL * scale:
            raise InputError("covariance block is not symmetric")
        lam = float(linalg.eigvalsh(B)[-1])
        self.value = max(self.value, lam)
        self.count += 1
        return self.value

    def update_many(self, blocks) -> float:
        for b in blocks:
            self.update(b)
        return self.value


# ---------------------------------------------------------------------------
# Regret traces and the information-gain lemma
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RegretTrace:
    """Per-round regret record of one run."""

    t: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    schedule: np.ndarray
    sigma_sum: np.ndarray
    info_gain: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.t)
        for name in ("inst_regret", "cum_regret", "schedule", "sigma_sum", "info_gain"):
            if len(getattr(self, name)) != n:
                raise InputError(f"trace field {name} has inconsistent length")
        if n and np.any(np.diff(self.cum_regret) < -1e-9 * (1.0 + np.abs(self.cum_regret).max())):
            raise InputError("cumulative regret must be non-decreasing")

    @classmethod
    def from_rounds(cls, rounds, noise_variance: float | None = None) -> "RegretTrace":
        """Build from ``RoundResult`` objects; info gain needs covariance blocks."""
        inst = np.array([r.regret for r in rounds], dtype=float)
        gains = []
        g = 0.0
        for r in rounds:
            if r.cov_block is None or noise_variance is None:
                g = float("nan")
            else:
                g += information_gain(r.cov_block, noise_variance)
            gains.append(g)
        return cls(
            t=np.array([r.t for r in rounds], dtype=int),
            inst_regret=inst,
            cum_regret=np.cumsum(inst),
            schedule=np.array([r.schedule_value for r in rounds], dtype=float),
            sigma_sum=np.array([r.sigma_sum for r in rounds], dtype=float),
            info_gain=np.array(gains, dtype=float),
        )

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class InfogainReport:
    lhs: float
    rhs: float
    lambda_star: float
    information_gain: float
    passed: bool


def realized_information_gain(kernel, selected_arms: Sequence, noise_variance: float) -> float:
    """Mutual information between all observed rewards and f (arms may repeat)."""
    arms = list(selected_arms)
    if not arms:
        return 0.0
    return information_gain(kernel.gram(arms), noise_variance)


def verify_infogain_inequality(
    chosen_variances: Sequence[Sequence[float]],
    realized_gain: float,
    lambda_star: float,
    noise_variance: float,
    slack: float = 1e-8,
) -> InfogainReport:
    """Check sum of chosen prior-to-round variances <= 2 (lambda* + noise) I(r; f)."""
    lhs = float(sum(float(np.sum(v)) for v in chosen_variances))
    rhs = 2.0 * (lambda_star + noise_variance) * realized_gain
    return InfogainReport(lhs, rhs, lambda_star, realized_gain, lhs <= rhs + slack)


# ---------------------------------------------------------------------------
# Regret bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundInputs:
    T: int
    K: int
    noise_variance: float
    lambda_star: float
    gamma: float
    schedule: ScheduleParams
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    L: float = 1.0
    d: int = 1
    empirical_constants: bool = True

    def __post_init__(self) -> None:
        if self.T < 1 or self.K < 1:
            raise InputError("T and K must be at least 1")
        if self.gamma < 0:
            raise InputError("information gain must be non-negative")
        if self.lambda_star < 0:
            raise InputError("lambda* must be non-negative")
        if not self.noise_variance > 0:
            raise InputError("noise variance must be positive")

    @property
    def C_K(self) -> float:
        return 2.0 * (self.lambda_star + self.noise_variance)


@dataclass(frozen=True)
class BoundResult:
    family: str
    setting: str
    value: float
    beta_T: float
    valid: bool
    empirical_constants: bool

    @property
    def label(self) -> str:
        tag = "empirical-constant bound" if self.empirical_constants else "bound"
        return tag if self.valid else f"{tag} (invalid schedule: needs xi > omega > 1)"


def _core(inputs: BoundInputs, beta_T: float) -> float:
    return math.sqrt(inputs.C_K * inputs.T * inputs.K * beta_T * inputs.gamma)


def _beta_from_log_cardinality(sched: ScheduleParams, t: float, log_card: float) -> float:
    """The schedule's beta_t (clamped at 0, scaled) with cardinality given in log form."""
    if sched.family == "BUCB":
        log_eta = (
            0.5 * sched.omega * math.log(2.0 * math.pi)
            - math.log(2.0)
            - sched.omega * log_card
            - sched.xi * math.log(t)
        )
        x = 2.0 * math.exp(log_eta) if log_eta > -700 else 0.0
        if x >= 1.0:
            b = 0.0
        elif x > 0.0:
            b = 2.0 * float(special.erfcinv(x)) ** 2
        else:
            # asymptotic erfcinv(x)^2 ~ -ln x - 0.5 ln(-pi ln x)
            lx = math.log(2.0) + log_eta
            b = 2.0 * (-lx - 0.5 * math.log(-math.pi * lx))
    else:
        b = 2.0 * (log_card + 2.0 * math.log(t) - math.log(SQRT_2PI))
    return max(0.0, sched.beta_scale * b)


def finite_regret_bound(family: str, inputs: BoundInputs) -> BoundResult:
    """Bayesian-regret bound for a finite arm set of size ``schedule.cardinality``."""
    fam = family.upper()
    sched = ScheduleParams(fam, inputs.schedule.cardinality, inputs.schedule.xi,
                           inputs.schedule.omega, inputs.schedule.beta_scale)
    beta_T = sched.beta(inputs.T)
    core = _core(inputs, beta_T)
    valid = True
    if fam == "UCB":
        value = math.pi**2 / 6.0 + core
    elif fam == "BUCB":
        valid = not sched.invalid_bound
        value = core + c_omega(sched.omega) * sched.xi / (sched.xi - sched.omega) if valid else math.inf
    else:
        value = math.pi**2 / 3.0 + 2.0 * core
    return BoundResult(fam, "finite", value, beta_T, valid, inputs.empirical_constants)


def infinite_regret_bound(family: str, inputs: BoundInputs, tau_T: float | None = None) -> BoundResult:
    """Bound for a continuous context space with |A| replaced by tau_T^d."""
    fam = family.upper()
    sched = ScheduleParams(fam, 1.0, inputs.schedule.xi, inputs.schedule.omega,
                           inputs.schedule.beta_scale)
    if tau_T is None:
        tau_T = tau_t(fam, inputs.T, inputs.K, inputs.L, inputs.d, inputs.C1, inputs.C2,
                      inputs.C3, math.sqrt(inputs.noise_variance), sched.xi, sched.omega)
    beta_T = _beta_from_log_cardinality(sched, inputs.T, inputs.d * math.log(tau_T))
    core = _core(inputs, beta_T)
    valid = True
    if fam == "UCB":
        value = math.pi**2 / 2.0 + core
    elif fam == "BUCB":
        valid = not sched.invalid_bound
        value = (math.pi**2 / 3.0 + core + c_omega(sched.omega) * sched.xi / (sched.xi - sched.omega)
                 if valid else math.inf)
    else:
        value = 2.0 * math.pi**2 / 3.0 + 2.0 * core
    return BoundResult(fam, "infinite", value, beta_T, valid, inputs.empirical_constants)


# ---------------------------------------------------------------------------
# Discretization size
# ---------------------------------------------------------------------------


def _log_term(family: str, t: float, d: float, xi: float, omega: float) -> float:
    if family == "BUCB":
        return d * omega + xi * math.log(t) - math.log(2.0) - omega * math.log(SQRT_2PI)
    return d + 2.0 * math.log(t) - math.log(SQRT_2PI)


def tau_remark(family, t, K, L, d, C1, C2, C3, sigma, xi=1.0, omega=1.0) -> float:
    """Max of the four closed-form expressions (before rounding or repair).

    A negative log factor makes the corresponding power undefined; those
    expressions are treated as 0.
    """
    fam = family.upper()
    e = math.e
    lt = _log_term(fam, t, d, xi, omega)
    ex1 = 2.0 * K * L * d * C1 * (1.0 + t * K / sigma) * t**2
    base2 = 16.0 * t**4 * K**2 * L * d * C1 * lt
    base3 = 16.0 * t**5 * K**3 * L**2 * d**2 * C1**2 / sigma**2 * lt
    ex2 = base2 ** (1.0 / (1.0 - 1.0 / e)) if base2 > 0 else 0.0
    ex3 = base3 ** (1.0 / (2.0 - 1.0 / e)) if base3 > 0 else 0.0
    ex4 = t**2 * K * d * C1 * C3 * (math.sqrt(max(math.log(C2 * d), 0.0)) + math.sqrt(math.pi) / 2.0)
    return max(ex1, ex2, ex3, ex4)


def tau_beta(family, tau, t, d, xi=1.0, omega=1.0) -> float:
    """beta_t implied by a discretization count tau (cardinality tau^d)."""
    sched = ScheduleParams(family, 1.0, xi, omega)
    return _beta_from_log_cardinality(sched, t, d * math.log(tau))


@dataclass(frozen=True)
class TauCheck:
    tau: float
    beta: float
    satisfied: tuple[bool, bool, bool, bool]

    @property
    def ok(self) -> bool:
        return all(self.satisfied)


def check_tau(family, tau, t, K, L, d, C1, C2, C3, sigma, xi=1.0, omega=1.0) -> TauCheck:
    """Substitute tau (and its beta_t) into the four discretization inequalities."""
    beta = tau_beta(family, tau, t, d, xi, omega)
    ok1 = tau >= 2.0 * t**2 * K * L * d * C1 * (1.0 + t * K / sigma)
    # beta == 0 leaves the ratio constraints vacuous
    ok2 = beta <= 0.0 or tau >= 8.0 * t**4 * K**2 * L * d * C1 * beta
    ok3 = beta <= 0.0 or tau**2 >= 8.0 * t**5 * K**3 * L**2 * d**2 * C1**2 / sigma**2 * beta
    ok4 = tau >= t**2 * K * d * C1 * C3 * (
        math.sqrt(max(math.log(C2 * d), 0.0)) + math.sqrt(math.pi) / 2.0
    )
    return TauCheck(tau, beta, (ok1, ok2, ok3, ok4))


def tau_t(family, t, K, L, d, C1, C2, C3, sigma, xi=1.0, omega=1.0) -> float:
    """Discretization count per dimension satisfying all four inequalities.

    Starts from the ceiling of the closed-form remark value.  For small t the
    closed form can violate the beta-ratio inequalities (its derivation needs
    log(t^2 / sqrt(2 pi)) >= 0), so the value is raised to the smallest
    integer that passes the direct check.
    """
    args = (t, K, L, d, C1, C2, C3, sigma, xi, omega)
    if t < 1 or min(K, L, d, C1, C2, C3, sigma) <= 0:
        raise InputError("tau_t needs t >= 1 and positive constants")
    tau0 = max(1.0, math.ceil(tau_remark(family, *args)))
    if check_tau(family, tau0, *args).ok:
        return tau0
    hi = tau0
    while not check_tau(family, hi, *args).ok:
        hi *= 2.0
        if hi > 1e300:
            raise NumericError("no discretization size satisfies the inequalities")
    lo = hi / 2.0 if hi > tau0 else tau0
    # smallest passing integer in (lo, hi]; the checks are monotone beyond tau0
    while hi - lo > 1.0 and hi - lo > 1e-12 * hi:
        mid = math.floor((lo + hi) / 2.0)
        if mid <= lo:
            break
        if check_tau(family, mid, *args).ok:
            hi = mid
        else:
            lo = mid
    return float(hi)
