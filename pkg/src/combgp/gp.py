"""Exact GP posterior over base arms with incremental Cholesky updates.

A :class:`GPState` is immutable from the caller's point of view.  Internally
consecutive states produced by :func:`condition` share grow-only buffers: the
child writes only rows beyond the parent's observation count, so the parent's
view is never touched.  Branching from a non-tip state copies first.

When a state is created with ``probes`` (a fixed finite arm list, e.g. every
edge of a road network), the matrix ``V = L^{-1} K(X, probes)`` is carried
along and extended block-wise, which makes per-round posterior evaluation over
all probes O(N |probes|) instead of O(N^2 |probes|).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import linalg

from .arms import BaseArm
from .errors import InputError, NumericError
from .kernels import ArmKernel, jittered_cholesky

MeanFn = Callable[[Sequence[BaseArm]], np.ndarray]


def constant_mean(value: float = 0.0) -> MeanFn:
    def mean(arms):
        return np.full(len(arms), float(value))

    return mean


def edge_mean(table: Mapping) -> MeanFn:
    """Prior mean looked up by edge id (e.g. deterministic energy per edge)."""

    def mean(arms):
        return np.array([table[a.edge] for a in arms], dtype=float)

    return mean


class _Buffers:
    """Grow-only storage shared by a chain of states."""

    def __init__(self, n_probes: int, capacity: int = 64):
        self.L = np.zeros((capacity, capacity))
        self.resid = np.zeros(capacity)  # y - mu
        self.alpha = np.zeros(capacity)  # L^{-1} (y - mu)
        self.V = np.zeros((capacity, n_probes))
        self.length = 0

    @property
    def capacity(self) -> int:
        return self.L.shape[0]

    def copy_prefix(self, n: int, capacity: int) -> "_Buffers":
        new = _Buffers(self.V.shape[1], capacity)
        new.L[:n, :n] = self.L[:n, :n]
        new.resid[:n] = self.resid[:n]
        new.alpha[:n] = self.alpha[:n]
        new.V[:n] = self.V[:n]
        new.length = n
        return new


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    variance: float
    noise_variance: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


@dataclass(frozen=True, eq=False)
class GPState:
    kernel: ArmKernel
    prior_mean: MeanFn
    noise_variance: float
    arms: tuple[BaseArm, ...] = ()
    probes: tuple[BaseArm, ...] | None = None
    _buf: _Buffers = field(default=None, repr=False)
    _probe_prior_mean: np.ndarray = field(default=None, repr=False)
    _probe_prior_var: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.arms)

    @property
    def L(self) -> np.ndarray:
        """Lower Cholesky factor of K + noise I (a read-only view)."""
        v = self._buf.L[: self.n, : self.n]
        v.flags.writeable = False
        return v

    @property
    def y(self) -> np.ndarray:
        mu = self.prior_mean(self.arms) if self.n else np.zeros(0)
        return self._buf.resid[: self.n] + mu

    @property
    def alpha(self) -> np.ndarray:
        return self._buf.alpha[: self.n]


def make_state(
    kernel: ArmKernel,
    prior_mean: MeanFn | float = 0.0,
    noise_variance: float = 1.0,
    probes: Sequence[BaseArm] | None = None,
) -> GPState:
    """Prior GP state with no observations."""
    if not noise_variance > 0:
        raise InputError(f"noise variance must be positive, got {noise_variance}")
    if not callable(prior_mean):
        prior_mean = constant_mean(prior_mean)
    probes_t = tuple(probes) if probes is not None else None
    n_probes = len(probes_t) if probes_t is not None else 0
    pm = pv = None
    if probes_t is not None:
        pm = np.asarray(prior_mean(probes_t), dtype=float)
        pv = np.asarray(kernel.diag(probes_t), dtype=float)
    return GPState(
        kernel=kernel,
        prior_mean=prior_mean,
        noise_variance=float(noise_variance),
        probes=probes_t,
        _buf=_Buffers(n_probes),
        _probe_prior_mean=pm,
        _probe_prior_var=pv,
    )


def _solve_lower(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    if L.shape[0] == 0:
        return np.zeros_like(B)
    return linalg.solve_triangular(L, B, lower=True, check_finite=False)


def posterior_batch(state: GPState, arms: Sequence[BaseArm]) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at ``arms`` (variances clamped at 0)."""
    arms = list(arms)
    mu = np.asarray(state.prior_mean(arms), dtype=float)
    prior_var = np.asarray(state.kernel.diag(arms), dtype=float)
    if state.n == 0:
        return mu, prior_var.copy()
    Kxa = state.kernel(list(state.arms), arms)
    W = _solve_lower(state.L, Kxa)
    mean = mu + W.T @ state.alpha
    var = prior_var - np.einsum("ij,ij->j", W, W)
    return mean, np.maximum(var, 0.0)


def posterior(state: GPState, arm: BaseArm) -> PosteriorSummary:
    mean, var = posterior_batch(state, [arm])
    return PosteriorSummary(float(mean[0]), float(var[0]), state.noise_variance)


def posterior_cov(state: GPState, arms: Sequence[BaseArm]) -> np.ndarray:
    """Joint posterior covariance over ``arms``."""
    arms = list(arms)
    K = state.kernel.gram(arms)
    if state.n == 0:
        return K
    W = _solve_lower(state.L, state.kernel(list(state.arms), arms))
    C = K - W.T @ W
    return 0.5 * (C + C.T)


def probe_posterior(state: GPState) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at every probe arm, from the cached V."""
    if state.probes is None:
        raise InputError("state was built without probes")
    V = state._buf.V[: state.n]
    mean = state._probe_prior_mean + V.T @ state.alpha
    var = state._probe_prior_var - np.einsum("ij,ij->j", V, V)
    return mean, np.maximum(var, 0.0)


def probe_cov(state: GPState, idx: Sequence[int]) -> np.ndarray:
    """Posterior covariance block over the probes at positions ``idx``."""
    if state.probes is None:
        raise InputError("state was built without probes")
    idx = list(idx)
    sub = [state.probes[i] for i in idx]
    V = state._buf.V[: state.n][:, idx]
    C = state.kernel.gram(sub) - V.T @ V
    return 0.5 * (C + C.T)


def condition(state: GPState, arms: Sequence[BaseArm], rewards) -> GPState:
    """Add observations; the factor is extended by one block, never refactorized."""
    arms = tuple(arms)
    r = np.asarray(rewards, dtype=float).reshape(-1)
    if len(arms) != r.shape[0]:
        raise InputError(f"{len(arms)} arms but {r.shape[0]} rewards")
    if not np.all(np.isfinite(r)):
        raise InputError("non-finite reward")
    m = len(arms)
    if m == 0:
        return state
    n = state.n
    buf = state._buf
    need = n + m
    if buf.length != n or need > buf.capacity:
        cap = buf.capacity
        while cap < need:
            cap *= 2
        buf = buf.copy_prefix(n, cap)

    old_arms = list(state.arms)
    new_arms = list(arms)
    L11 = buf.L[:n, :n]
    K12 = state.kernel(old_arms, new_arms) if n else np.zeros((0, m))
    K22 = state.kernel.gram(new_arms) + state.noise_variance * np.eye(m)
    L21T = _solve_lower(L11, K12)  # (n, m)
    S = K22 - L21T.T @ L21T
    try:
        L22 = linalg.cholesky(0.5 * (S + S.T), lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericError(f"block Cholesky extension failed at n={n}, m={m}: {exc}") from exc

    resid_new = r - np.asarray(state.prior_mean(new_arms), dtype=float)
    alpha_new = linalg.solve_triangular(
        L22, resid_new - L21T.T @ buf.alpha[:n], lower=True, check_finite=False
    )
    buf.L[n:need, :n] = L21T.T
    buf.L[n:need, n:need] = L22
    buf.L[:n, n:need] = 0.0
    buf.resid[n:need] = resid_new
    buf.alpha[n:need] = alpha_new
    if state.probes is not None:
        Knp = state.kernel(new_arms, list(state.probes))
        buf.V[n:need] = linalg.solve_triangular(
            L22, Knp - L21T.T @ buf.V[:n], lower=True, check_finite=False
        )
    buf.length = need

    return GPState(
        kernel=state.kernel,
        prior_mean=state.prior_mean,
        noise_variance=state.noise_variance,
        arms=state.arms + arms,
        probes=state.probes,
        _buf=buf,
        _probe_prior_mean=state._probe_prior_mean,
        _probe_prior_var=state._probe_prior_var,
    )


def log_marginal_likelihood(state: GPState) -> float:
    n = state.n
    if n == 0:
        return 0.0
    return float(
        -0.5 * state.alpha @ state.alpha
        - np.log(np.diag(state.L)).sum()
        - 0.5 * n * np.log(2 * np.pi)
    )


def sample_function(
    kernel: ArmKernel,
    prior_mean: MeanFn | float,
    arms: Sequence[BaseArm],
    seed,
) -> np.ndarray:
    """One joint prior draw of f over ``arms``."""
    arms = list(arms)
    if not arms:
        raise InputError("cannot sample over an empty arm list")
    if not callable(prior_mean):
        prior_mean = constant_mean(prior_mean)
    Lk = jittered_cholesky(kernel.gram(arms))
    z = np.random.default_rng(seed).standard_normal(len(arms))
    return np.asarray(prior_mean(arms), dtype=float) + Lk @ z


def sample_posterior_independent(
    state: GPState, arms: Sequence[BaseArm] | None, seed
) -> np.ndarray:
    """Independent per-arm posterior draws (marginals only, no cross-covariance).

    With ``arms=None`` the state's probes are used.
    """
    if arms is None:
        mean, var = probe_posterior(state)
    else:
        mean, var = posterior_batch(state, arms)
    return draw_independent(mean, var, seed)


def draw_independent(mean: np.ndarray, var: np.ndarray, seed) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal(np.shape(mean))
    return np.asarray(mean) + np.sqrt(np.maximum(var, 0.0)) * z
