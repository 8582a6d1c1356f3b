"""Sparse variational GP with natural-gradient updates of q(u) = N(m, S).

Unwhitened parameterization: ``u = f(Z) - mu(Z)`` has prior N(0, K_ZZ).  The
likelihood is Gaussian, so the expected log-likelihood is closed form and the
natural-gradient step on (m, S) is an interpolation in natural-parameter space
toward the conjugate optimum of the current batch.  Continuous context
coordinates of the inducing arms take a gradient-ascent step on the per-datum
ELBO at the inner rate (halved until the ELBO does not drop); their edge
identities never change between reselections.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy import linalg

from .arms import BaseArm
from .errors import InputError, NumericError
from .gp import MeanFn, constant_mean
from .kernels import ArmKernel, jittered_cholesky

LOG_2PI = np.log(2.0 * np.pi)
EIG_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class SVGPState:
    kernel: ArmKernel
    prior_mean: MeanFn
    noise_variance: float
    inducing: tuple[BaseArm, ...]
    m: np.ndarray
    S: np.ndarray
    steps: int = 1
    batch_size: int = 2500
    learn_inducing: bool = True

    def __post_init__(self) -> None:
        M = len(self.inducing)
        if M < 1:
            raise InputError("SVGP needs at least one inducing point")
        if self.m.shape != (M,) or self.S.shape != (M, M):
            raise InputError(f"variational shapes {self.m.shape}, {self.S.shape} do not match M={M}")
        if self.steps < 1 or self.batch_size < 1:
            raise InputError("steps and batch size must be positive")

    @property
    def M(self) -> int:
        return len(self.inducing)


def init_svgp(
    kernel: ArmKernel,
    inducing: Sequence[BaseArm],
    prior_mean: MeanFn | float = 0.0,
    noise_variance: float = 1.0,
    **kwargs,
) -> SVGPState:
    """SVGP with q(u) equal to the prior p(u)."""
    if not callable(prior_mean):
        prior_mean = constant_mean(prior_mean)
    inducing = tuple(inducing)
    K = kernel.gram(list(inducing))
    return SVGPState(
        kernel=kernel,
        prior_mean=prior_mean,
        noise_variance=float(noise_variance),
        inducing=inducing,
        m=np.zeros(len(inducing)),
        S=K.copy(),
        **kwargs,
    )


def project_psd(S: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    S = 0.5 * (S + S.T)
    w, U = np.linalg.eigh(S)
    if w.min() >= floor:
        return S
    w = np.maximum(w, floor)
    S = (U * w) @ U.T
    return 0.5 * (S + S.T)


class _Terms:
    """Shared intermediate quantities for one (state, batch) pair."""

    def __init__(self, state: SVGPState, arms: Sequence[BaseArm], rewards, total: float):
        self.state = state
        Z = list(state.inducing)
        self.Kzz = state.kernel.gram(Z)
        Lz = jittered_cholesky(self.Kzz)
        self.jitter = float(Lz[0, 0] ** 2 - self.Kzz[0, 0])
        self.Kj = Lz @ Lz.T
        self.cho = (Lz, True)
        self.Lz = Lz
        self.Kinv = linalg.cho_solve(self.cho, np.eye(len(Z)))
        self.arms = list(arms)
        b = len(self.arms)
        self.b = b
        self.scale = float(total) / b if b else 0.0
        if b:
            self.r = np.asarray(rewards, dtype=float) - np.asarray(
                state.prior_mean(self.arms), dtype=float
            )
            self.C = state.kernel(self.arms, Z)  # (b, M)
            self.kdiag = np.asarray(state.kernel.diag(self.arms), dtype=float)
            self.A = self.C @ self.Kinv  # (b, M)
        else:
            self.r = np.zeros(0)
            self.C = np.zeros((0, len(Z)))
            self.kdiag = np.zeros(0)
            self.A = np.zeros((0, len(Z)))

    def elbo(self, m: np.ndarray, S: np.ndarray) -> float:
        s2 = self.state.noise_variance
        M = m.shape[0]
        ell = 0.0
        if self.b:
            mean = self.A @ m
            var = self.kdiag - np.einsum("ij,ij->i", self.A, self.C) + np.einsum(
                "ij,ij->i", self.A @ S, self.A
            )
            ell = self.scale * float(
                np.sum(-0.5 * LOG_2PI - 0.5 * np.log(s2) - ((self.r - mean) ** 2 + var) / (2 * s2))
            )
        try:
            Ls = linalg.cholesky(0.5 * (S + S.T), lower=True)
        except linalg.LinAlgError as exc:
            raise NumericError(f"variational covariance is not positive definite: {exc}") from exc
        logdet_S = 2.0 * np.log(np.diag(Ls)).sum()
        logdet_K = 2.0 * np.log(np.diag(self.Lz)).sum()
        kl = 0.5 * (
            np.trace(self.Kinv @ S) + m @ self.Kinv @ m - M + logdet_K - logdet_S
        )
        return ell - float(kl)

    def natural_target(self) -> tuple[np.ndarray, np.ndarray]:
        """Natural parameters of the batch-conjugate optimum of q."""
        c = self.scale / self.state.noise_variance
        P = self.A.T  # K^{-1} C^T
        theta2 = -0.5 * (self.Kinv + c * P @ P.T)
        theta1 = c * P @ self.r
        return theta1, 0.5 * (theta2 + theta2.T)

    def grad_inducing_contexts(self, m: np.ndarray, S: np.ndarray) -> np.ndarray:
        """d ELBO / d (inducing contexts), shape (M, d)."""
        state = self.state
        Z = list(state.inducing)
        s2 = state.noise_variance
        M = len(Z)
        # KL part: d(-KL)/dK
        G_K = 0.5 * (self.Kinv @ (S + np.outer(m, m)) @ self.Kinv - self.Kinv)
        grad = np.zeros((M, Z[0].dim))
        if self.b:
            mean = self.A @ m
            G_A = (self.scale / s2) * (
                np.outer(self.r - mean, m) + 0.5 * self.C - self.A @ S
            )
            dC = (self.scale / (2 * s2)) * self.A + G_A @ self.Kinv
            G_K = G_K - self.A.T @ G_A @ self.Kinv
            dZX = state.kernel.grad_context(Z, self.arms)  # (M, b, d)
            grad += np.einsum("ij,jid->jd", dC, dZX)
        dZZ = state.kernel.grad_context(Z, Z)  # (M, M, d)
        grad += np.einsum("jl,jld->jd", G_K + G_K.T, dZZ)
        return grad


def svgp_elbo(state: SVGPState, arms: Sequence[BaseArm], rewards, total_count: float) -> float:
    """Minibatch ELBO, with the data term rescaled by total_count / len(arms)."""
    if len(arms) and total_count < len(arms):
        raise InputError(f"total count {total_count} smaller than batch {len(arms)}")
    t = _Terms(state, arms, rewards, total_count)
    return t.elbo(state.m, state.S)


def svgp_ngd_step(
    state: SVGPState,
    arms: Sequence[BaseArm],
    rewards,
    total_count: float,
    ngd_rate: float = 0.1,
    inner_rate: float = 0.01,
    batch_id=None,
) -> SVGPState:
    """One NGD step on (m, S) followed by a gradient step on inducing contexts."""
    if ngd_rate == 0.0 and (inner_rate == 0.0 or not state.learn_inducing):
        return state
    t = _Terms(state, arms, rewards, total_count)
    S_inv = np.linalg.inv(state.S)
    theta1 = S_inv @ state.m
    theta2 = -0.5 * S_inv
    target1, target2 = t.natural_target()
    theta1 = (1.0 - ngd_rate) * theta1 + ngd_rate * target1
    theta2 = (1.0 - ngd_rate) * theta2 + ngd_rate * target2
    if not (np.all(np.isfinite(theta1)) and np.all(np.isfinite(theta2))):
        raise NumericError(f"non-finite natural gradient (batch {batch_id})")
    S_new = project_psd(np.linalg.inv(-(theta2 + theta2.T)))
    m_new = S_new @ theta1
    new = replace(state, m=m_new, S=S_new)
    if state.learn_inducing and inner_rate > 0.0 and len(arms):
        new = _inducing_step(new, arms, rewards, total_count, inner_rate, batch_id)
    return new


def _inducing_step(state, arms, rewards, total_count, rate, batch_id, max_halvings=8):
    """Ascent step on inducing contexts using the per-datum ELBO gradient.

    The step is halved until the batch ELBO does not decrease; if no
    halving succeeds the contexts are left unchanged.
    """
    t = _Terms(state, arms, rewards, total_count)
    g = t.grad_inducing_contexts(state.m, state.S) / max(float(total_count), 1.0)
    if not np.all(np.isfinite(g)):
        raise NumericError(f"non-finite inducing-location gradient (batch {batch_id})")
    if not np.any(g):
        return state
    base = t.elbo(state.m, state.S)
    step = rate
    for _ in range(max_halvings):
        Z_new = tuple(
            BaseArm(z.edge, tuple(np.asarray(z.context) + step * g[j]))
            for j, z in enumerate(state.inducing)
        )
        cand = replace(state, inducing=Z_new)
        try:
            if svgp_elbo(cand, arms, rewards, total_count) >= base:
                return cand
        except NumericError:
            pass
        step *= 0.5
    return state


def svgp_predict(state: SVGPState, arms: Sequence[BaseArm]) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance of f at ``arms`` under q."""
    arms = list(arms)
    Z = list(state.inducing)
    Lz = jittered_cholesky(state.kernel.gram(Z))
    C = state.kernel(arms, Z)
    A = linalg.cho_solve((Lz, True), C.T).T
    mean = np.asarray(state.prior_mean(arms), dtype=float) + A @ state.m
    var = (
        np.asarray(state.kernel.diag(arms), dtype=float)
        - np.einsum("ij,ij->i", A, C)
        + np.einsum("ij,ij->i", A @ state.S, A)
    )
    return mean, np.maximum(var, 0.0)


def svgp_predict_cov(state: SVGPState, arms: Sequence[BaseArm]) -> np.ndarray:
    arms = list(arms)
    Z = list(state.inducing)
    Lz = jittered_cholesky(state.kernel.gram(Z))
    C = state.kernel(arms, Z)
    A = linalg.cho_solve((Lz, True), C.T).T
    cov = state.kernel.gram(arms) - A @ C.T + A @ state.S @ A.T
    return 0.5 * (cov + cov.T)


def reinduce(state: SVGPState, inducing: Sequence[BaseArm]) -> SVGPState:
    """Move q to a new inducing set by marginalizing the current approximation."""
    inducing = tuple(inducing)
    mean, _ = svgp_predict(state, inducing)
    cov = svgp_predict_cov(state, inducing)
    m = mean - np.asarray(state.prior_mean(list(inducing)), dtype=float)
    return replace(state, inducing=inducing, m=m, S=project_psd(cov + 1e-10 * np.eye(len(inducing))))


def select_inducing(
    visit_counts: Mapping[Hashable, int],
    contexts: Mapping[Hashable, Sequence[float]],
    M: int,
) -> list[BaseArm]:
    """The M most-visited edges with their current contexts; ties by edge id."""
    visited = [(e, c) for e, c in visit_counts.items() if c > 0]
    if not visited:
        raise InputError("no visited edges to place inducing points on")
    visited.sort(key=lambda ec: (-ec[1], ec[0]))
    return [BaseArm(e, tuple(contexts[e])) for e, _ in visited[:M]]
