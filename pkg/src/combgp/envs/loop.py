"""Learners and the per-round bandit loop.

Each round: observe availability, compute indices from the learner's
posterior, let the environment's oracle pick a super arm, draw semi-bandit
feedback, update the learner, and score against the exact optimum.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .. import gp, svgp
from ..arms import BaseArm
from ..errors import CombGPError, InputError
from ..policies import BIState, ScheduleParams, bi_update_many, compute_indices

DEFAULT_SVGP_THRESHOLD = 3000


# ---------------------------------------------------------------------------
# Learners
# ---------------------------------------------------------------------------


class GPLearner:
    """Exact GP over a fixed arm list, optionally switching to SVGP at scale."""

    kind = "GP"

    def __init__(
        self,
        arms: Sequence[BaseArm],
        kernel,
        prior_mean,
        noise_variance: float,
        sparse: bool = False,
        svgp_threshold: int = DEFAULT_SVGP_THRESHOLD,
        svgp_options: dict | None = None,
        rng: np.random.Generator | None = None,
    ):
        self.arms = list(arms)
        self.noise_variance = float(noise_variance)
        self.state = gp.make_state(kernel, prior_mean, noise_variance, probes=self.arms)
        self.svgp_threshold = svgp_threshold
        self.svgp_options = svgp_options or {}
        self.sparse: SVGPLearner | None = None
        self._rng = rng or np.random.default_rng(0)
        if sparse:
            self._go_sparse()

    def _go_sparse(self) -> None:
        self.sparse = SVGPLearner(
            self.arms,
            self.state.kernel,
            self.state.prior_mean,
            self.noise_variance,
            rng=self._rng,
            **self.svgp_options,
        )
        if self.state.n:
            idx = [self.arms.index(a) for a in self.state.arms]
            self.sparse.update(idx, self.state.y)

    @property
    def n_observations(self) -> int:
        return self.sparse.n_observations if self.sparse else self.state.n

    def posterior(self) -> tuple[np.ndarray, np.ndarray]:
        if self.sparse:
            return self.sparse.posterior()
        return gp.probe_posterior(self.state)

    def cov_block(self, idx: Sequence[int]) -> np.ndarray:
        if self.sparse:
            return self.sparse.cov_block(idx)
        return gp.probe_cov(self.state, idx)

    def update(self, idx: Sequence[int], rewards) -> None:
        if self.sparse:
            self.sparse.update(idx, rewards)
            return
        self.state = gp.condition(self.state, [self.arms[i] for i in idx], rewards)
        if self.state.n > self.svgp_threshold:
            self._go_sparse()


class SVGPLearner:
    """Sparse learner following the inducing-reselection / NGD procedure."""

    kind = "GP"

    def __init__(
        self,
        arms: Sequence[BaseArm],
        kernel,
        prior_mean,
        noise_variance: float,
        M: int = 1000,
        G: int = 1,
        B: int = 2500,
        ngd_rate: float = 0.1,
        inner_rate: float = 0.01,
        learn_inducing: bool = True,
        rng: np.random.Generator | None = None,
    ):
        self.arms = list(arms)
        self.kernel = kernel
        self.prior_mean = prior_mean if callable(prior_mean) else gp.constant_mean(prior_mean)
        self.noise_variance = float(noise_variance)
        self.M, self.G, self.B = int(M), int(G), int(B)
        self.ngd_rate, self.inner_rate = ngd_rate, inner_rate
        self.learn_inducing = learn_inducing
        self.rng = rng or np.random.default_rng(0)
        self.hist_idx: list[int] = []
        self.hist_y: list[float] = []
        self.visits: Counter = Counter()
        self.state: svgp.SVGPState | None = None
        self._post: tuple[np.ndarray, np.ndarray] | None = None
        self._batches = 0

    @property
    def n_observations(self) -> int:
        return len(self.hist_idx)

    def posterior(self):
        if self.state is None:
            mean = np.asarray(self.prior_mean(self.arms), dtype=float)
            return mean, np.asarray(self.kernel.diag(self.arms), dtype=float)
        if self._post is None:
            self._post = svgp.svgp_predict(self.state, self.arms)
        return self._post

    def cov_block(self, idx):
        sub = [self.arms[i] for i in idx]
        if self.state is None:
            return self.kernel.gram(sub)
        return svgp.svgp_predict_cov(self.state, sub)

    def update(self, idx, rewards) -> None:
        idx = list(idx)
        self.hist_idx.extend(idx)
        self.hist_y.extend(float(r) for r in np.asarray(rewards).reshape(-1))
        for i in idx:
            self.visits[self.arms[i].edge] += 1
        contexts = {a.edge: a.context for a in self.arms}
        Z = svgp.select_inducing(self.visits, contexts, self.M)
        if self.state is None:
            self.state = svgp.init_svgp(
                self.kernel, Z, self.prior_mean, self.noise_variance,
                learn_inducing=self.learn_inducing, steps=self.G, batch_size=self.B,
            )
        else:
            old = [z.edge for z in self.state.inducing]
            if [z.edge for z in Z] != old:
                # keep optimized contexts for edges that stay inducing
                moved = {z.edge: z for z in self.state.inducing}
                Z = [moved.get(z.edge, z) for z in Z]
                self.state = svgp.reinduce(self.state, Z)
        N = len(self.hist_idx)
        hist_idx = np.asarray(self.hist_idx)
        hist_y = np.asarray(self.hist_y)
        for _ in range(self.G):
            if N > self.B:
                pick = np.sort(self.rng.choice(N, self.B, replace=False))
            else:
                pick = np.arange(N)
            batch = [self.arms[i] for i in hist_idx[pick]]
            self.state = svgp.svgp_ngd_step(
                self.state, batch, hist_y[pick], N, self.ngd_rate, self.inner_rate,
                batch_id=self._batches,
            )
            self._batches += 1
        self._post = None


class BILearner:
    """Independent Gaussian per arm with conjugate updates."""

    kind = "BI"

    def __init__(self, prior_mean, prior_variance, noise_variance: float):
        mean = np.asarray(prior_mean, dtype=float)
        var = np.broadcast_to(np.asarray(prior_variance, dtype=float), mean.shape).copy()
        self.state = BIState(mean.copy(), var, float(noise_variance))
        self.noise_variance = float(noise_variance)
        self._n = 0

    @property
    def n_observations(self) -> int:
        return self._n

    def posterior(self):
        return self.state.mean, self.state.variance

    def cov_block(self, idx):
        return np.diag(self.state.variance[list(idx)])

    def update(self, idx, rewards) -> None:
        self.state = bi_update_many(self.state, idx, rewards)
        self._n += len(idx)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    """A named algorithm: model kind (GP / BI / RANDOM) plus index family."""

    name: str
    model: str
    family: str | None
    schedule: ScheduleParams | None = None
    rectify_with: str = "noise"

    @classmethod
    def parse(cls, name: str, cardinality: float, xi=1.0, omega=1.0, beta_scale=1.0,
              rectify_with="noise") -> "Policy":
        key = name.strip().upper()
        if key in ("RANDOM", "UNIFORM-RANDOM"):
            return cls("RANDOM", "RANDOM", None)
        try:
            model, family = key.split("-", 1)
        except ValueError:
            raise InputError(f"algorithm name {name!r} is not MODEL-FAMILY") from None
        if model not in ("GP", "BI"):
            raise InputError(f"unknown model {model!r} in {name!r}")
        sched = ScheduleParams(family, cardinality, xi, omega, beta_scale)
        return cls(f"{model}-{sched.family}", model, sched.family, sched, rectify_with)


@dataclass
class RoundResult:
    t: int
    chosen: list[int]
    rewards: np.ndarray
    regret: float
    schedule_value: float
    posterior_var: np.ndarray = field(repr=False)
    cov_block: np.ndarray | None = field(default=None, repr=False)

    @property
    def sigma_sum(self) -> float:
        return float(np.sqrt(self.posterior_var).sum())


class RoundError(CombGPError):
    def __init__(self, t: int, cause: Exception):
        super().__init__(f"round {t}: {type(cause).__name__}: {cause}")
        self.t = t
        self.cause = cause


def run_round(env, policy: Policy, learner, t: int, rng: np.random.Generator,
              track_cov: bool = False) -> RoundResult:
    """One pass of observe / index / select / reward / update for round ``t``."""
    try:
        available = env.observe(rng)
        mean, var = learner.posterior() if learner is not None else (None, None)
        if policy.model == "RANDOM":
            U = env.random_indices(rng)
            sched_val = float("nan")
        else:
            U = compute_indices(
                policy.family, mean, var, t, policy.schedule, rng, mode=env.mode,
                noise_variance=learner.noise_variance, rectify_with=policy.rectify_with,
            )
            sched_val = policy.schedule.reported(t)
        chosen = env.select(U, available)
        rewards = env.draw_rewards(chosen, rng)
        regret = env.regret(chosen, available)
        post_var = np.asarray(var)[chosen] if var is not None else np.zeros(len(chosen))
        block = learner.cov_block(chosen) if (track_cov and learner is not None) else None
        if learner is not None:
            learner.update(chosen, rewards)
    except CombGPError as exc:
        raise RoundError(t, exc) from exc
    return RoundResult(t, chosen, rewards, regret, sched_val, post_var, block)


def make_learner(policy: Policy, env, sparse: bool = False, svgp_threshold: int = DEFAULT_SVGP_THRESHOLD,
                 svgp_options: dict | None = None, rng=None, kernel=None):
    """Fresh learner matching the environment's prior (``kernel`` overrides the GP kernel)."""
    if policy.model == "RANDOM":
        return None
    if policy.model == "BI":
        if hasattr(env, "e_det"):
            return BILearner(env.e_det, env.prior_variance, env.noise_variance)
        return BILearner(np.full(len(env.arms), env.prior_mean), env.kernel.diag(env.arms),
                         env.noise_variance)
    prior = gp.edge_mean({a.edge: m for a, m in zip(env.arms, env.e_det)}) \
        if hasattr(env, "e_det") else env.prior_mean
    return GPLearner(env.arms, kernel if kernel is not None else env.kernel, prior, env.noise_variance, sparse=sparse,
                     svgp_threshold=svgp_threshold, svgp_options=svgp_options, rng=rng)


def run_episode(env, policy: Policy, T: int, rng: np.random.Generator, learner=None,
                track_cov: bool = False, **learner_kw) -> list[RoundResult]:
    if learner is None:
        learner = make_learner(policy, env, rng=rng, **learner_kw)
    return [run_round(env, policy, learner, t, rng, track_cov) for t in range(1, T + 1)]
