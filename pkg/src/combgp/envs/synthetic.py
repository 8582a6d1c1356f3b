"""Unstructured top-K semi-bandit over a finite pool of context arms."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..arms import BaseArm
from ..gp import sample_function
from ..kernels import ArmKernel, ContextKernel, FeatureKernelParams
from .routing import topk_oracle


class SyntheticEnv:
    """Reward maximization; a super arm is any min(K, |A_t|) available arms."""

    mode = "maximize"

    def __init__(
        self,
        arms: Sequence[BaseArm],
        f: np.ndarray,
        noise_variance: float,
        K: int,
        kernel: ArmKernel,
        prior_mean: float = 0.0,
        p_avail: float = 1.0,
    ):
        self.arms = list(arms)
        self.f = np.asarray(f, dtype=float)
        self.noise_variance = float(noise_variance)
        self.K = int(K)
        self.kernel = kernel
        self.prior_mean = float(prior_mean)
        self.p_avail = float(p_avail)

    @property
    def cardinality(self) -> int:
        return len(self.arms)

    @property
    def max_size(self) -> int:
        return self.K

    @classmethod
    def random(
        cls,
        n_arms: int,
        K: int,
        seed: int,
        dim: int = 2,
        lengthscale: float = 0.5,
        outputscale: float = 1.0,
        noise_variance: float = 0.1,
        p_avail: float = 1.0,
    ) -> "SyntheticEnv":
        rng = np.random.default_rng(seed)
        arms = [BaseArm(i, tuple(rng.uniform(0.0, 1.0, dim))) for i in range(n_arms)]
        kern = ContextKernel(FeatureKernelParams(outputscale, (lengthscale,) * dim))
        f = sample_function(kern, 0.0, arms, rng)
        return cls(arms, f, noise_variance, K, kern, 0.0, p_avail)

    def observe(self, rng: np.random.Generator) -> np.ndarray:
        if self.p_avail >= 1.0:
            return np.ones(len(self.arms), dtype=bool)
        mask = rng.random(len(self.arms)) < self.p_avail
        if not mask.any():
            mask[rng.integers(len(self.arms))] = True
        return mask

    def select(self, indices: np.ndarray, available: np.ndarray) -> list[int]:
        return topk_oracle(indices, self.K, "maximize", available)

    def optimum(self, available: np.ndarray) -> tuple[list[int], float]:
        best = topk_oracle(self.f, self.K, "maximize", available)
        return best, float(self.f[best].sum())

    def draw_rewards(self, chosen: Sequence[int], rng: np.random.Generator) -> np.ndarray:
        idx = np.asarray(chosen, dtype=np.intp)
        return self.f[idx] + np.sqrt(self.noise_variance) * rng.standard_normal(idx.size)

    def regret(self, chosen: Sequence[int], available: np.ndarray) -> float:
        _, best = self.optimum(available)
        return float(best - self.f[np.asarray(chosen, dtype=np.intp)].sum())

    def random_indices(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(len(self.arms))
