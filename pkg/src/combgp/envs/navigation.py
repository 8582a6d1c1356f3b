"""Energy-efficient navigation as a combinatorial semi-bandit on a road network."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..arms import BaseArm
from ..errors import EnvError, RoutingError
from ..gp import edge_mean, sample_function
from ..kernels import (
    ArmKernel,
    CompositeKernel,
    FeatureKernelParams,
    GraphKernelParams,
    LineGraph,
    graph_matern_gram,
)
from .network import EnergyParams, RoadNetwork, build_line_graph, standardize_contexts
from .routing import bellman_ford_optimum, dijkstra_path, find_negative_cycle

MAX_RESAMPLES = 10


@dataclass(frozen=True, eq=False)
class EnvTruth:
    f: np.ndarray
    noise_variance: float
    seed: int
    attempts: int = 1


@dataclass(frozen=True)
class KernelConfig:
    """Navigation kernel settings; ``None`` outputscales derive from the prior scale."""

    lengthscale: float | Sequence[float] = 1.0
    graph_nu: float = 2.0
    graph_kappa: float = 1.0
    graph_outputscale: float | None = None
    sigma_f: float | None = None
    sigma_f_add: float | None = None
    prior_scale: float = 0.25
    noise_scale: float = 0.1


def edge_arms(network: RoadNetwork) -> list[BaseArm]:
    """One base arm per edge, contexts = standardized (length, speed, grade)."""
    ctx, _ = standardize_contexts(network.attributes())
    return [BaseArm(e.id, tuple(c)) for e, c in zip(network.edges, ctx)]


def navigation_kernel(
    network: RoadNetwork, e_det: np.ndarray, cfg: KernelConfig = KernelConfig()
) -> tuple[CompositeKernel, float, float]:
    """Composite kernel scaled so the mean prior variance is (prior_scale * sd(E_det))^2.

    Returns the kernel, the prior variance target and the noise variance.
    """
    sd_det = float(np.std(e_det))
    prior_var = (cfg.prior_scale * sd_det) ** 2
    noise_var = (cfg.noise_scale * sd_det) ** 2
    lg, w = build_line_graph(network)
    sigma_g = cfg.graph_outputscale
    if sigma_g is None:
        base = graph_matern_gram(lg, w, GraphKernelParams(cfg.graph_nu, cfg.graph_kappa, 1.0))
        sigma_g = 1.0 / float(np.mean(np.diag(base.matrix)))
    gram = graph_matern_gram(lg, w, GraphKernelParams(cfg.graph_nu, cfg.graph_kappa, sigma_g))
    ls = np.broadcast_to(np.asarray(cfg.lengthscale, dtype=float), (3,))
    sf = cfg.sigma_f if cfg.sigma_f is not None else 0.5 * prior_var
    sf2 = cfg.sigma_f_add if cfg.sigma_f_add is not None else 0.5 * prior_var
    kern = CompositeKernel(gram, FeatureKernelParams(sf, tuple(ls)), FeatureKernelParams(sf2, tuple(ls)))
    return kern, prior_var, noise_var


def sample_truth(
    line_graph: LineGraph,
    arms: Sequence[BaseArm],
    kernel: ArmKernel,
    prior_mean: np.ndarray,
    noise_variance: float,
    seed: int,
) -> EnvTruth:
    """Draw f ~ GP(prior_mean, kernel) over the arms, redrawing on negative cycles."""
    table = {a.edge: m for a, m in zip(arms, prior_mean)}
    cycle = None
    for attempt in range(MAX_RESAMPLES + 1):
        sub = int(np.random.SeedSequence([int(seed), attempt]).generate_state(1)[0])
        f = sample_function(kernel, edge_mean(table), arms, sub)
        cycle = find_negative_cycle(line_graph, f)
        if cycle is None:
            return EnvTruth(f, float(noise_variance), sub, attempt + 1)
    raise EnvError(
        f"negative-cost cycle persisted after {MAX_RESAMPLES} redraws: {cycle}", cycle=cycle
    )


class NavigationEnv:
    """Route selection between a fixed source edge and goal edge."""

    mode = "minimize"

    def __init__(
        self,
        network: RoadNetwork,
        source: str,
        goal: str,
        arms: Sequence[BaseArm],
        truth: EnvTruth,
        e_det: np.ndarray,
        kernel: ArmKernel,
        prior_variance: float,
        p_vol: float = 0.0,
    ):
        self.network = network
        self.line_graph, self.weights = build_line_graph(network)
        self.source, self.goal = source, goal
        self.arms = list(arms)
        self.truth = truth
        self.f = truth.f
        self.noise_variance = truth.noise_variance
        self.e_det = np.asarray(e_det, dtype=float)
        self.kernel = kernel
        self.prior_variance = prior_variance
        self.p_vol = float(p_vol)
        self._opt_cache: tuple[list[int], float] | None = None
        self.index = self.line_graph.index

    @property
    def cardinality(self) -> int:
        return len(self.arms)

    @property
    def max_size(self) -> int:
        return len(self.arms)

    @classmethod
    def build(
        cls,
        network: RoadNetwork,
        route: tuple[str, str],
        seed: int,
        kernel_cfg: KernelConfig = KernelConfig(),
        energy: EnergyParams = EnergyParams(),
        p_vol: float = 0.0,
    ) -> "NavigationEnv":
        e_det = network.energy(energy)
        arms = edge_arms(network)
        kern, prior_var, noise_var = navigation_kernel(network, e_det, kernel_cfg)
        lg, _ = build_line_graph(network)
        truth = sample_truth(lg, arms, kern, e_det, noise_var, seed)
        return cls(network, route[0], route[1], arms, truth, e_det, kern, prior_var, p_vol)

    # -- Algorithm 1 hooks -------------------------------------------------

    def observe(self, rng: np.random.Generator) -> LineGraph:
        """Available line graph for this round (connection dropout when p_vol > 0)."""
        if self.p_vol <= 0.0:
            return self.line_graph
        conns = self.line_graph.connections
        for _ in range(100):
            keep = rng.random(len(conns)) >= self.p_vol
            lg = LineGraph(self.line_graph.edges, tuple(c for c, k in zip(conns, keep) if k),
                           self.line_graph.index)
            try:
                dijkstra_path(lg, np.ones(len(self.arms)), self.source, self.goal)
                return lg
            except RoutingError:
                continue
        return self.line_graph

    def select(self, indices: np.ndarray, available: LineGraph) -> list[int]:
        path, _ = dijkstra_path(available, indices, self.source, self.goal)
        return [self.index[e] for e in path]

    def optimum(self, available: LineGraph) -> tuple[list[int], float]:
        if available is self.line_graph and self._opt_cache is not None:
            return self._opt_cache
        path, cost = bellman_ford_optimum(available, self.f, self.source, self.goal)
        out = ([self.index[e] for e in path], cost)
        if available is self.line_graph:
            self._opt_cache = out
        return out

    def draw_rewards(self, chosen: Sequence[int], rng: np.random.Generator) -> np.ndarray:
        idx = np.asarray(chosen, dtype=np.intp)
        return self.f[idx] + np.sqrt(self.noise_variance) * rng.standard_normal(idx.size)

    def regret(self, chosen: Sequence[int], available: LineGraph) -> float:
        _, best = self.optimum(available)
        return float(self.f[np.asarray(chosen, dtype=np.intp)].sum() - best)

    def random_indices(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(len(self.arms))
