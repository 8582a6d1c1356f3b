"""Seeded replicate execution, CSV persistence and bound reports."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import analysis
from .config import ExperimentConfig
from .errors import CombGPError, ConfigError
from .envs.loop import Policy, make_learner, run_round
from .envs.navigation import KernelConfig, NavigationEnv, navigation_kernel
from .envs.network import RoadNetwork, load_network
from .envs.synthetic import SyntheticEnv
from .kernels import ContextKernel, FeatureKernelParams
from .policies import ScheduleParams

log = logging.getLogger(__name__)

CSV_HEADER = ("algorithm", "route", "replicate", "t", "inst_regret", "cum_regret", "beta_t", "path_len", "ms")
SUMMARY_HEADER = ("algorithm", "route", "replicates", "failed", "mean_cum_regret", "stderr_cum_regret", "errors")
BOUNDS_HEADER = (
    "algorithm", "route", "T", "K", "noise_variance", "lambda_star", "gamma_greedy", "gamma_realized",
    "beta_T", "finite_bound", "valid", "label", "mean_cum_regret", "infogain_lemma_pass",
)
SYNTHETIC_ROUTE = "-"
MASK64 = (1 << 64) - 1


def derive_seed(base: int, *parts) -> int:
    """``base XOR blake2b(parts)`` as an unsigned 64-bit integer."""
    key = "|".join(str(p) for p in parts).encode()
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    return (int(base) ^ h) & MASK64


@dataclass(frozen=True)
class TraceRow:
    algorithm: str
    route: str
    replicate: int
    t: int
    inst_regret: float
    cum_regret: float
    beta_t: float
    path_len: int
    ms: float = 0.0

    def sort_key(self):
        return (self.algorithm, self.replicate, self.t, self.route)


@dataclass
class ReplicateResult:
    algorithm: str
    route: str
    replicate: int
    rows: list[TraceRow] = field(default_factory=list)
    error: str | None = None
    lambda_star: float = 0.0
    gamma_realized: float = 0.0
    gamma_greedy: float = float("nan")
    max_path_len: int = 0
    noise_variance: float = float("nan")
    cardinality: float = 1.0
    infogain_pass: bool = True

    @property
    def final_regret(self) -> float:
        return self.rows[-1].cum_regret if self.rows else float("nan")


@dataclass
class ExperimentOutput:
    rows: list[TraceRow]
    summary: list[dict]
    bounds: list[dict]
    results: list[ReplicateResult] = field(repr=False, default_factory=list)


# ---------------------------------------------------------------------------
# Environment construction
# ---------------------------------------------------------------------------


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("combgp") / "data" / name))


def resolve_network_path(cfg: ExperimentConfig) -> Path:
    if cfg.network.startswith("bundled:"):
        return bundled_path(cfg.network.split(":", 1)[1])
    return cfg.resolve(cfg.network)


@lru_cache(maxsize=8)
def _cached_network(path: str) -> RoadNetwork:
    return load_network(path)


def network_for(cfg: ExperimentConfig) -> RoadNetwork:
    path = resolve_network_path(cfg)
    if not path.exists():
        raise ConfigError(f"network file not found: {path}")
    return _cached_network(str(path))


def kernel_config(cfg: ExperimentConfig, lengthscale: float | None = None) -> KernelConfig:
    return KernelConfig(
        lengthscale=cfg.lengthscale if lengthscale is None else lengthscale,
        graph_nu=cfg.nu_g,
        graph_kappa=cfg.kappa_g,
        graph_outputscale=cfg.sigma_g,
        sigma_f=cfg.sigma_f,
        sigma_f_add=cfg.sigma_f_add,
        prior_scale=cfg.prior_scale,
        noise_scale=cfg.noise_scale,
    )


def truth_seed(cfg: ExperimentConfig, route: str, replicate: int) -> int:
    rep = replicate if cfg.resample_truth else 0
    return derive_seed(cfg.seed, "truth", route, rep)


def policy_seed(cfg: ExperimentConfig, algorithm: str, route: str, replicate: int) -> int:
    return derive_seed(cfg.seed, "policy", algorithm, route, replicate)


def build_env(cfg: ExperimentConfig, route: str, replicate: int):
    seed = truth_seed(cfg, route, replicate)
    if cfg.env_kind == "synthetic":
        return SyntheticEnv.random(
            cfg.n_arms, cfg.K, seed, dim=cfg.dim, lengthscale=cfg.lengthscale,
            outputscale=cfg.sigma_f if cfg.sigma_f is not None else 1.0,
            noise_variance=cfg.noise_variance, p_avail=cfg.p_avail,
        )
    net = network_for(cfg)
    if route not in net.routes:
        raise ConfigError(f"route {route!r} not in network (have {sorted(net.routes)})")
    return NavigationEnv.build(net, net.routes[route], seed, kernel_config(cfg), p_vol=cfg.p_vol)


def learner_kernel(cfg: ExperimentConfig, env, lengthscale: float | None):
    """Kernel used by the learner; differs from the truth kernel only in a sweep."""
    if lengthscale is None:
        return None
    if cfg.env_kind == "synthetic":
        sf = cfg.sigma_f if cfg.sigma_f is not None else 1.0
        return ContextKernel(FeatureKernelParams(sf, (lengthscale,) * cfg.dim))
    kern, _, _ = navigation_kernel(env.network, env.e_det, kernel_config(cfg, lengthscale))
    return kern


def routes_for(cfg: ExperimentConfig) -> tuple[str, ...]:
    return (SYNTHETIC_ROUTE,) if cfg.env_kind == "synthetic" else cfg.routes


# ---------------------------------------------------------------------------
# Replicates
# ---------------------------------------------------------------------------


def run_replicate(cfg: ExperimentConfig, algorithm: str, route: str, replicate: int,
                  lengthscale: float | None = None) -> ReplicateResult:
    """One seeded run of T rounds; a failing round aborts only this replicate."""
    res = ReplicateResult(algorithm, route, replicate)
    try:
        env = build_env(cfg, route, replicate)
        policy = Policy.parse(algorithm, env.cardinality, cfg.xi, cfg.omega, cfg.beta_scale,
                              cfg.rectify_with)
        rng = np.random.default_rng(policy_seed(cfg, policy.name, route, replicate))
        svgp_opts = {"M": cfg.svgp_M, "G": cfg.svgp_G, "B": cfg.svgp_B}
        learner = make_learner(policy, env, sparse=cfg.svgp_enabled, svgp_threshold=cfg.svgp_threshold,
                               svgp_options=svgp_opts, rng=rng,
                               kernel=learner_kernel(cfg, env, lengthscale))
        res.noise_variance = env.noise_variance
        res.cardinality = env.cardinality
        track = cfg.bounds_enabled and policy.model == "GP"
        tracker = analysis.LambdaStarTracker()
        chosen_vars = []
        cum = 0.0
        for t in range(1, cfg.T + 1):
            t0 = time.perf_counter()
            r = run_round(env, policy, learner, t, rng, track_cov=track)
            ms = (time.perf_counter() - t0) * 1e3 if cfg.wall_time else 0.0
            cum += r.regret
            res.rows.append(TraceRow(policy.name, route, replicate, t, r.regret, cum,
                                     r.schedule_value, len(r.chosen), ms))
            res.max_path_len = max(res.max_path_len, len(r.chosen))
            if track:
                tracker.update(0.5 * (r.cov_block + r.cov_block.T))
                res.gamma_realized += analysis.information_gain(r.cov_block, env.noise_variance)
                chosen_vars.append(r.posterior_var)
        if track:
            res.lambda_star = tracker.value
            rep = analysis.verify_infogain_inequality(chosen_vars, res.gamma_realized,
                                                      tracker.value, env.noise_variance)
            res.infogain_pass = rep.passed
            res.gamma_greedy = analysis.greedy_gamma(
                env.arms, learner_kernel(cfg, env, lengthscale) or env.kernel,
                env.noise_variance, cfg.T * max(res.max_path_len, 1),
            )
    except CombGPError as exc:
        res.error = str(exc)
        log.error("%s route %s replicate %d failed: %s", algorithm, route, replicate, exc)
    log.info("%s route %s replicate %d: cumulative regret %.6g", algorithm, route, replicate,
             res.final_regret)
    return res


def _task(args):
    return run_replicate(*args)


def _run_tasks(tasks: list[tuple], jobs: int) -> list[ReplicateResult]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_task(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_task, tasks))


def summarize(results: Sequence[ReplicateResult], extra: dict | None = None) -> list[dict]:
    groups: dict[tuple, list[ReplicateResult]] = {}
    for r in results:
        groups.setdefault((r.algorithm, r.route), []).append(r)
    out = []
    for (alg, route), rs in sorted(groups.items()):
        ok = [r.final_regret for r in rs if r.error is None]
        n = len(ok)
        mean = float(np.mean(ok)) if n else float("nan")
        se = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else 0.0 if n == 1 else float("nan")
        errs = "; ".join(f"rep{r.replicate}: {r.error}" for r in rs if r.error)
        row = {"algorithm": alg, "route": route, "replicates": n, "failed": len(rs) - n,
               "mean_cum_regret": mean, "stderr_cum_regret": se, "errors": errs}
        if extra:
            row.update(extra)
        out.append(row)
    return out


def bound_report(cfg: ExperimentConfig, results: Sequence[ReplicateResult]) -> list[dict]:
    """Finite-arm bound per GP algorithm with empirical lambda* and greedy gamma."""
    groups: dict[tuple, list[ReplicateResult]] = {}
    for r in results:
        if r.error is None and r.algorithm.startswith("GP-"):
            groups.setdefault((r.algorithm, r.route), []).append(r)
    out = []
    for (alg, route), rs in sorted(groups.items()):
        fam = alg.split("-", 1)[1]
        K = max(r.max_path_len for r in rs)
        lam = max(r.lambda_star for r in rs)
        gamma = max(r.gamma_greedy for r in rs)
        noise = rs[0].noise_variance
        sched = ScheduleParams(fam, rs[0].cardinality, cfg.xi, cfg.omega, cfg.beta_scale)
        inputs = analysis.BoundInputs(cfg.T, K, noise, lam, gamma, sched)
        b = analysis.finite_regret_bound(fam, inputs)
        out.append({
            "algorithm": alg, "route": route, "T": cfg.T, "K": K, "noise_variance": noise,
            "lambda_star": lam, "gamma_greedy": gamma,
            "gamma_realized": float(np.mean([r.gamma_realized for r in rs])),
            "beta_T": b.beta_T, "finite_bound": b.value, "valid": b.valid, "label": b.label,
            "mean_cum_regret": float(np.mean([r.final_regret for r in rs])),
            "infogain_lemma_pass": all(r.infogain_pass for r in rs),
        })
    return out


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, lengthscale: float | None = None) -> ExperimentOutput:
    tasks = [
        (cfg, alg.upper(), route, rep, lengthscale)
        for alg in cfg.algorithms
        for route in routes_for(cfg)
        for rep in range(cfg.replicates)
    ]
    if cfg.env_kind == "navigation":
        net = network_for(cfg)
        for route in cfg.routes:
            if route not in net.routes:
                raise ConfigError(f"route {route!r} not in network (have {sorted(net.routes)})")
    results = _run_tasks(tasks, jobs)
    results.sort(key=lambda r: (r.algorithm, r.route, r.replicate))
    rows = sorted((row for r in results for row in r.rows), key=TraceRow.sort_key)
    bounds = bound_report(cfg, results) if cfg.bounds_enabled else []
    return ExperimentOutput(rows, summarize(results), bounds, results)


def sweep_lengthscale(cfg: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """One summary row per (lengthscale, algorithm, route); truths are shared across lengthscales."""
    cfg = replace(cfg, bounds_enabled=False)
    out = []
    for ls in cfg.lengthscale_sweep:
        out.extend(summarize(run_experiment(cfg, jobs, lengthscale=ls).results, {"lengthscale": ls}))
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    return str(v)


def _write(lines: Iterable[Sequence], header: Sequence[str], path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for line in lines:
        w.writerow([_fmt(v) for v in line])
    text = buf.getvalue()
    if hasattr(path, "write"):
        path.write(text)
        return
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CombGPError(f"cannot write {path}: {exc.strerror}") from None


def emit_csv(rows: Sequence[TraceRow], path) -> None:
    """Write trace rows sorted by (algorithm, replicate, t)."""
    ordered = sorted(rows, key=TraceRow.sort_key)
    _write(([getattr(r, c) for c in CSV_HEADER] for r in ordered), CSV_HEADER, path)


def emit_table(records: Sequence[dict], header: Sequence[str], path) -> None:
    _write(([rec.get(c, "") for c in header] for rec in records), header, path)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
