"""``combgp`` command line.

Exit codes: 0 success, 1 usage, 2 config or parse error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import analysis
from .config import ExperimentConfig, load_config
from .errors import CombGPError, ConfigError, InputError
from .envs.network import largest_scc, parse_network
from .policies import ScheduleParams

EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
SWEEP_HEADER = ("lengthscale", "algorithm", "route", "replicates", "failed", "mean_cum_regret",
                "stderr_cum_regret", "errors")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_flag", help="experiment config file")
    common.add_argument("--out", help="output CSV path (default: stdout)")
    common.add_argument("--seed", type=int, help="override the base seed (u64)")
    common.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
    common.add_argument("--log-level", choices=tuple(LOG_LEVELS), default="warn")

    p = _Parser(prog="combgp", description="Combinatorial GP semi-bandit experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)
    for name, help_ in (
        ("run", "run the configured experiment and write regret traces"),
        ("bounds", "evaluate the finite and infinite regret bounds for given constants"),
        ("gamma", "greedy information-gain report over the configured arm pool"),
        ("tau", "discretization-size table for t = 1..T"),
        ("sweep-lengthscale", "regret summary per learner lengthscale and algorithm"),
    ):
        sp = sub.add_parser(name, help=help_, parents=[common])
        sp.add_argument("config", nargs="?", help="experiment config file")
    sp = sub.add_parser("validate", help="structural checks of a network file", parents=[common])
    sp.add_argument("network", help="network file")
    return p


def _config(args) -> ExperimentConfig:
    path = args.config or args.config_flag
    if not path:
        raise ConfigError("a config file is required (positional or --config)")
    cfg = load_config(path)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _sidecar(out: str | None, suffix: str) -> str | None:
    if out is None:
        return None
    p = Path(out)
    return str(p.with_name(p.stem + suffix + ".csv"))


def _emit(emitter, payload, path, *extra):
    if path is None:
        emitter(payload, *extra, sys.stdout) if extra else emitter(payload, sys.stdout)
    else:
        emitter(payload, *extra, path) if extra else emitter(payload, path)


def cmd_run(args) -> int:
    from .experiment import BOUNDS_HEADER, SUMMARY_HEADER, emit_csv, emit_table, run_experiment

    cfg = _config(args)
    out = run_experiment(cfg, jobs=args.jobs)
    emit_csv(out.rows, args.out if args.out else sys.stdout)
    summary_path = _sidecar(args.out, ".summary")
    emit_table(out.summary, SUMMARY_HEADER, summary_path or sys.stderr)
    if out.bounds:
        emit_table(out.bounds, BOUNDS_HEADER, _sidecar(args.out, ".bounds") or sys.stderr)
    failed = sum(s["failed"] for s in out.summary)
    if failed:
        logging.getLogger("combgp").warning("%d replicate(s) failed; see summary", failed)
    return 0


def cmd_sweep(args) -> int:
    from .experiment import emit_table, sweep_lengthscale

    cfg = _config(args)
    rows = sweep_lengthscale(cfg, jobs=args.jobs)
    emit_table(rows, SWEEP_HEADER, args.out if args.out else sys.stdout)
    return 0


def _families(cfg: ExperimentConfig) -> list[str]:
    fams = []
    for a in cfg.algorithms:
        if "-" in a:
            f = a.upper().split("-", 1)[1]
            if f not in fams:
                fams.append(f)
    return fams or ["UCB"]


def cmd_bounds(args) -> int:
    from .experiment import emit_table

    cfg = _config(args)
    rows = []
    for fam in _families(cfg):
        sched = ScheduleParams(fam, cfg.bound_cardinality, cfg.xi, cfg.omega, cfg.beta_scale)
        inputs = analysis.BoundInputs(
            cfg.T, cfg.const_K, cfg.const_sigma**2, cfg.bound_lambda_star, cfg.bound_gamma, sched,
            cfg.C1, cfg.C2, cfg.C3, cfg.L, cfg.d, empirical_constants=False,
        )
        fin = analysis.finite_regret_bound(fam, inputs)
        inf = analysis.infinite_regret_bound(fam, inputs)
        for b in (fin, inf):
            rows.append({"family": fam, "setting": b.setting, "T": cfg.T, "K": cfg.const_K,
                         "beta_T": b.beta_T, "bound": b.value, "valid": b.valid, "label": b.label})
    emit_table(rows, ("family", "setting", "T", "K", "beta_T", "bound", "valid", "label"),
               args.out if args.out else sys.stdout)
    return 0


def cmd_gamma(args) -> int:
    from .experiment import build_env, emit_table, routes_for

    cfg = _config(args)
    rows = []
    for route in routes_for(cfg):
        env = build_env(cfg, route, 0)
        K = cfg.K if cfg.env_kind == "synthetic" else cfg.const_K
        curve = analysis.greedy_gamma_curve(env.arms, env.kernel, env.noise_variance, cfg.T * K)
        for T in range(1, cfg.T + 1):
            rows.append({"route": route, "T": T, "budget": T * K, "gamma_greedy": float(curve[T * K])})
    emit_table(rows, ("route", "T", "budget", "gamma_greedy"), args.out if args.out else sys.stdout)
    return 0


def cmd_tau(args) -> int:
    from .experiment import emit_table

    cfg = _config(args)
    rows = []
    for fam in _families(cfg):
        for t in range(1, cfg.T + 1):
            c = (t, cfg.const_K, cfg.L, cfg.d, cfg.C1, cfg.C2, cfg.C3, cfg.const_sigma, cfg.xi, cfg.omega)
            remark = analysis.tau_remark(fam, *c)
            tau = analysis.tau_t(fam, *c)
            rows.append({"family": fam, "t": t, "tau_remark": float(math.ceil(remark)), "tau_t": tau})
    emit_table(rows, ("family", "t", "tau_remark", "tau_t"), args.out if args.out else sys.stdout)
    return 0


def cmd_validate(args) -> int:
    from .envs.routing import dijkstra_path
    from .envs.network import build_line_graph

    try:
        text = Path(args.network).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read network {args.network}: {exc.strerror}") from None
    net = parse_network(text, args.network)
    restricted, dropped = largest_scc(net)
    lg, _ = build_line_graph(restricted)
    problems = []
    keep = set(restricted.edge_ids)
    for name, (s, g) in sorted(net.routes.items()):
        if s not in keep or g not in keep:
            problems.append(f"route {name}: endpoint outside the routing component")
            continue
        try:
            dijkstra_path(lg, [1.0] * len(lg.edges), s, g)
        except CombGPError as exc:
            problems.append(f"route {name}: {exc}")
    print(f"edges: {len(net.edges)}  connections: {len(net.connections)}  routes: {len(net.routes)}")
    print(f"largest strongly connected component: {len(restricted.edges)} edges; dropped {len(dropped)}")
    for p in problems:
        print(f"error: {p}")
    return EXIT_CONFIG if problems else 0


COMMANDS = {
    "run": cmd_run,
    "bounds": cmd_bounds,
    "gamma": cmd_gamma,
    "tau": cmd_tau,
    "validate": cmd_validate,
    "sweep-lengthscale": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=LOG_LEVELS[args.log_level], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("combgp: error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"combgp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CombGPError as exc:
        print(f"combgp: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"combgp: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
