"""Road networks, the deterministic energy prior and context features."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import ConfigError, InputError
from ..kernels import LineGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    length: float  # m
    speed: float  # m/s
    grade: float  # rad


@dataclass(frozen=True)
class EnergyParams:
    mass: float = 1830.0
    rolling_resistance: float = 0.01
    frontal_area: float = 2.6
    drag: float = 0.35
    efficiency: float = 0.98
    recuperation: float = 0.96
    gravity: float = 9.82
    air_density: float = 1.2

    def __post_init__(self) -> None:
        for name in ("mass", "frontal_area", "gravity", "air_density"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        for name in ("rolling_resistance", "drag", "efficiency", "recuperation"):
            if not 0 < getattr(self, name) < 2:
                raise InputError(f"{name} must lie in (0, 2)")


def deterministic_energy(length, speed, grade, params: EnergyParams = EnergyParams()):
    """Energy in Wh for driving an edge at constant speed.

    Positive mechanical work is divided by the powertrain efficiency;
    negative work (recuperation) is multiplied by the recuperation efficiency.
    """
    length = np.asarray(length, dtype=float)
    speed = np.asarray(speed, dtype=float)
    grade = np.asarray(grade, dtype=float)
    p = params
    work = (
        p.mass * p.gravity * length * np.sin(grade)
        + p.mass * p.gravity * p.rolling_resistance * length * np.cos(grade)
        + 0.5 * p.drag * p.frontal_area * p.air_density * length * speed**2
    )
    out = np.where(work >= 0, work / (3600.0 * p.efficiency), work * p.recuperation / 3600.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RoadNetwork:
    edges: tuple[Edge, ...]
    connections: tuple[tuple[str, str], ...]
    routes: Mapping[str, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.edges:
            raise InputError("network has no edges")
        by_id = {}
        for e in self.edges:
            if e.id in by_id:
                raise InputError(f"duplicate edge id {e.id!r}")
            if not (e.length > 0 and e.speed > 0):
                raise InputError(f"edge {e.id!r} needs positive length and speed")
            if not all(map(math.isfinite, (e.length, e.speed, e.grade))):
                raise InputError(f"edge {e.id!r} has non-finite attributes")
            by_id[e.id] = e
        for e1, e2 in self.connections:
            if e1 not in by_id or e2 not in by_id:
                raise InputError(f"connection ({e1}, {e2}) references an unknown edge")
            if by_id[e1].head != by_id[e2].tail:
                raise InputError(f"connection ({e1}, {e2}) does not chain head to tail")
        object.__setattr__(self, "_by_id", by_id)

    def edge(self, eid: str) -> Edge:
        return self._by_id[eid]

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    @property
    def vertices(self) -> tuple[str, ...]:
        seen = dict.fromkeys(v for e in self.edges for v in (e.tail, e.head))
        return tuple(seen)

    def attributes(self) -> np.ndarray:
        """(n_edges, 3) array of length, speed, grade."""
        return np.array([[e.length, e.speed, e.grade] for e in self.edges], dtype=float)

    def energy(self, params: EnergyParams = EnergyParams()) -> np.ndarray:
        a = self.attributes()
        return np.asarray(deterministic_energy(a[:, 0], a[:, 1], a[:, 2], params))


def build_line_graph(network: RoadNetwork) -> tuple[LineGraph, np.ndarray]:
    """Line graph plus per-connection weights mean_length / length(e1)."""
    if not network.edges:
        raise InputError("empty edge set")
    lg = LineGraph(network.edge_ids, tuple(network.connections))
    lengths = np.array([e.length for e in network.edges])
    mean_len = lengths.mean()
    w = np.array([mean_len / network.edge(e1).length for e1, _ in network.connections])
    return lg, w


def standardize_contexts(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each column to unit population variance (no centering).

    Returns the scaled array and a boolean flag per column marking
    zero-variance columns that were passed through unchanged.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] < 2:
        raise InputError("need at least two rows to standardize")
    sd = raw.std(axis=0)
    degenerate = sd <= 1e-12 * np.maximum(1.0, np.abs(raw).max(axis=0))
    if degenerate.any():
        log.warning("zero-variance context columns left unscaled: %s", np.flatnonzero(degenerate))
    scale = np.where(degenerate, 1.0, sd)
    return raw / scale, degenerate


def largest_scc(network: RoadNetwork) -> tuple[RoadNetwork, list[str]]:
    """Restrict to the largest strongly connected component of the line graph."""
    ids = network.edge_ids
    idx = {e: i for i, e in enumerate(ids)}
    n = len(ids)
    rows = [idx[a] for a, _ in network.connections]
    cols = [idx[b] for _, b in network.connections]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(adj, directed=True, connection="strong")
    sizes = np.bincount(labels)
    # largest component; ties broken by the smallest member edge id
    best = max(range(len(sizes)), key=lambda c: (sizes[c], -min(i for i in range(n) if labels[i] == c)))
    keep = {ids[i] for i in range(n) if labels[i] == best}
    dropped = [e for e in ids if e not in keep]
    if dropped:
        log.warning("dropping %d edges outside the largest strongly connected component: %s",
                    len(dropped), dropped)
    edges = tuple(e for e in network.edges if e.id in keep)
    conns = tuple(c for c in network.connections if c[0] in keep and c[1] in keep)
    routes = dict(network.routes)
    return RoadNetwork(edges, conns, routes), dropped


# ---------------------------------------------------------------------------
# Line-oriented file format
# ---------------------------------------------------------------------------


def parse_network(text: str, source: str = "<string>") -> RoadNetwork:
    edges: list[Edge] = []
    conns: list[tuple[str, str]] = []
    routes: dict[str, tuple[str, str]] = {}
    known: dict[str, int] = {}
    pending: list[tuple[int, str, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        try:
            if kind == "edge":
                if len(tok) != 7:
                    raise ConfigError(f"edge record needs 6 fields, got {len(tok) - 1}", lineno)
                eid = tok[1]
                if eid in known:
                    raise ConfigError(f"duplicate edge id {eid!r}", lineno)
                length, speed, grade = (float(v) for v in tok[4:7])
                if not (length > 0 and speed > 0) or not math.isfinite(grade):
                    raise ConfigError(f"edge {eid!r} needs positive length/speed, finite grade", lineno)
                known[eid] = lineno
                edges.append(Edge(eid, tok[2], tok[3], length, speed, grade))
            elif kind == "conn":
                if len(tok) != 3:
                    raise ConfigError("conn record needs 2 edge ids", lineno)
                pending.append((lineno, tok[1], tok[2]))
            elif kind == "route":
                if len(tok) != 4:
                    raise ConfigError("route record needs name, source, goal", lineno)
                routes[tok[1]] = (tok[2], tok[3])
            else:
                raise ConfigError(f"unknown record type {kind!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"could not parse numbers: {exc}", lineno) from None
    by_id = {e.id: e for e in edges}
    for lineno, a, b in pending:
        for e in (a, b):
            if e not in by_id:
                raise ConfigError(f"connection references undefined edge {e!r}", lineno)
        if by_id[a].head != by_id[b].tail:
            raise ConfigError(f"connection {a} -> {b} does not chain head to tail", lineno)
        conns.append((a, b))
    if not edges:
        raise ConfigError(f"{source}: no edge records")
    return RoadNetwork(tuple(edges), tuple(conns), routes)


def load_network(path, restrict: bool = True) -> RoadNetwork:
    """Read a network file; optionally restrict to the largest SCC and check routes."""
    with open(path) as fh:
        net = parse_network(fh.read(), str(path))
    if restrict:
        net, _ = largest_scc(net)
        keep = set(net.edge_ids)
        for name, (s, g) in net.routes.items():
            for e in (s, g):
                if e not in keep:
                    raise ConfigError(f"route {name!r} endpoint {e!r} is outside the routing component")
    return net


def format_network(net: RoadNetwork) -> str:
    lines = [
        f"edge {e.id} {e.tail} {e.head} {e.length!r} {e.speed!r} {e.grade!r}" for e in net.edges
    ]
    lines += [f"conn {a} {b}" for a, b in net.connections]
    lines += [f"route {name} {s} {g}" for name, (s, g) in net.routes.items()]
    return "\n".join(lines) + "\n"


def grid_network(
    n: int = 5,
    seed: int = 0,
    block_length: tuple[float, float] = (80.0, 250.0),
    speeds: Sequence[float] = (8.33, 13.89, 16.67),
    elevation_sd: float = 6.0,
    uturns: bool = False,
) -> RoadNetwork:
    """Seeded n x n bidirectional grid with random lengths, speed limits and elevations.

    Grades follow from vertex elevations, so the deterministic energy of any
    closed loop is positive.  One route runs corner to corner.
    """
    rng = np.random.default_rng(seed)
    elev = rng.normal(0.0, elevation_sd, size=(n, n))

    def vid(i, j):
        return f"v{i}_{j}"

    edges: list[Edge] = []
    seg_len: dict[frozenset, float] = {}
    seg_speed: dict[frozenset, float] = {}
    k = 0
    for i in range(n):
        for j in range(n):
            for di, dj in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                a, b = i + di, j + dj
                if not (0 <= a < n and 0 <= b < n):
                    continue
                key = frozenset({(i, j), (a, b)})
                if key not in seg_len:
                    seg_len[key] = float(rng.uniform(*block_length))
                    seg_speed[key] = float(rng.choice(speeds))
                L = seg_len[key]
                grade = math.atan2(elev[a, b] - elev[i, j], L)
                edges.append(Edge(f"e{k:03d}", vid(i, j), vid(a, b), L, seg_speed[key], grade))
                k += 1
    out_of: dict[str, list[Edge]] = {}
    for e in edges:
        out_of.setdefault(e.tail, []).append(e)
    conns = []
    for e in edges:
        for e2 in out_of.get(e.head, []):
            if not uturns and e2.head == e.tail:
                continue
            conns.append((e.id, e2.id))
    src = next(e for e in edges if e.tail == vid(0, 0) and e.head == vid(0, 1))
    dst = next(e for e in edges if e.tail == vid(n - 1, n - 2) and e.head == vid(n - 1, n - 1))
    routes = {"A": (src.id, dst.id)}
    src_b = next(e for e in edges if e.tail == vid(n - 1, 0) and e.head == vid(n - 2, 0))
    dst_b = next(e for e in edges if e.tail == vid(0, n - 2) and e.head == vid(0, n - 1))
    routes["B"] = (src_b.id, dst_b.id)
    return RoadNetwork(tuple(edges), tuple(conns), routes)
