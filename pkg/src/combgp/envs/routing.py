"""Shortest paths on line graphs with costs on nodes (network edges).

A path's cost is the sum of its node costs, both endpoints included.  Among
equal-cost optima the lexicographically smallest sequence of edge ids is
returned; both solvers share that extraction so their answers coincide on
non-negative instances.
"""

from __future__ import annotations

import heapq
from typing import Hashable, Sequence

import numpy as np

from ..errors import EnvError, InputError, RoutingError
from ..kernels import LineGraph


def _adjacency(lg: LineGraph):
    succ = lg.successors()
    pred = lg.predecessors()
    return succ, pred


def _lex_extract(lg, succ, dist_to_goal, costs, s, g, tol):
    """Walk forward from s picking the smallest-id successor that stays optimal."""
    ids = lg.edges
    path = [s]
    seen = {s}
    cur = s
    while cur != g:
        best = None
        for w in succ[cur]:
            if w in seen or not np.isfinite(dist_to_goal[w]):
                continue
            if abs(costs[cur] + dist_to_goal[w] - dist_to_goal[cur]) <= tol:
                if best is None or ids[w] < ids[best]:
                    best = w
        if best is None:  # pragma: no cover - only with zero-cost cycles
            raise RoutingError(f"could not extract a simple optimal path at {ids[cur]!r}")
        path.append(best)
        seen.add(best)
        cur = best
    return path


def _tolerance(costs) -> float:
    return 1e-9 * (1.0 + float(np.abs(costs).sum()))


def _endpoints(lg: LineGraph, source: Hashable, goal: Hashable) -> tuple[int, int]:
    try:
        return lg.index[source], lg.index[goal]
    except KeyError as exc:
        raise InputError(f"edge {exc.args[0]!r} is not in the line graph") from None


def dijkstra_path(
    lg: LineGraph, costs: Sequence[float], source: Hashable, goal: Hashable
) -> tuple[list[Hashable], float]:
    """Minimum node-cost path from ``source`` to ``goal`` for non-negative costs."""
    c = np.asarray(costs, dtype=float)
    if c.shape != (len(lg.edges),):
        raise InputError(f"expected {len(lg.edges)} costs, got {c.shape}")
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise InputError("Dijkstra needs finite non-negative costs")
    s, g = _endpoints(lg, source, goal)
    succ, pred = _adjacency(lg)
    # distances to the goal, including each node's own cost
    dist = np.full(len(c), np.inf)
    dist[g] = c[g]
    heap = [(c[g], g)]
    done = np.zeros(len(c), dtype=bool)
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        for p in pred[v]:
            nd = c[p] + d
            if nd < dist[p]:
                dist[p] = nd
                heapq.heappush(heap, (nd, p))
    if not np.isfinite(dist[s]):
        raise RoutingError(f"goal {goal!r} unreachable from {source!r}")
    path = _lex_extract(lg, succ, dist, c, s, g, _tolerance(c))
    return [lg.edges[i] for i in path], float(c[path].sum())


def _find_cycle(pred_ptr: np.ndarray, start: int, n: int) -> list[int]:
    v = start
    for _ in range(n):
        v = pred_ptr[v]
    cycle = [v]
    u = pred_ptr[v]
    while u != v:
        cycle.append(u)
        u = pred_ptr[u]
    return cycle


def _reachable(adj: list[list[int]], start: int) -> np.ndarray:
    seen = np.zeros(len(adj), dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(w)
    return seen


def bellman_ford_optimum(
    lg: LineGraph, costs: Sequence[float], source: Hashable, goal: Hashable
) -> tuple[list[Hashable], float]:
    """Exact minimum node-cost path; costs may be negative but no negative cycle may be reachable."""
    c = np.asarray(costs, dtype=float)
    if c.shape != (len(lg.edges),):
        raise InputError(f"expected {len(lg.edges)} costs, got {c.shape}")
    s, g = _endpoints(lg, source, goal)
    succ, pred = _adjacency(lg)
    n = len(c)
    # restrict to nodes on some source -> goal walk
    live = _reachable(succ, s) & _reachable(pred, g)
    if not live[s]:
        raise RoutingError(f"goal {goal!r} unreachable from {source!r}")
    arcs = [(v, p) for v in range(n) if live[v] for p in pred[v] if live[p]]
    dist = np.full(n, np.inf)
    dist[g] = c[g]
    ptr = np.full(n, -1)
    for _ in range(n - 1):
        changed = False
        for v, p in arcs:
            if dist[v] < np.inf:
                nd = c[p] + dist[v]
                if nd < dist[p] - 1e-12 * (1.0 + abs(nd)):
                    dist[p] = nd
                    ptr[p] = v
                    changed = True
        if not changed:
            break
    else:
        for v, p in arcs:
            if dist[v] < np.inf and c[p] + dist[v] < dist[p] - 1e-12 * (1.0 + abs(dist[p])):
                ptr[p] = v
                cyc = _find_cycle(ptr, p, n)
                names = tuple(lg.edges[i] for i in cyc)
                raise EnvError(f"negative-cost cycle reachable on route: {names}", cycle=names)
    path = _lex_extract(lg, succ, dist, c, s, g, _tolerance(c))
    return [lg.edges[i] for i in path], float(c[path].sum())


def find_negative_cycle(lg: LineGraph, costs: Sequence[float]) -> tuple | None:
    """Any cycle of the line graph whose node costs sum below zero, or None."""
    c = np.asarray(costs, dtype=float)
    n = len(c)
    succ = lg.successors()
    arcs = [(u, w) for u in range(n) for w in succ[u]]
    # virtual source with an arc to every node
    dist = c.copy()
    ptr = np.full(n, -1)
    last = -1
    for _ in range(n):
        last = -1
        for u, w in arcs:
            nd = dist[u] + c[w]
            if nd < dist[w] - 1e-12 * (1.0 + abs(nd)):
                dist[w] = nd
                ptr[w] = u
                last = w
        if last < 0:
            return None
    cyc = _find_cycle(ptr, last, n)
    return tuple(lg.edges[i] for i in reversed(cyc))


def topk_oracle(values: Sequence[float], K: int, mode: str = "maximize", available=None) -> list[int]:
    """Indices of the K best available arms (ties by index)."""
    v = np.asarray(values, dtype=float)
    idx = np.arange(len(v)) if available is None else np.flatnonzero(available)
    if idx.size == 0:
        raise InputError("no available arms")
    if mode == "maximize":
        key = -v[idx]
    elif mode == "minimize":
        key = v[idx]
    else:
        raise InputError(f"unknown mode {mode!r}")
    order = np.lexsort((idx, key))
    return [int(i) for i in idx[order[: max(int(K), 0)]]]


def is_legal_simple_path(lg: LineGraph, path: Sequence[Hashable], source, goal) -> bool:
    if not path or path[0] != source or path[-1] != goal:
        return False
    if len(set(path)) != len(path):
        return False
    conns = set(lg.connections)
    return all((a, b) in conns for a, b in zip(path, path[1:]))
