"""Covariance functions over base arms.

Three pieces are provided:

* a Matérn-5/2 kernel on standardized context vectors (per-dimension
  lengthscales, outputscale multiplies the correlation directly);
* a graph Matérn kernel on the edges of a directed network, built from the
  incidence Laplacian of the network's line graph;
* the composite ``k_G * k_f + k_f'`` kernel used for navigation.

Scalar helpers (``matern52``, ``composite_kernel``) mirror the vectorized
kernel objects, which are what the GP layer actually calls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy import linalg

from .arms import BaseArm, contexts_of
from .errors import InputError, NumericError

SQRT5 = np.sqrt(5.0)
JITTER = 1e-8


@dataclass(frozen=True)
class FeatureKernelParams:
    outputscale: float
    lengthscales: tuple[float, ...]
    nu: float = 2.5

    def __post_init__(self) -> None:
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        if self.nu != 2.5:
            raise InputError(f"only nu = 5/2 is supported, got {self.nu}")
        if not self.outputscale > 0:
            raise InputError(f"outputscale must be positive, got {self.outputscale}")
        if len(ls) < 1 or min(ls) <= 0:
            raise InputError(f"lengthscales must be a non-empty positive vector, got {ls}")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)


@dataclass(frozen=True)
class GraphKernelParams:
    nu: float = 2.0
    kappa: float = 1.0
    outputscale: float = 1.0

    def __post_init__(self) -> None:
        if min(self.nu, self.kappa, self.outputscale) <= 0:
            raise InputError(f"graph kernel parameters must be positive: {self}")


@dataclass(frozen=True)
class LineGraph:
    """Nodes are network edges; arcs are legal connections (e1 -> e2)."""

    edges: tuple[Hashable, ...]
    connections: tuple[tuple[Hashable, Hashable], ...]
    index: Mapping[Hashable, int] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.index is None:
            object.__setattr__(self, "index", {e: i for i, e in enumerate(self.edges)})
        if len(self.index) != len(self.edges):
            raise InputError("duplicate edge ids in line graph")
        for c in self.connections:
            e1, e2 = c
            if e1 not in self.index or e2 not in self.index:
                raise InputError(f"connection {c} references an unknown edge")
            if e1 == e2:
                raise InputError(f"connection {c} is a self loop")

    def successors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.edges]
        for e1, e2 in self.connections:
            out[self.index[e1]].append(self.index[e2])
        return out

    def predecessors(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.edges]
        for e1, e2 in self.connections:
            out[self.index[e2]].append(self.index[e1])
        return out


@dataclass(frozen=True)
class GramMatrix:
    matrix: np.ndarray
    index: Mapping[Hashable, int]

    def __call__(self, e1: Hashable, e2: Hashable) -> float:
        try:
            return float(self.matrix[self.index[e1], self.index[e2]])
        except KeyError as exc:
            raise InputError(f"edge {exc.args[0]!r} not indexed in graph Gram") from None

    def rows(self, edges: Iterable[Hashable]) -> np.ndarray:
        try:
            return np.fromiter((self.index[e] for e in edges), dtype=np.intp)
        except KeyError as exc:
            raise InputError(f"edge {exc.args[0]!r} not indexed in graph Gram") from None


# ---------------------------------------------------------------------------
# Matérn-5/2 on contexts
# ---------------------------------------------------------------------------


def _scaled_distance(x1: np.ndarray, x2: np.ndarray, lengthscales) -> np.ndarray:
    ls = np.asarray(lengthscales, dtype=float)
    a = np.atleast_2d(x1) / ls
    b = np.atleast_2d(x2) / ls
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(sq, 0.0))


def _matern52_profile(d: np.ndarray) -> np.ndarray:
    r = SQRT5 * d
    return (1.0 + r + r * r / 3.0) * np.exp(-r)


def matern52(x, x2, params: FeatureKernelParams) -> float:
    """Matérn-5/2 covariance between two context vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape or x.shape[0] != params.dim:
        raise InputError(
            f"dimension mismatch: {x.shape} vs {x2.shape} with {params.dim} lengthscales"
        )
    d = float(np.sqrt(np.sum(((x - x2) / np.asarray(params.lengthscales)) ** 2)))
    return float(params.outputscale * _matern52_profile(np.array(d)))


def matern52_matrix(X1: np.ndarray, X2: np.ndarray, params: FeatureKernelParams) -> np.ndarray:
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    if X1.shape[1] != params.dim or X2.shape[1] != params.dim:
        raise InputError(f"context dimension does not match {params.dim} lengthscales")
    if X1.shape[0] and X2.shape[0] and X1 is X2:
        D = _scaled_distance(X1, X1, params.lengthscales)
        np.fill_diagonal(D, 0.0)
    else:
        D = _scaled_distance(X1, X2, params.lengthscales)
    return params.outputscale * _matern52_profile(D)


def matern52_grad_x1(X1: np.ndarray, X2: np.ndarray, params: FeatureKernelParams) -> np.ndarray:
    """d k(x1_i, x2_j) / d x1_i, shape (n1, n2, d)."""
    ls2 = np.asarray(params.lengthscales) ** 2
    D = _scaled_distance(X1, X2, params.lengthscales)
    diff = (X1[:, None, :] - X2[None, :, :]) / ls2
    scale = -(5.0 / 3.0) * params.outputscale * (1.0 + SQRT5 * D) * np.exp(-SQRT5 * D)
    return scale[:, :, None] * diff


# ---------------------------------------------------------------------------
# Graph Matérn over line-graph nodes
# ---------------------------------------------------------------------------


def incidence_laplacian(line_graph: LineGraph, weights: Mapping | Sequence[float]) -> np.ndarray:
    """Weighted incidence Laplacian ``B B^T`` of a line graph.

    ``weights`` is either a mapping keyed by connection or a sequence aligned
    with ``line_graph.connections``.
    """
    n = len(line_graph.edges)
    conns = line_graph.connections
    if isinstance(weights, Mapping):
        w = np.array([weights[c] for c in conns], dtype=float)
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != len(conns):
        raise InputError(f"{w.shape[0]} weights for {len(conns)} connections")
    if np.any(w <= 0):
        raise InputError("connection weights must be positive")
    B = np.zeros((n, len(conns)))
    for j, (e1, e2) in enumerate(conns):
        B[line_graph.index[e1], j] = -w[j]
        B[line_graph.index[e2], j] = w[j]
    return B @ B.T


def graph_matern_gram(
    line_graph: LineGraph,
    weights: Mapping | Sequence[float],
    params: GraphKernelParams,
) -> GramMatrix:
    """Graph Matérn covariance over all edges via the incidence Laplacian spectrum."""
    if len(line_graph.edges) < 1:
        raise InputError("graph kernel needs at least one edge")
    lap = incidence_laplacian(line_graph, weights)
    try:
        evals, evecs = linalg.eigh(lap, driver="evd")
    except linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError(f"eigendecomposition of {lap.shape} Laplacian failed: {exc}") from exc
    resid = np.abs(evecs.T @ lap @ evecs - np.diag(evals))
    np.fill_diagonal(resid, 0.0)
    tol = 1e-10 * max(1.0, float(np.abs(evals).max(initial=0.0)))
    if resid.size and resid.max() > tol:
        raise NumericError(
            f"eigendecomposition residual {resid.max():.3e} exceeds {tol:.1e} "
            f"(n={lap.shape[0]})"
        )
    evals = np.maximum(evals, 0.0)
    spectrum = (2.0 * params.nu / params.kappa**2 + evals) ** (-params.nu)
    K = params.outputscale * (evecs * spectrum) @ evecs.T
    K = 0.5 * (K + K.T)
    return GramMatrix(K, dict(line_graph.index))


# ---------------------------------------------------------------------------
# Kernel objects consumed by the GP layer
# ---------------------------------------------------------------------------


class ArmKernel:
    """Covariance over lists of BaseArm."""

    def __call__(self, arms1: Sequence[BaseArm], arms2: Sequence[BaseArm]) -> np.ndarray:
        raise NotImplementedError

    def diag(self, arms: Sequence[BaseArm]) -> np.ndarray:
        return np.array([self([a], [a])[0, 0] for a in arms])

    def gram(self, arms: Sequence[BaseArm]) -> np.ndarray:
        K = self(arms, arms)
        return 0.5 * (K + K.T)

    def grad_context(self, arms1: Sequence[BaseArm], arms2: Sequence[BaseArm]) -> np.ndarray:
        """Derivative of k(a1_i, a2_j) w.r.t. the context of a1_i, shape (n1, n2, d)."""
        raise NotImplementedError


class ContextKernel(ArmKernel):
    """Matérn-5/2 on arm contexts only (edge identity ignored)."""

    def __init__(self, params: FeatureKernelParams):
        self.params = params

    def __call__(self, arms1, arms2):
        if len(arms1) == 0 or len(arms2) == 0:
            return np.zeros((len(arms1), len(arms2)))
        X1 = contexts_of(arms1)
        X2 = X1 if arms1 is arms2 else contexts_of(arms2)
        return matern52_matrix(X1, X2, self.params)

    def diag(self, arms):
        return np.full(len(arms), self.params.outputscale)

    def grad_context(self, arms1, arms2):
        return matern52_grad_x1(contexts_of(arms1), contexts_of(arms2), self.params)


class CompositeKernel(ArmKernel):
    """``k_G(e, e') * k_f(x, x') + k_f'(x, x')`` with independent feature kernels."""

    def __init__(
        self,
        graph_gram: GramMatrix,
        product: FeatureKernelParams,
        additive: FeatureKernelParams,
    ):
        self.graph_gram = graph_gram
        self.product = product
        self.additive = additive

    def __call__(self, arms1, arms2):
        if len(arms1) == 0 or len(arms2) == 0:
            return np.zeros((len(arms1), len(arms2)))
        X1 = contexts_of(arms1)
        X2 = X1 if arms1 is arms2 else contexts_of(arms2)
        r1 = self.graph_gram.rows(a.edge for a in arms1)
        r2 = r1 if arms1 is arms2 else self.graph_gram.rows(a.edge for a in arms2)
        G = self.graph_gram.matrix[np.ix_(r1, r2)]
        return G * matern52_matrix(X1, X2, self.product) + matern52_matrix(X1, X2, self.additive)

    def diag(self, arms):
        rows = self.graph_gram.rows(a.edge for a in arms)
        g = self.graph_gram.matrix[rows, rows]
        return g * self.product.outputscale + self.additive.outputscale

    def grad_context(self, arms1, arms2):
        X1, X2 = contexts_of(arms1), contexts_of(arms2)
        r1 = self.graph_gram.rows(a.edge for a in arms1)
        r2 = self.graph_gram.rows(a.edge for a in arms2)
        G = self.graph_gram.matrix[np.ix_(r1, r2)]
        return G[:, :, None] * matern52_grad_x1(X1, X2, self.product) + matern52_grad_x1(
            X1, X2, self.additive
        )


class ZeroKernel(ArmKernel):
    """Degenerate kernel; every covariance is zero."""

    def __call__(self, arms1, arms2):
        return np.zeros((len(arms1), len(arms2)))

    def diag(self, arms):
        return np.zeros(len(arms))

    def grad_context(self, arms1, arms2):
        d = arms1[0].dim if len(arms1) else 0
        return np.zeros((len(arms1), len(arms2), d))


def composite_kernel(
    a: BaseArm,
    a2: BaseArm,
    graph_gram: GramMatrix,
    kf: FeatureKernelParams,
    kf2: FeatureKernelParams,
) -> float:
    """Scalar form of the composite kernel."""
    g = graph_gram(a.edge, a2.edge)
    return g * matern52(a.context, a2.context, kf) + matern52(a.context, a2.context, kf2)


def jittered_cholesky(K: np.ndarray, retries: int = 3) -> np.ndarray:
    """Lower Cholesky factor of ``K + jitter I``; jitter starts at 1e-8 * max diag.

    The jitter grows tenfold per failed attempt, ``retries`` times.
    """
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    scale = float(np.max(np.diag(K), initial=0.0))
    if scale <= 0.0 and not np.any(K):
        return np.zeros_like(K, dtype=float)
    jitter = JITTER * (scale if scale > 0 else 1.0)
    for _ in range(retries + 1):
        try:
            return linalg.cholesky(K + jitter * np.eye(n), lower=True)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NumericError(f"Cholesky of {n}x{n} Gram failed with jitter up to {jitter / 10:.1e}")
