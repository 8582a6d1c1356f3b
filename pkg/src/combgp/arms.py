"""Base and super arm containers shared by the kernel, GP and environment layers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np


@dataclass(frozen=True)
class BaseArm:
    """An edge identity paired with a context vector."""

    edge: Hashable
    context: tuple[float, ...]

    def __post_init__(self) -> None:
        ctx = tuple(float(c) for c in self.context)
        if not all(np.isfinite(ctx)):
            raise ValueError(f"non-finite context for arm {self.edge!r}: {ctx}")
        object.__setattr__(self, "context", ctx)

    @property
    def dim(self) -> int:
        return len(self.context)


def contexts_of(arms: Sequence[BaseArm]) -> np.ndarray:
    """Stack arm contexts into an (n, d) float array."""
    if len(arms) == 0:
        return np.zeros((0, 0))
    return np.asarray([a.context for a in arms], dtype=float)


@dataclass(frozen=True)
class SuperArm:
    """Ordered collection of distinct base arms (a path in the navigation setting)."""

    arms: tuple[BaseArm, ...]

    def __post_init__(self) -> None:
        edges = [a.edge for a in self.arms]
        if len(set(edges)) != len(edges):
            raise ValueError(f"super arm repeats a base arm: {edges}")

    def __len__(self) -> int:
        return len(self.arms)

    @property
    def edges(self) -> tuple:
        return tuple(a.edge for a in self.arms)
