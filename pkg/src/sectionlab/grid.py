"""Finite sampled base spaces.

The base space of a family is represented by a finite grid of sample points
with a neighbor relation; "continuous on the base" becomes a
modulus-of-continuity statement between adjacent samples.  Two layouts cover
every fixture: a uniform circle (periodic) and a uniform closed interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BaseGrid:
    """Finite base grid with an adjacency (neighbor) relation.

    coords holds the position of every sample in the reference space:
    angles in [0, 2*pi) for a circle, positions in [0, 1] for an interval.
    """

    kind: str  # "circle" | "interval"
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in ("circle", "interval"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if len(self.coords) == 0:
            raise ValueError("grid must be nonempty")

    @staticmethod
    def circle(n: int) -> "BaseGrid":
        return BaseGrid("circle", 2.0 * np.pi * np.arange(n) / n)

    @staticmethod
    def interval(n: int) -> "BaseGrid":
        return BaseGrid("interval", np.linspace(0.0, 1.0, n))

    @property
    def size(self) -> int:
        return len(self.coords)

    @property
    def points(self) -> range:
        return range(self.size)

    def neighbors(self, i: int) -> tuple[int, ...]:
        m = self.size
        if m == 1:
            return ()
        if self.kind == "circle":
            return ((i - 1) % m, (i + 1) % m)
        out = []
        if i > 0:
            out.append(i - 1)
        if i < m - 1:
            out.append(i + 1)
        return tuple(out)

    def adjacent_pairs(self) -> list[tuple[int, int]]:
        m = self.size
        pairs = [(i, i + 1) for i in range(m - 1)]
        if self.kind == "circle" and m > 2:
            pairs.append((m - 1, 0))
        return pairs

    def separation(self, i: int, j: int) -> float:
        """Distance of two samples in the reference space (arc length on the circle)."""
        d = abs(self.coords[i] - self.coords[j])
        if self.kind == "circle":
            d = min(d, 2.0 * np.pi - d)
        return float(d)

    @property
    def mesh(self) -> float:
        """Maximum separation between adjacent samples (> 0)."""
        return max(self.separation(i, j) for i, j in self.adjacent_pairs())

    def full_domain(self) -> frozenset[int]:
        return frozenset(self.points)

    def closure(self, subset) -> frozenset[int]:
        """Grid closure: the subset plus its neighbors."""
        out = set(subset)
        for i in subset:
            out.update(self.neighbors(i))
        return frozenset(out)

    def interior(self, subset) -> frozenset[int]:
        """Points of the subset all of whose neighbors are in the subset."""
        s = set(subset)
        return frozenset(i for i in s if all(j in s for j in self.neighbors(i)))

    def shrink(self, subset) -> frozenset[int]:
        """One-step shrink used to build nested compact neighborhoods.

        A full-grid domain stays full (nothing to shrink away from);
        otherwise drop the grid boundary of the subset.
        """
        s = frozenset(subset)
        if s == self.full_domain():
            return s
        return self.interior(s)
