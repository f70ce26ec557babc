"""Finite graphs the particles live on: cubes with free boundary, complete graphs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Lattice:
    """A finite undirected graph on sites ``0..n_sites-1``.

    ``edges`` holds each unordered nearest-neighbour pair once as ``(x, y)``
    with ``x < y``.
    """

    n_sites: int
    edges: tuple[tuple[int, int], ...]
    dim: int | None = None
    side: int | None = None
    labels: tuple = field(default=None, compare=False)

    @property
    def ordered_edges(self) -> list[tuple[int, int]]:
        return [(x, y) for x, y in self.edges] + [(y, x) for x, y in self.edges]

    def neighbours(self, x: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == x:
                out.append(b)
            elif b == x:
                out.append(a)
        return sorted(out)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_sites, dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def induced(self, sites) -> "Lattice":
        """Subgraph on ``sites``, relabelled to ``0..len(sites)-1`` in the given order."""
        sites = list(sites)
        index = {s: i for i, s in enumerate(sites)}
        edges = tuple(sorted((min(index[a], index[b]), max(index[a], index[b]))
                             for a, b in self.edges if a in index and b in index))
        labels = tuple(self.labels[s] for s in sites) if self.labels else tuple(sites)
        return Lattice(len(sites), edges, labels=labels)

    def describe(self) -> dict:
        out = {"n_sites": self.n_sites}
        if self.dim is not None:
            out.update(dim=self.dim, side=self.side)
        return out


def cube(dim: int, side: int) -> Lattice:
    """The box ``{0..side-1}^dim`` with free (non-periodic) nearest-neighbour edges.

    Sites are numbered in row-major order of their coordinates.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if side < 1:
        raise ValueError("side must be >= 1")
    coords = list(itertools.product(range(side), repeat=dim))
    index = {c: i for i, c in enumerate(coords)}
    edges = []
    for c in coords:
        for axis in range(dim):
            if c[axis] + 1 < side:
                nb = c[:axis] + (c[axis] + 1,) + c[axis + 1:]
                edges.append((index[c], index[nb]))
    return Lattice(len(coords), tuple(sorted(edges)), dim=dim, side=side, labels=tuple(coords))


def segment(n: int) -> Lattice:
    return cube(1, n)


def complete_graph(n: int) -> Lattice:
    edges = tuple((x, y) for x in range(n) for y in range(x + 1, n))
    return Lattice(n, edges)
