"""Coupling graphs, BFS spanning trees and non-resonance certification."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

import numpy as np

from .core import ZERO_TOLERANCE, CouplingMatrix, Spectrum

GAP_TOLERANCE = 1e-9


class DisconnectedGraphError(ValueError):
    """Raised when a spanning structure is requested on a disconnected graph."""

    def __init__(self, message: str, unreachable: Iterable[int] = ()):
        super().__init__(message)
        self.unreachable = tuple(sorted(unreachable))


def _pair(j: int, k: int) -> tuple[int, int]:
    return (j, k) if j < k else (k, j)


@dataclass(frozen=True)
class CouplingGraph:
    vertex_count: int
    edges: frozenset
    weights: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for j, k in self.edges:
            if j == k:
                raise ValueError("self-loops are not allowed")
            if not (0 <= j < self.vertex_count and 0 <= k < self.vertex_count):
                raise ValueError(f"edge {(j, k)} out of range")
        object.__setattr__(self, "edges", frozenset(_pair(j, k) for j, k in self.edges))

    def neighbours(self, v: int) -> list[int]:
        return sorted([k for j, k in self.edges if j == v] + [j for j, k in self.edges if k == v])

    def adjacency(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in range(self.vertex_count)}
        for j, k in self.edges:
            adj[j].append(k)
            adj[k].append(j)
        return {v: sorted(n) for v, n in adj.items()}

    def reachable(self, start: int) -> set[int]:
        adj = self.adjacency()
        seen = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen

    def components(self) -> list[list[int]]:
        left = set(range(self.vertex_count))
        out = []
        while left:
            comp = self.reachable(min(left))
            out.append(sorted(comp))
            left -= comp
        return out

    def subgraph(self, vertices: Iterable[int]) -> CouplingGraph:
        """Induced subgraph, relabelled to ``0..len(vertices)-1`` in ascending order."""
        vs = sorted(vertices)
        index = {v: i for i, v in enumerate(vs)}
        edges = {(index[j], index[k]) for j, k in self.edges if j in index and k in index}
        weights = {(index[j], index[k]): w for (j, k), w in self.weights.items() if j in index and k in index}
        return CouplingGraph(len(vs), frozenset(edges), weights)


@dataclass(frozen=True)
class SpanningTree:
    root: int
    parent: dict
    depth: dict

    def __post_init__(self):
        if self.depth.get(self.root) != 0 or self.root in self.parent:
            raise ValueError("root must have depth 0 and no parent")
        for v, p in self.parent.items():
            if self.depth[v] != self.depth[p] + 1:
                raise ValueError(f"depth of {v} inconsistent with parent {p}")

    @property
    def vertices(self) -> list[int]:
        return sorted(self.depth)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(_pair(v, p) for v, p in self.parent.items())


def build_graph(B, zero_tolerance: float = ZERO_TOLERANCE) -> CouplingGraph:
    B = np.asarray(B.entries if isinstance(B, CouplingMatrix) else B)
    m = B.shape[0]
    mag = np.abs(B)
    edges = set()
    weights = {}
    for j, k in combinations(range(m), 2):
        if mag[j, k] > zero_tolerance:
            edges.add((j, k))
            weights[(j, k)] = float(mag[j, k])
    return CouplingGraph(m, frozenset(edges), weights)


def is_connected(g: CouplingGraph) -> bool:
    if g.vertex_count == 0:
        return True
    return len(g.reachable(0)) == g.vertex_count


def spanning_tree(g: CouplingGraph, root: int) -> SpanningTree:
    """BFS tree rooted at ``root``; neighbours are visited in ascending order."""
    if not 0 <= root < g.vertex_count:
        raise ValueError(f"root {root} out of range")
    adj = g.adjacency()
    parent = {}
    depth = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in depth:
                depth[w] = depth[v] + 1
                parent[w] = v
                queue.append(w)
    if len(depth) != g.vertex_count:
        missing = set(range(g.vertex_count)) - set(depth)
        raise DisconnectedGraphError(
            f"graph is disconnected: vertices {sorted(missing)} unreachable from root {root}", missing
        )
    return SpanningTree(root, parent, depth)


@dataclass(frozen=True)
class NonresonanceReport:
    """Outcome of checking a chain for gap collisions and coupled degeneracies.

    ``violations_a1`` holds quadruples ``(s1, s2, t1, t2)``: chain pair
    ``(s1, s2)`` whose gap is matched by the coupled pair ``(t1, t2)``.
    Both orientations of ``t`` are listed. ``violations_a2`` holds
    degenerate coupled pairs ``(j, k)``. Only the first ``levels`` basis
    vectors are certified.
    """

    connected: bool
    violations_a1: tuple = ()
    violations_a2: tuple = ()
    levels: int = 0

    @property
    def ok(self) -> bool:
        return self.connected and not self.violations_a1 and not self.violations_a2

    def collisions(self) -> set[frozenset]:
        """Unordered view: each element is ``{pair_s, pair_t}`` with sorted pairs."""
        return {frozenset({_pair(s1, s2), _pair(t1, t2)}) for s1, s2, t1, t2 in self.violations_a1}

    def to_json(self, labels=None) -> dict:
        lab = (lambda i: int(labels[i])) if labels is not None else int
        return {
            "connected": bool(self.connected),
            "levels_certified": int(self.levels),
            "violations_a1": [[lab(x) for x in q] for q in self.violations_a1],
            "violations_a2": [[lab(x) for x in p] for p in self.violations_a2],
        }


def _gaps_agree(g1: float, g2: float, tol: float) -> bool:
    return abs(g1 - g2) <= tol * max(g1, g2)


def check_nonresonance(
    spectrum: Spectrum,
    B,
    chain: Iterable[tuple[int, int]],
    gap_tolerance: float = GAP_TOLERANCE,
    zero_tolerance: float = ZERO_TOLERANCE,
) -> NonresonanceReport:
    """Exhaustive gap-collision and degeneracy check on the truncation.

    Two gaps agree when they differ by at most ``gap_tolerance`` times the
    larger of them.
    """
    B = np.asarray(B.entries if isinstance(B, CouplingMatrix) else B)
    lam = spectrum.values
    m = lam.size
    if B.shape != (m, m):
        raise ValueError("spectrum and coupling sizes differ")
    chain = sorted({_pair(int(j), int(k)) for j, k in chain if j != k})
    for s in chain:
        if abs(B[s]) <= zero_tolerance:
            raise ValueError(f"chain pair {s} has zero coupling")

    coupled = [(t1, t2) for t1 in range(m) for t2 in range(m) if t1 != t2 and abs(B[t1, t2]) > zero_tolerance]
    a1 = []
    for s1, s2 in chain:
        gs = abs(lam[s2] - lam[s1])
        for t1, t2 in coupled:
            if {t1, t2} == {s1, s2}:
                continue
            if _gaps_agree(gs, abs(lam[t2] - lam[t1]), gap_tolerance):
                a1.append((s1, s2, t1, t2))

    a2 = []
    for j, k in combinations(range(m), 2):
        degenerate = abs(lam[j] - lam[k]) <= gap_tolerance * max(abs(lam[j]), abs(lam[k]), 1.0)
        if degenerate and abs(B[j, k]) > zero_tolerance:
            a2.append((j, k))

    connected = is_connected(CouplingGraph(m, frozenset(chain))) if m else True
    return NonresonanceReport(connected, tuple(a1), tuple(a2), m)
