import math

import numpy as np
import pytest

from galerkin_control.core import Spectrum
from galerkin_control.graph import (
    CouplingGraph,
    DisconnectedGraphError,
    build_graph,
    check_nonresonance,
    is_connected,
    spanning_tree,
)
from galerkin_control.models import DeltaBoxModel, delta_box_system, even_subspace

from oracles import random_connected_edges, union_find_connected


def complete(m):
    return {(a, b) for a in range(m) for b in range(a + 1, m)}


def test_build_graph_examples():
    B = np.array([[0, -2], [-2, 0]], dtype=complex)
    assert build_graph(B).edges == {(0, 1)}
    assert build_graph(B).weights[(0, 1)] == 2.0
    assert build_graph(np.diag([1.0, 2.0, 3.0])).edges == frozenset()
    even = even_subspace(delta_box_system(DeltaBoxModel(truncation=8)))
    assert build_graph(even.coupling).edges == complete(4)


def test_is_connected_examples():
    assert is_connected(CouplingGraph(4, frozenset(complete(4))))
    assert not is_connected(CouplingGraph(4, frozenset({(0, 1), (2, 3)})))
    full = delta_box_system(DeltaBoxModel(truncation=4))
    g = build_graph(full.coupling)
    assert not is_connected(g)
    # levels 2 and 4 are isolated
    assert g.components() == [[0, 2], [1], [3]]


def test_is_connected_matches_union_find():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        p = rng.uniform(0, 4.0 / max(n, 1))
        edges = {(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p}
        g = CouplingGraph(n, frozenset(edges))
        assert is_connected(g) == union_find_connected(n, edges)


def test_spanning_tree_examples():
    path = CouplingGraph(3, frozenset({(0, 1), (1, 2)}))
    t = spanning_tree(path, 0)
    assert t.parent == {1: 0, 2: 1}
    assert [t.depth[v] for v in range(3)] == [0, 1, 2]
    star = spanning_tree(CouplingGraph(4, frozenset(complete(4))), 0)
    assert star.parent == {1: 0, 2: 0, 3: 0}
    even = even_subspace(delta_box_system(DeltaBoxModel(truncation=8)))
    centred = spanning_tree(build_graph(even.coupling), 1)  # level 3
    assert centred.parent == {0: 1, 2: 1, 3: 1}


def test_spanning_tree_disconnected_names_component():
    g = CouplingGraph(4, frozenset({(0, 1), (2, 3)}))
    with pytest.raises(DisconnectedGraphError) as info:
        spanning_tree(g, 0)
    assert info.value.unreachable == (2, 3)


def test_spanning_tree_structural_invariants():
    rng = np.random.default_rng(5)
    for _ in range(300):
        m = int(rng.integers(1, 30))
        edges = random_connected_edges(m, rng, extra_prob=rng.uniform(0, 0.5))
        g = CouplingGraph(m, frozenset(edges))
        root = int(rng.integers(0, m))
        t = spanning_tree(g, root)
        assert set(t.parent) == set(range(m)) - {root}
        assert t.depth[root] == 0
        for v, p in t.parent.items():
            assert (min(v, p), max(v, p)) in g.edges
            assert t.depth[v] == t.depth[p] + 1


def test_bfs_tie_break_is_ascending():
    # 0 connects to 3 and 1; 2 is reachable from both 1 and 3 at depth 2
    g = CouplingGraph(4, frozenset({(0, 1), (0, 3), (1, 2), (2, 3)}))
    assert spanning_tree(g, 0).parent[2] == 1


def test_nonresonance_arithmetic_progression():
    B = np.ones((3, 3))
    rep = check_nonresonance(Spectrum([0.0, 1.0, 2.0]), B, [(0, 1)])
    assert rep.collisions() == {frozenset({(0, 1), (1, 2)})}
    assert not rep.ok


def test_nonresonance_delta_box_collision():
    even = even_subspace(delta_box_system(DeltaBoxModel(truncation=8)))
    assert even.eigenvalues / math.pi**2 == pytest.approx([1, 9, 25, 49], rel=1e-15)
    rep = check_nonresonance(even.spectrum, even.coupling, complete(4))
    assert rep.collisions() == {frozenset({(0, 2), (2, 3)})}
    assert rep.connected and not rep.violations_a2


def test_nonresonance_irrational_gaps_pass():
    B = np.ones((3, 3))
    rep = check_nonresonance(Spectrum([0.0, 1.0, math.sqrt(2)]), B, [(0, 1), (1, 2)])
    assert rep.ok
    assert rep.to_json() == {"connected": True, "levels_certified": 3, "violations_a1": [], "violations_a2": []}


def test_nonresonance_degenerate_pair():
    B = np.ones((2, 2))
    rep = check_nonresonance(Spectrum([1.0, 1.0]), B, [(0, 1)])
    assert rep.violations_a2 == ((0, 1),)


def _brute_force(lam, B, chain, tol):
    found = set()
    m = len(lam)
    for s1, s2 in chain:
        for t1 in range(m):
            for t2 in range(m):
                if t1 == t2 or abs(B[t1, t2]) <= 1e-12 or {t1, t2} == {s1, s2}:
                    continue
                g1, g2 = abs(lam[s2] - lam[s1]), abs(lam[t2] - lam[t1])
                if abs(g1 - g2) <= tol * max(g1, g2):
                    found.add((s1, s2, t1, t2))
    return found


def test_nonresonance_matches_brute_force_and_is_swap_symmetric():
    rng = np.random.default_rng(2)
    for _ in range(60):
        m = int(rng.integers(2, 7))
        lam = np.sort(rng.integers(0, 6, size=m).astype(float))
        edges = random_connected_edges(m, rng, 0.5)
        B = np.zeros((m, m))
        for a, b in edges:
            B[a, b] = B[b, a] = 1.0
        rep = check_nonresonance(Spectrum(lam), B, edges)
        got = set(rep.violations_a1)
        assert got == _brute_force(lam, B, sorted(edges), 1e-9)
        assert got == {(s1, s2, t2, t1) for s1, s2, t1, t2 in got}
