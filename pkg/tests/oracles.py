"""Independent reference computations used only by the tests."""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm


def generator_expm(m: int, i: int, j: int, theta: float, t: float) -> np.ndarray:
    T = np.zeros((m, m), dtype=complex)
    T[i, j] = np.exp(1j * theta)
    T[j, i] = -np.exp(-1j * theta)
    return expm(t * T)


def segment_expm(lam, B, schedule) -> np.ndarray:
    """Propagator by dense ``expm`` per segment (no eigendecomposition)."""
    H0 = np.diag(np.asarray(lam, dtype=complex))
    U = np.eye(len(lam), dtype=complex)
    for dt, u in schedule.segments:
        U = expm(-1j * (H0 + u * np.asarray(B)) * dt) @ U
    return U


def union_find_connected(n: int, edges) -> bool:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(v) for v in range(n)}) <= 1


def brute_force_op_norm(A, lam, samples: int, rng) -> float:
    """Sup of ``|<x, A y>| / (||x||_+ ||y||_+)`` over random complex pairs (lower estimate)."""
    w = np.sqrt(np.asarray(lam, dtype=float) + 1.0)
    m = len(lam)
    x = rng.normal(size=(samples, m)) + 1j * rng.normal(size=(samples, m))
    y = rng.normal(size=(samples, m)) + 1j * rng.normal(size=(samples, m))
    num = np.abs(np.einsum("si,ij,sj->s", x.conj(), np.asarray(A), y))
    den = np.linalg.norm(x * w, axis=1) * np.linalg.norm(y * w, axis=1)
    return float(np.max(num / den))


def power_op_norm(A, lam, iters: int = 500) -> float:
    """Largest singular value of the weighted matrix by power iteration on ``M^H M``."""
    s = 1.0 / np.sqrt(np.asarray(lam, dtype=float) + 1.0)
    M = s[:, None] * np.asarray(A, dtype=complex) * s[None, :]
    v = np.ones(M.shape[1], dtype=complex)
    for _ in range(iters):
        v = M.conj().T @ (M @ v)
        n = np.linalg.norm(v)
        if n == 0:
            return 0.0
        v /= n
    return float(np.linalg.norm(M @ v))


def finite_difference_box_levels(eta: float, count: int, intervals: int = 5000) -> np.ndarray:
    """Lowest levels of ``-d^2/dx^2 + eta delta(x - 1/2)`` on [0, 1] with Dirichlet ends.

    Second-order differences on ``intervals - 1`` interior nodes; the point
    interaction is a single-node spike of height ``eta / h`` at the centre.
    """
    h = 1.0 / intervals
    n = intervals - 1
    diag = np.full(n, 2.0 / h**2)
    diag[intervals // 2 - 1] += eta / h
    off = np.full(n - 1, -1.0 / h**2)
    return eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1), eigvals_only=True)


def lstsq_quadratic(x, y):
    """Coefficients ``(c0, c1, c2)`` of ``y = c0 + c1 x + c2 x^2`` by least squares."""
    V = np.vander(np.asarray(x, dtype=float), 3, increasing=True)
    return np.linalg.lstsq(V, np.asarray(y, dtype=float), rcond=None)[0]


def random_connected_edges(m: int, rng, extra_prob: float = 0.3):
    """Random spanning tree plus extra edges; returns a set of sorted pairs."""
    order = rng.permutation(m)
    edges = set()
    for idx in range(1, m):
        a = int(order[idx])
        b = int(order[rng.integers(0, idx)])
        edges.add((min(a, b), max(a, b)))
    for a in range(m):
        for b in range(a + 1, m):
            if rng.random() < extra_prob:
                edges.add((a, b))
    return edges


def random_coupling(m: int, edges, rng, diagonal: bool = True) -> np.ndarray:
    B = np.zeros((m, m), dtype=complex)
    for a, b in edges:
        mag = rng.uniform(0.2, 3.0)
        B[a, b] = mag * np.exp(1j * rng.uniform(0, 2 * np.pi))
        B[b, a] = np.conj(B[a, b])
    if diagonal:
        B[np.diag_indices(m)] = rng.normal(size=m)
    return B
