"""Finite-rank approximating families and the connectivity-repair operator.

Everything here lives on a fixed truncation, so every coupling is bounded;
the point is to exercise the quantitative structure (residual norms, bound
constants, the repair norm bound), not to approximate unbounded operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .core import ZERO_TOLERANCE, CouplingMatrix, Spectrum, op_norm_pm


def _entries(B) -> np.ndarray:
    return np.asarray(B.entries if isinstance(B, CouplingMatrix) else B, dtype=complex)


def finite_rank_truncation(B, spectrum: Spectrum, n: int) -> tuple[CouplingMatrix, float]:
    """Top-left ``n x n`` block of ``B`` (zero elsewhere) and the ``+,-`` norm of the residual."""
    A = _entries(B)
    size = A.shape[0]
    if not 0 <= n < size:
        raise ValueError(f"rank {n} must be below the truncation size {size}")
    out = np.zeros_like(A)
    out[:n, :n] = A[:n, :n]
    return CouplingMatrix(out), op_norm_pm(A - out, spectrum)


@dataclass(frozen=True)
class ApproximatingFamily:
    """A sequence ``n -> B^(n)`` approaching ``target`` on a fixed truncation.

    ``generator`` defaults to rank truncation. Members are built eagerly
    for ``n = 1..max_n`` so that the ``B^(n) != B`` clause is checked once.
    """

    target: CouplingMatrix
    spectrum: Spectrum
    max_n: int
    generator: Callable | None = field(default=None, compare=False)
    members: tuple = field(init=False, compare=False)
    residuals: tuple = field(init=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.target, CouplingMatrix):
            object.__setattr__(self, "target", CouplingMatrix(self.target))
        if self.max_n < 1:
            raise ValueError("max_n must be at least 1")
        B = self.target.entries
        gen = self.generator or (lambda n: finite_rank_truncation(B, self.spectrum, n)[0])
        members, residuals = [], []
        for n in range(1, self.max_n + 1):
            Bn = gen(n)
            Bn = Bn if isinstance(Bn, CouplingMatrix) else CouplingMatrix(Bn)
            if np.array_equal(Bn.entries, B):
                raise ValueError(f"member n={n} equals the target; approximants must differ from it")
            members.append(Bn)
            residuals.append(op_norm_pm(Bn.entries - B, self.spectrum))
        object.__setattr__(self, "members", tuple(members))
        object.__setattr__(self, "residuals", tuple(residuals))

    @classmethod
    def rank_truncations(cls, target, spectrum: Spectrum, max_n: int | None = None) -> ApproximatingFamily:
        A = _entries(target)
        if max_n is None:
            # beyond the last nonzero row the truncation reproduces the target
            rows = np.flatnonzero(np.any(A != 0, axis=1))
            max_n = min(A.shape[0] - 1, int(rows[-1])) if rows.size else 0
            if max_n < 1:
                raise ValueError("target has no nonzero coupling beyond the first level to approximate")
        return cls(CouplingMatrix(A), spectrum, max_n)

    def member(self, n: int) -> CouplingMatrix:
        if not 1 <= n <= self.max_n:
            raise ValueError(f"n={n} outside the generated range 1..{self.max_n}")
        return self.members[n - 1]

    def residual(self, n: int) -> float:
        self.member(n)
        return self.residuals[n - 1]

    def is_nonincreasing(self, slack: float = 1e-12) -> bool:
        r = np.asarray(self.residuals)
        return bool(np.all(np.diff(r) <= slack * max(1.0, r.max(initial=0.0))))


def uniform_bounds(family: ApproximatingFamily, a: float, b: float, mu: float, r: float | None = None):
    """Uniform relative bounds ``(a + mu, b + mu)`` and the first ``n0`` with residual ``<= mu``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if a < 0 or b < 0:
        raise ValueError("relative bounds must be nonnegative")
    if r is not None and r * (a + mu) >= 1:
        raise ValueError(f"r*(a+mu) = {r * (a + mu):g} must stay below 1")
    for n, res in enumerate(family.residuals, start=1):
        if res <= mu:
            return a + mu, b + mu, n
    raise ValueError(
        f"no member up to n={family.max_n} is within mu={mu:g} of the target "
        f"(smallest residual {min(family.residuals):.3e})"
    )


def missing_chain_pairs(B, chain: Iterable[tuple[int, int]], zero_tolerance: float = ZERO_TOLERANCE) -> list:
    """Ordered chain pairs whose coupling vanishes, in lexicographic order."""
    A = _entries(B)
    return sorted({(int(s), int(t)) for s, t in chain if s != t and abs(A[s, t]) <= zero_tolerance})


def repair_operator(B, chain, n: int, zero_tolerance: float = ZERO_TOLERANCE) -> np.ndarray:
    """The real symmetric correction placed on the missing chain pairs.

    The ``q``-th missing ordered pair (lexicographic, from 0) carries weight
    ``2^-q / (8n)``; each unordered pair collects the weights of whichever
    orientations are missing.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    A = _entries(B)
    P = np.zeros(A.shape, dtype=float)
    missing = missing_chain_pairs(A, chain, zero_tolerance)
    index = {pair: q for q, pair in enumerate(missing)}
    for s, t in missing:
        w = 2.0 ** -index[(s, t)]
        back = index.get((t, s))
        w_back = 2.0 ** -back if back is not None else 0.0
        P[s, t] = P[t, s] = (w + w_back) / (8 * n)
    return P


def connectivity_repair(B, chain, n: int, zero_tolerance: float = ZERO_TOLERANCE) -> CouplingMatrix:
    """``B + P_n``: every chain pair gains a nonzero coupling, other entries untouched."""
    A = _entries(B)
    return CouplingMatrix(A + repair_operator(A, chain, n, zero_tolerance))
