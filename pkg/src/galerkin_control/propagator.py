"""Exact propagation of the truncated bilinear Schrödinger equation.

Each segment of a piecewise-constant control is applied as
``exp(-i (Lambda + u B) dt)`` built from a Hermitian eigendecomposition, so
there is no integrator error: the only approximation is the truncation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import BilinearSystem, ControlSchedule, StateVector, coefficients, l1_norm, op_norm_pm


class _StepCache:
    """Memoizes eigendecompositions per amplitude and step unitaries per (amplitude, dt)."""

    def __init__(self, system: BilinearSystem):
        self.lam = system.eigenvalues.astype(float)
        self.B = system.coupling.entries
        self.eig: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self.steps: dict[tuple[float, float], np.ndarray] = {}

    def decompose(self, u: float):
        hit = self.eig.get(u)
        if hit is None:
            if u == 0.0:
                hit = (self.lam, None)
            else:
                H = np.diag(self.lam).astype(complex) + u * self.B
                if not np.array_equal(H, H.conj().T):
                    raise RuntimeError("Lambda + u B is not Hermitian")
                hit = np.linalg.eigh(H)
            self.eig[u] = hit
        return hit

    def unitary(self, u: float, dt: float) -> np.ndarray:
        key = (u, dt)
        U = self.steps.get(key)
        if U is None:
            w, V = self.decompose(u)
            if V is None:
                U = np.diag(np.exp(-1j * w * dt))
            else:
                U = (V * np.exp(-1j * w * dt)) @ V.conj().T
            if len(self.steps) < 4096:
                self.steps[key] = U
        return U


@dataclass(frozen=True)
class PropagationResult:
    final_state: StateVector
    initial_norm: float
    times: np.ndarray | None = None
    trace: np.ndarray | None = None

    @property
    def unitarity_defect(self) -> float:
        return abs(self.final_state.norm - self.initial_norm)

    def fidelity_to(self, target) -> float:
        t = coefficients(target)
        return float(abs(np.vdot(t, self.final_state.coefficients)) ** 2)

    def to_json(self) -> dict:
        c = self.final_state.coefficients
        return {
            "final_state": {"re": c.real.tolist(), "im": c.imag.tolist()},
            "unitarity_defect": self.unitarity_defect,
        }


def _check(system: BilinearSystem, schedule: ControlSchedule, n: int) -> None:
    if n != system.size:
        raise ValueError(f"state has {n} coefficients, system {system.size} levels")
    schedule.check_ceiling(system.r)


def evolve(system: BilinearSystem, schedule: ControlSchedule, psi0, record_trace: bool = False) -> PropagationResult:
    """Propagate ``psi0`` through the schedule; optionally keep the state after every segment."""
    x = np.array(coefficients(psi0), dtype=complex)
    _check(system, schedule, x.size)
    norm0 = float(np.linalg.norm(x))
    cache = _StepCache(system)
    trace = np.empty((len(schedule) + 1, x.size), dtype=complex) if record_trace else None
    if record_trace:
        trace[0] = x
    for n, (dt, u) in enumerate(zip(schedule.durations.tolist(), schedule.amplitudes.tolist())):
        x = cache.unitary(u, dt) @ x
        if record_trace:
            trace[n + 1] = x
    times = np.concatenate([[0.0], np.cumsum(schedule.durations)]) if record_trace else None
    return PropagationResult(StateVector(x), norm0, times, trace)


def propagator(system: BilinearSystem, schedule: ControlSchedule) -> np.ndarray:
    """The full unitary ``U(T, 0)``."""
    _check(system, schedule, system.size)
    cache = _StepCache(system)
    U = np.eye(system.size, dtype=complex)
    for dt, u in zip(schedule.durations.tolist(), schedule.amplitudes.tolist()):
        U = cache.unitary(u, dt) @ U
    return U


class Overlap(NamedTuple):
    fidelity: float
    distance: float


def fidelity(a, b, tolerance: float = 1e-9) -> Overlap:
    """``|<a, b>|^2`` together with the norm distance ``||a - b||``."""
    x, y = coefficients(a), coefficients(b)
    if x.shape != y.shape:
        raise ValueError("states differ in length")
    for name, v in (("a", x), ("b", y)):
        if abs(np.linalg.norm(v) - 1.0) > tolerance:
            raise ValueError(f"state {name} is not normalized (norm {np.linalg.norm(v):.12g})")
    f = float(abs(np.vdot(x, y)) ** 2)
    return Overlap(min(f, 1.0), float(np.linalg.norm(x - y)))


def stability_gap(
    system_a: BilinearSystem,
    system_b: BilinearSystem,
    schedule: ControlSchedule,
    truncation: int | None = None,
) -> tuple[float, float]:
    """Propagator gap against its bound ``||u||_L1 * ||B_a - B_b||_{+,-}``.

    Both systems are cut to their first ``truncation`` levels and must share
    the spectrum there. The ratio of the two returned numbers is an
    empirical lower estimate of the stability constant.
    """
    m = truncation or system_a.size
    if system_b.size < m or system_a.size < m:
        raise ValueError("truncation exceeds system size")
    a, b = system_a.truncate(m), system_b.truncate(m)
    if not np.array_equal(a.eigenvalues, b.eigenvalues):
        raise ValueError("systems must share the drift spectrum")
    Ua = propagator(a, schedule)
    Ub = propagator(b, schedule)
    gap = op_norm_pm(Ua - Ub, a.spectrum)
    bound = l1_norm(schedule) * op_norm_pm(a.coupling.entries - b.coupling.entries, a.spectrum)
    return gap, bound
