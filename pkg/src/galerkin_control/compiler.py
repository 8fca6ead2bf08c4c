"""Resonant piecewise-constant pulses realizing pilot rotations.

Phases are tracked in the frame generated by the diagonal part of the
Hamiltonian, ``Phi_k(t) = lambda_k t + B_kk * int_0^t u``. In that frame a
pulse

    u(s) = u0 (1 + cos(omega s + chi)) / 2

resonant with the pair ``(i, j)`` rotates the pair at rate ``u0 |b_ij| / 4``
(first-order averaging of the cosine term), and leaves the other
coordinates alone up to off-resonant corrections of order
``u0 |b| / gap``. A compiled plan therefore realizes

    U(T, 0) ~= diag(exp(-i Phi_pulses)) @ pilot_map

where ``Phi_pulses`` is the frame phase accumulated during the pulses (the
free-evolution drift is part of the pilot map).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .core import BilinearSystem, ControlSchedule, l1_norm
from .planner import PilotPlan, Rotation

MIN_SAMPLES_PER_PERIOD = 8
DEFAULT_SAMPLES_PER_PERIOD = 32
ALIAS_HARMONICS = 3
ALIAS_SEARCH_FACTOR = 4


def default_amplitude(r: float) -> float:
    return min(0.1, r / 2)


def frame_phases(system: BilinearSystem, schedule: ControlSchedule) -> np.ndarray:
    """Diagonal-frame phase accumulated over ``schedule``."""
    diag = np.real(np.diag(system.coupling.entries))
    return system.eigenvalues * schedule.total_duration + diag * l1_norm(schedule)


@dataclass(frozen=True)
class PulseSpec:
    i: int
    j: int
    carrier_frequency: float
    carrier_phase: float
    amplitude: float
    samples_per_period: int
    pulse_duration: float

    def __post_init__(self):
        if self.carrier_frequency <= 0:
            raise ValueError("carrier frequency must be positive")
        if self.samples_per_period < MIN_SAMPLES_PER_PERIOD:
            raise ValueError(f"need at least {MIN_SAMPLES_PER_PERIOD} samples per period")
        if self.amplitude <= 0:
            raise ValueError("pulse amplitude must be positive")

    @property
    def step(self) -> float:
        return 2 * math.pi / (self.carrier_frequency * self.samples_per_period)

    def schedule(self) -> ControlSchedule:
        T = self.pulse_duration
        if T <= 0:
            return ControlSchedule.empty()
        h = self.step
        n = max(1, math.ceil(T / h - 1e-9))
        durations = np.full(n, h)
        durations[-1] = T - (n - 1) * h
        if durations[-1] <= 1e-12 * h:
            durations = durations[:-1]
            n -= 1
        k = np.arange(n)
        # full steps use exactly periodic sample phases
        phase = 2 * math.pi * ((k % self.samples_per_period) + 0.5) / self.samples_per_period
        last_mid = (n - 1) * h + durations[-1] / 2
        phase[-1] = self.carrier_frequency * last_mid
        amps = 0.5 * self.amplitude * (1.0 + np.cos(phase + self.carrier_phase))
        return ControlSchedule(durations, np.clip(amps, 0.0, self.amplitude))

    def to_json(self) -> dict:
        return {
            "pair": [self.i, self.j],
            "carrier_frequency": self.carrier_frequency,
            "carrier_phase": self.carrier_phase,
            "amplitude": self.amplitude,
            "samples_per_period": self.samples_per_period,
            "pulse_duration": self.pulse_duration,
        }


def coupled_gaps(system: BilinearSystem) -> np.ndarray:
    """Sorted transition frequencies ``|lambda_a - lambda_b|`` over coupled pairs."""
    B = system.coupling.entries
    lam = system.eigenvalues
    a, b = np.nonzero(np.triu(np.abs(B) > 0, k=1))
    return np.sort(np.abs(lam[a] - lam[b]))


def alias_images(omega: float, samples_per_period: int, harmonics: int = ALIAS_HARMONICS) -> np.ndarray:
    """Frequencies where a sample-and-hold carrier leaks: ``|j n +- 1| omega``."""
    j = np.arange(1, harmonics + 1)
    n = samples_per_period
    return omega * np.concatenate([j * n - 1, j * n + 1]).astype(float)


def alias_free_samples(
    omega: float,
    samples_per_period: int,
    gaps,
    width: float,
    harmonics: int = ALIAS_HARMONICS,
) -> int:
    """Smallest count ``>= samples_per_period`` whose images miss every gap by more than ``width``.

    Searches up to ``ALIAS_SEARCH_FACTOR`` times the requested count and
    falls back to the request when nothing clears.
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.size == 0:
        return samples_per_period
    for n in range(samples_per_period, ALIAS_SEARCH_FACTOR * samples_per_period + 1):
        images = alias_images(omega, n, harmonics)
        if np.min(np.abs(images[:, None] - gaps[None, :])) > width:
            return n
    return samples_per_period


def _check_amplitude(u0: float, system: BilinearSystem) -> None:
    if not 0 < u0 < system.r:
        raise ValueError(f"pulse amplitude u0={u0:g} must lie in (0, r={system.r:g})")


def design_pulse(
    rot: Rotation,
    system: BilinearSystem,
    u0: float,
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD,
    frame=None,
    guard_gaps=None,
) -> PulseSpec:
    """Carrier, phase and duration of the pulse for ``rot``.

    ``frame`` is the diagonal-frame phase vector at the pulse start
    (zeros when the pulse opens the schedule); ``rot.theta`` is read in
    that frame's time origin. With ``guard_gaps`` the sample count is
    raised until no hold image sits on one of those transitions.
    """
    _check_amplitude(u0, system)
    B = system.coupling.entries
    lam = system.eigenvalues
    i, j = rot.i, rot.j
    b = B[i, j]
    if abs(b) == 0:
        raise ValueError(f"pair ({i}, {j}) is uncoupled")
    detuning = (lam[i] - lam[j]) + 0.5 * u0 * float(np.real(B[i, i] - B[j, j]))
    omega = abs(detuning)
    if omega <= 1e-12 * max(1.0, abs(lam[i]), abs(lam[j])):
        raise ValueError(f"pair ({i}, {j}) is degenerate; no resonant carrier exists")
    offset = 0.0 if frame is None else float(frame[i] - frame[j])
    if detuning > 0:
        chi = np.angle(b) + offset - math.pi / 2 - rot.theta
    else:
        chi = rot.theta - np.angle(b) - offset + math.pi / 2
    duration = 4.0 * rot.angle / (u0 * abs(b))
    n = int(samples_per_period)
    if guard_gaps is not None and duration > 0:
        # resonance half-width: power broadening plus the pulse's spectral width
        offdiag = np.abs(B - np.diag(np.diag(B)))
        width = u0 * float(np.max(offdiag)) + 4 * math.pi / duration
        n = alias_free_samples(omega, n, guard_gaps, width)
    return PulseSpec(i, j, omega, float(np.mod(chi, 2 * math.pi)), u0, n, duration)


def compile_rotation(
    rot: Rotation,
    system: BilinearSystem,
    u0: float,
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD,
    frame=None,
) -> ControlSchedule:
    if rot.angle <= 1e-15:
        return ControlSchedule.empty()
    return design_pulse(rot, system, u0, samples_per_period, frame).schedule()


def free_evolution_segment(tau: float) -> ControlSchedule:
    if tau < 0:
        raise ValueError("free evolution duration must be nonnegative")
    if tau == 0:
        return ControlSchedule.empty()
    return ControlSchedule.from_segments([(tau, 0.0)])


def l1_budget(m: int, min_coupling: float) -> float:
    """A-priori control budget ``5 (m-1) pi / (2 min|b|)``."""
    if m <= 1:
        return 0.0
    return 5 * (m - 1) * math.pi / (2 * min_coupling)


@dataclass(frozen=True)
class BudgetCertificate:
    l1: float
    budget: float
    m: int
    min_coupling: float

    @property
    def ok(self) -> bool:
        return self.l1 <= self.budget

    def to_json(self) -> dict:
        return {"l1": self.l1, "budget": self.budget, "ok": self.ok, "m": self.m, "min_coupling": self.min_coupling}


@dataclass(frozen=True)
class CompiledPlan:
    schedule: ControlSchedule
    certificate: BudgetCertificate
    pulses: tuple
    frame_phases: np.ndarray
    effective_nu: float

    @property
    def pulse_time(self) -> float:
        return sum(p.pulse_duration for p in self.pulses)


def compile_plan(
    plan: PilotPlan,
    system: BilinearSystem,
    u0: float,
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD,
    guard: BilinearSystem | None = None,
) -> CompiledPlan:
    """Forward pulses, a zero-control gap of length tau, then reverse pulses.

    Reverse rotations are re-expressed in the absolute frame by the drift
    phase the free gap adds, ``theta += (lambda_i - lambda_j) tau``.
    ``guard`` is the larger system the schedule will actually drive; its
    coupled transitions are kept clear of sampling images.
    """
    if plan.dimension != system.size:
        raise ValueError(f"plan has dimension {plan.dimension}, system {system.size}")
    _check_amplitude(u0, system)
    lam = system.eigenvalues
    tau = plan.free_evolution_duration
    frame = np.zeros(system.size)
    parts = []
    pulses = []
    gaps = None if guard is None else coupled_gaps(guard)

    def emit(rot: Rotation):
        nonlocal frame
        pulse = design_pulse(rot, system, u0, samples_per_period, frame, gaps)
        sched = pulse.schedule()
        frame = frame + frame_phases(system, sched)
        pulses.append(pulse)
        parts.append(sched)

    for rot in plan.rotations:
        emit(rot)
    gap = free_evolution_segment(tau)
    parts.append(gap)
    frame = frame + lam * tau
    for rot in plan.reverse_rotations:
        emit(rot.shifted((lam[rot.i] - lam[rot.j]) * tau))

    schedule = ControlSchedule.concatenate(parts)
    schedule.check_ceiling(system.r)
    l1 = l1_norm(schedule)
    cert = BudgetCertificate(l1, l1_budget(plan.dimension, plan.min_coupling), plan.dimension, plan.min_coupling)
    B = system.coupling.entries
    nominal = sum(r.angle / abs(B[r.i, r.j]) for r in (*plan.rotations, *plan.reverse_rotations))
    effective_nu = nominal / l1 if l1 > 0 else float("nan")
    return CompiledPlan(schedule, cert, tuple(pulses), frame - lam * tau, effective_nu)


def schedule_to_csv(schedule: ControlSchedule) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_start", "duration", "amplitude"])
    for t0, (d, a) in zip(schedule.start_times.tolist(), schedule.segments):
        w.writerow([repr(t0), repr(d), repr(a)])
    return buf.getvalue()


def schedule_from_csv(text: str) -> ControlSchedule:
    rows = list(csv.DictReader(io.StringIO(text)))
    return ControlSchedule.from_segments((float(r["duration"]), float(r["amplitude"])) for r in rows)


def schedule_to_json(schedule: ControlSchedule) -> dict:
    return {
        "durations": schedule.durations.tolist(),
        "amplitudes": schedule.amplitudes.tolist(),
        "total_duration": schedule.total_duration,
        "l1_norm": l1_norm(schedule),
    }
