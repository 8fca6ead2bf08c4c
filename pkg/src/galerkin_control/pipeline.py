"""End-to-end runs: truncate targets, certify, plan, compile, simulate, report.

States are coordinates in the eigenbasis of the *working* system: the
even-parity levels for ``subspace="even"`` (delta box), every level
otherwise. When the baseline interaction is lifted to ``eta > 0`` the
working basis is the eigenbasis of the lifted drift, and the schedule is
run there with controls ``u - eta``; the emitted original-coordinate
schedule adds ``eta`` back.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .compiler import (
    DEFAULT_SAMPLES_PER_PERIOD,
    BudgetCertificate,
    compile_plan,
    default_amplitude,
    l1_budget,
)
from .core import ZERO_TOLERANCE, BilinearSystem, ControlSchedule, coefficients, l1_norm
from .graph import (
    GAP_TOLERANCE,
    DisconnectedGraphError,
    NonresonanceReport,
    build_graph,
    check_nonresonance,
    spanning_tree,
)
from .models import DeltaBoxModel, ResonanceLiftError, delta_box_system, even_subspace, lift_resonances
from .planner import DEFAULT_NU, PilotPlan, plan_transfer
from .propagator import evolve

REPORT_SCHEMA_VERSION = 1
FRAME_ITERATIONS = 12
TARGET_STRATEGIES = ("lowest", "separated")
SEPARATION_WARNING = 1e-3

log = logging.getLogger(__name__)


class DisconnectedError(DisconnectedGraphError):
    """Target support is not reachable from the initial state's component."""


class ResonanceError(RuntimeError):
    def __init__(self, message: str, report: NonresonanceReport | None = None):
        super().__init__(message)
        self.report = report


def _tail_norms(x: np.ndarray) -> np.ndarray:
    # tail[m] = norm of coefficients with index >= m
    sq = np.abs(x) ** 2
    return np.sqrt(np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]]))


def truncate_targets(psi0, psi1, epsilon: float, *, known_norm: float | None = None):
    """Smallest ``m`` with both tails below ``epsilon/3``; truncations rescaled to the common norm.

    ``known_norm`` is the norm of the full (infinite) sequences. When it
    exceeds the norm of the supplied coefficients, the missing mass counts
    toward every tail and may make the bound impossible to certify.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x0 = np.asarray(coefficients(psi0), dtype=complex)
    x1 = np.asarray(coefficients(psi1), dtype=complex)
    n = max(x0.size, x1.size)
    x0 = np.pad(x0, (0, n - x0.size))
    x1 = np.pad(x1, (0, n - x1.size))
    n0, n1 = np.linalg.norm(x0), np.linalg.norm(x1)
    if n0 == 0 or n1 == 0:
        raise ValueError("states must be nonzero")
    norm = known_norm if known_norm is not None else max(n0, n1)
    if abs(n0 - n1) > 1e-12 * norm and known_norm is None:
        raise ValueError(f"states have different norms ({n0:.15g} vs {n1:.15g})")
    missing0 = math.sqrt(max(norm**2 - n0**2, 0.0))
    missing1 = math.sqrt(max(norm**2 - n1**2, 0.0))
    t0 = np.hypot(_tail_norms(x0), missing0)
    t1 = np.hypot(_tail_norms(x1), missing1)
    bound = epsilon / 3
    ok = np.flatnonzero((t0 < bound) & (t1 < bound))
    if ok.size == 0:
        raise ValueError(
            f"{n} coefficients do not certify tails below epsilon/3 = {bound:g}; supply more coefficients"
        )
    m = max(int(ok[0]), 1)
    while m <= n and (np.linalg.norm(x0[:m]) == 0 or np.linalg.norm(x1[:m]) == 0):
        m += 1
    if m > n:
        raise ValueError("a truncated state is zero at every admissible m")
    y0 = x0[:m] * (norm / np.linalg.norm(x0[:m]))
    y1 = x1[:m] * (norm / np.linalg.norm(x1[:m]))
    return m, y0, y1


@dataclass(frozen=True)
class ExperimentSettings:
    epsilon: float = 0.15
    r: float = 1.0
    u0: float | None = None
    nu: float = DEFAULT_NU
    m: int | None = None
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD
    truncation: int | None = None
    subspace: str = "even"
    lift: bool = True
    eta_max: float = 0.5
    gap_tolerance: float = GAP_TOLERANCE
    target_level: int | None = None
    target_strategy: str = "lowest"
    alias_guard: bool = True
    seed: int | None = None

    def __post_init__(self):
        if self.subspace not in ("even", "full"):
            raise ValueError("subspace must be 'even' or 'full'")
        if self.target_strategy not in TARGET_STRATEGIES:
            raise ValueError(f"target_strategy must be one of {TARGET_STRATEGIES}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be at least 1")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def working_system(model, n: int, settings: ExperimentSettings) -> BilinearSystem:
    """``n`` working levels of a model (delta box or explicit system)."""
    if isinstance(model, DeltaBoxModel):
        if settings.subspace == "even":
            return even_subspace(delta_box_system(model.with_truncation(2 * n), settings.r))
        return delta_box_system(model.with_truncation(n), settings.r)
    if isinstance(model, BilinearSystem):
        if n > model.size:
            raise ValueError(f"requested {n} levels from a {model.size}-level system")
        return model.with_ceiling(settings.r).truncate(n)
    raise TypeError(f"unsupported model {type(model).__name__}")


def max_levels(model) -> int | None:
    return model.size if isinstance(model, BilinearSystem) else None


@dataclass(frozen=True)
class ExperimentReport:
    settings: ExperimentSettings
    model: dict
    levels: tuple
    m: int
    planning_levels: tuple
    eta: float
    certification: NonresonanceReport | None
    plan: PilotPlan | None
    certificate: BudgetCertificate
    simulation_truncation: int
    fidelity: float
    distance: float
    truncated_distance: float
    distance_bound: float
    fidelity_refined: float | None
    effective_nu: float | None
    original_max_amplitude: float
    tree_separation: float | None
    schedule: ControlSchedule = field(compare=False, repr=False)
    original_schedule: ControlSchedule = field(compare=False, repr=False)
    final_state: np.ndarray = field(compare=False, repr=False)
    trace_times: np.ndarray | None = field(default=None, compare=False, repr=False)
    trace_states: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def truncation_robust(self) -> bool | None:
        if self.fidelity_refined is None:
            return None
        infidelity = max(1.0 - self.fidelity, 0.0)
        return abs(self.fidelity - self.fidelity_refined) <= 0.1 * infidelity + 1e-14

    @property
    def budget_ok(self) -> bool:
        return self.certificate.ok

    @property
    def fidelity_ok(self) -> bool:
        return self.distance < self.settings.epsilon

    @property
    def passed(self) -> bool:
        return self.fidelity_ok and self.budget_ok

    def to_json(self) -> dict:
        labels = self.planning_levels
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "settings": self.settings.to_json(),
            "model": self.model,
            "levels": list(self.levels),
            "m": self.m,
            "planning_levels": list(labels),
            "eta": self.eta,
            "certification": None if self.certification is None else self.certification.to_json(labels),
            "plan": None if self.plan is None else _plan_json(self.plan, labels),
            "budget": self.certificate.to_json(),
            "schedule": {
                "segments": len(self.schedule),
                "total_duration": self.schedule.total_duration,
                "l1_norm": l1_norm(self.schedule),
                "original_l1_norm": l1_norm(self.original_schedule),
                "original_max_amplitude": self.original_max_amplitude,
            },
            "simulation": {
                "truncation": self.simulation_truncation,
                "fidelity": self.fidelity,
                "distance": self.distance,
                "truncated_target_distance": self.truncated_distance,
                "distance_bound": self.distance_bound,
                "fidelity_refined": self.fidelity_refined,
                "truncation_robust": self.truncation_robust,
                "effective_nu": self.effective_nu,
                "tree_separation": self.tree_separation,
            },
            "passed": self.passed,
            "fidelity_ok": self.fidelity_ok,
            "budget_ok": self.budget_ok,
        }


def _plan_json(plan: PilotPlan, labels) -> dict:
    out = plan.to_json()
    for key in ("rotations", "reverse_rotations"):
        for rot in out[key]:
            rot["i"], rot["j"] = labels[rot["i"]], labels[rot["j"]]
    out["target_level"] = labels[plan.target_vertex]
    return out


def _support(x: np.ndarray) -> set[int]:
    return {int(i) for i in np.flatnonzero(np.abs(x) > ZERO_TOLERANCE)}


def _planning_vertices(system: BilinearSystem, x0: np.ndarray, x1: np.ndarray) -> list[int]:
    graph = build_graph(system.coupling)
    s0, s1 = _support(x0), _support(x1)
    start = min(s0)
    comp = graph.reachable(start)
    outside = (s0 | s1) - comp
    if outside:
        names = sorted(system.levels[i] for i in outside)
        raise DisconnectedError(
            f"levels {names} are not connected to level {system.levels[start]} by nonzero couplings",
            names,
        )
    return sorted(comp)


def _certify(system: BilinearSystem, settings: ExperimentSettings) -> NonresonanceReport:
    chain = build_graph(system.coupling).edges
    return check_nonresonance(system.spectrum, system.coupling, chain, settings.gap_tolerance)


def tree_separation(system: BilinearSystem, vertices, root: int) -> float:
    """Worst relative distance from a tree transition to any other driven transition.

    ``vertices`` index the planning levels inside ``system`` and ``root``
    indexes ``vertices``. Competing transitions are the coupled pairs of
    ``system`` touching a planning level; a value near zero means some
    pulse of the plan is physically resonant with a second pair.
    """
    vertices = list(vertices)
    sub = system.restrict(vertices)
    tree = spanning_tree(build_graph(sub.coupling), root)
    lam = system.eigenvalues
    B = system.coupling.entries
    planning = set(vertices)
    others = [
        (a, b)
        for a in range(system.size)
        for b in range(a + 1, system.size)
        if abs(B[a, b]) > 0 and (a in planning or b in planning)
    ]
    worst = math.inf
    for v, p in tree.parent.items():
        edge = {vertices[v], vertices[p]}
        g = abs(lam[vertices[v]] - lam[vertices[p]])
        for a, b in others:
            if {a, b} == edge:
                continue
            worst = min(worst, abs(g - abs(lam[a] - lam[b])) / max(g, 1e-300))
    return worst


def _finite(x: float) -> float | None:
    return x if math.isfinite(x) else None


def _choose_target(system: BilinearSystem, vertices, settings: ExperimentSettings) -> int:
    plan_sys = system.restrict(vertices)
    if settings.target_level is not None:
        if settings.target_level not in plan_sys.levels:
            raise ValueError(
                f"target level {settings.target_level} is not among the planning levels {plan_sys.levels}"
            )
        return plan_sys.levels.index(settings.target_level)
    nonzero = [i for i in range(plan_sys.size) if plan_sys.eigenvalues[i] != 0]
    if not nonzero:
        raise ValueError("every planning level has zero energy; the phase step is impossible")
    if settings.target_strategy == "lowest" or len(nonzero) == 1:
        return nonzero[0]
    # max() keeps the first (lowest) index among ties
    return max(nonzero, key=lambda k: tree_separation(system, vertices, k))


def _frame_plan(plan_sys: BilinearSystem, x0, x1, k, settings, u0, guard=None):
    """Plan toward ``exp(i Phi) psi1`` so that the pulse-frame phase ``Phi`` cancels."""
    phase = np.zeros(plan_sys.size)
    compiled = None
    for _ in range(FRAME_ITERATIONS):
        target = np.exp(1j * phase) * x1
        plan = plan_transfer(x0, target, plan_sys, k, settings.nu)
        compiled = compile_plan(plan, plan_sys, u0, settings.samples_per_period, guard)
        new = np.asarray(compiled.frame_phases)
        change = np.max(np.abs(np.angle(np.exp(1j * (new - phase))))) if new.size else 0.0
        phase = new
        if change < 1e-12:
            break
    target = np.exp(1j * phase) * x1
    plan = plan_transfer(x0, target, plan_sys, k, settings.nu)
    compiled = compile_plan(plan, plan_sys, u0, settings.samples_per_period, guard)
    return plan, compiled


def _simulate(system: BilinearSystem, schedule: ControlSchedule, x0, x1, record_trace=False):
    n = system.size
    y0 = np.zeros(n, dtype=complex)
    y1 = np.zeros(n, dtype=complex)
    y0[: min(n, x0.size)] = x0[:n]
    y1[: min(n, x1.size)] = x1[:n]
    result = evolve(system, schedule, y0, record_trace=record_trace)
    final = result.final_state.coefficients
    return result, final, y1


def run_controllability_experiment(model, psi0, psi1, settings: ExperimentSettings | None = None, **overrides):
    """Steer ``psi0`` toward ``psi1`` and certify the outcome by simulation.

    ``model`` is a :class:`DeltaBoxModel` or an explicit :class:`BilinearSystem`.
    Keyword overrides update the settings (``epsilon``, ``u0``, ``m`` ...).
    """
    settings = replace(settings or ExperimentSettings(), **overrides)
    x0_full = np.asarray(coefficients(psi0), dtype=complex)
    x1_full = np.asarray(coefficients(psi1), dtype=complex)
    for name, x in (("psi0", x0_full), ("psi1", x1_full)):
        if abs(np.linalg.norm(x) - 1.0) > 1e-10:
            raise ValueError(f"{name} must be normalized (norm {np.linalg.norm(x):.12g})")

    m_tail, _, _ = truncate_targets(x0_full, x1_full, settings.epsilon)
    m = max(settings.m or m_tail, m_tail)
    cap = max_levels(model)
    n_sim = settings.truncation or 3 * m
    if cap is not None:
        n_sim = min(n_sim, cap)
    if n_sim < m:
        raise ValueError(f"simulation truncation {n_sim} is smaller than the planner size {m}")
    if max(x0_full.size, x1_full.size) > n_sim:
        extra = np.concatenate([x0_full[n_sim:], x1_full[n_sim:]])
        if np.any(np.abs(extra) > 0):
            raise ValueError("states have support beyond the simulation truncation")

    x0 = np.pad(x0_full, (0, max(0, m - x0_full.size)))[:m]
    x1 = np.pad(x1_full, (0, max(0, m - x1_full.size)))[:m]
    x0 = x0 / np.linalg.norm(x0)
    x1 = x1 / np.linalg.norm(x1)

    eta = model.eta if isinstance(model, DeltaBoxModel) else 0.0
    system = working_system(model, n_sim, settings)
    vertices = _planning_vertices(system.truncate(m), x0, x1)
    u0 = settings.u0 if settings.u0 is not None else default_amplitude(settings.r)

    if np.allclose(x0, x1, rtol=0, atol=1e-14) and np.allclose(x0_full, x1_full, rtol=0, atol=1e-14):
        return _trivial_report(model, system, settings, m, vertices, eta, x0_full)

    cert = _certify(system.restrict(vertices), settings)
    if not cert.ok:
        if not (settings.lift and isinstance(model, DeltaBoxModel) and model.centered):
            raise ResonanceError("planning levels are resonant and the model cannot be lifted", cert)
        try:
            lifted = lift_resonances(model, len(vertices), settings.eta_max, settings.gap_tolerance)
        except ResonanceLiftError as exc:
            raise ResonanceError(str(exc), cert) from exc
        eta = lifted.eta
        model = model.with_eta(eta)
        system = working_system(model, n_sim, settings)
        cert = _certify(system.restrict(vertices), settings)
        if not cert.ok:
            raise ResonanceError(f"lifting to eta={eta:g} did not certify the planning levels", cert)

    plan_sys = system.restrict(vertices)
    k = _choose_target(system, vertices, settings)
    big = None
    if cap is None or 2 * n_sim <= cap:
        big = working_system(model, 2 * n_sim, settings)
    guard = None
    if settings.alias_guard:
        guard = system if big is None else big
    separation = _finite(tree_separation(system, vertices, k))
    if separation is not None and separation < SEPARATION_WARNING:
        log.warning(
            "spanning tree at level %s has a transition within %.2g (relative) of another driven pair; "
            "target_strategy='separated' may do better",
            plan_sys.levels[k],
            separation,
        )
    px0, px1 = x0[vertices], x1[vertices]
    plan, compiled = _frame_plan(plan_sys, px0, px1, k, settings, u0, guard)

    # simulate on the working truncation: original (untruncated) targets
    result, final, y1 = _simulate(system, compiled.schedule, x0_full, x1_full, record_trace=True)
    fid = float(abs(np.vdot(y1, final)) ** 2)
    dist = float(np.linalg.norm(y1 - final))
    xt0 = np.zeros(n_sim, dtype=complex)
    xt1 = np.zeros(n_sim, dtype=complex)
    xt0[:m], xt1[:m] = x0, x1
    truncated = float(np.linalg.norm(xt1 - evolve(system, compiled.schedule, xt0).final_state.coefficients))
    tail = np.linalg.norm(x0_full[m:]) + np.linalg.norm(x1_full[m:])
    tail += np.linalg.norm(x0_full[:m] - x0) + np.linalg.norm(x1_full[:m] - x1)

    refined = None
    if big is not None:
        _, final2, y12 = _simulate(big, compiled.schedule, x0_full, x1_full)
        refined = float(abs(np.vdot(y12, final2)) ** 2)

    original = compiled.schedule.shifted(eta) if eta > 0 else compiled.schedule
    original_max = original.max_amplitude
    if len(original) and original_max >= settings.r:
        raise ValueError(f"original-coordinate amplitude {original_max:g} reaches the ceiling r={settings.r:g}")

    return ExperimentReport(
        settings=settings,
        model=_model_json(model),
        levels=system.levels,
        m=m,
        planning_levels=tuple(system.levels[v] for v in vertices),
        eta=float(eta),
        certification=cert,
        plan=plan,
        certificate=compiled.certificate,
        simulation_truncation=n_sim,
        fidelity=fid,
        distance=dist,
        truncated_distance=truncated,
        distance_bound=float(truncated + tail),
        fidelity_refined=refined,
        effective_nu=compiled.effective_nu,
        original_max_amplitude=original_max,
        tree_separation=separation,
        schedule=compiled.schedule,
        original_schedule=original,
        final_state=final,
        trace_times=result.times,
        trace_states=result.trace,
    )


def _model_json(model) -> dict:
    if isinstance(model, DeltaBoxModel):
        return model.to_json()
    return {
        "type": "matrix",
        "spectrum": model.eigenvalues.tolist(),
        "coupling_re": model.matrix.real.tolist(),
        "coupling_im": model.matrix.imag.tolist(),
    }


def _trivial_report(model, system, settings, m, vertices, eta, x0_full):
    empty = ControlSchedule.empty()
    n = system.size
    y = np.zeros(n, dtype=complex)
    y[: x0_full.size] = x0_full
    return ExperimentReport(
        settings=settings,
        model=_model_json(model),
        levels=system.levels,
        m=m,
        planning_levels=tuple(system.levels[v] for v in vertices),
        eta=float(eta),
        certification=None,
        plan=None,
        certificate=BudgetCertificate(0.0, l1_budget(1, math.inf), 1, math.inf),
        simulation_truncation=n,
        fidelity=1.0,
        distance=0.0,
        truncated_distance=0.0,
        distance_bound=0.0,
        fidelity_refined=1.0,
        effective_nu=None,
        original_max_amplitude=0.0,
        tree_separation=None,
        schedule=empty,
        original_schedule=empty,
        final_state=y,
        trace_times=np.zeros(1),
        trace_states=y[None, :],
    )


@dataclass(frozen=True)
class SweepPoint:
    index: int
    u0: float
    samples_per_period: int
    truncation: int | None


@dataclass(frozen=True)
class SweepOutcome:
    point: SweepPoint
    report: dict | None
    error: str | None
    runtime_s: float


def sweep_grid(u0_values, samples_values, truncation_values) -> list[SweepPoint]:
    grid = product(u0_values, samples_values, truncation_values)
    return [SweepPoint(i, float(u), int(s), None if n is None else int(n)) for i, (u, s, n) in enumerate(grid)]


def _run_point(args) -> SweepOutcome:
    model, psi0, psi1, settings, point = args
    start = time.perf_counter()
    try:
        report = run_controllability_experiment(
            model,
            psi0,
            psi1,
            settings,
            u0=point.u0,
            samples_per_period=point.samples_per_period,
            truncation=point.truncation or settings.truncation,
        )
        payload, error = report.to_json(), None
    except Exception as exc:  # recorded per point; the sweep keeps going
        payload, error = None, f"{type(exc).__name__}: {exc}"
    return SweepOutcome(point, payload, error, time.perf_counter() - start)


def run_sweep(model, psi0, psi1, settings: ExperimentSettings, points, workers: int | None = None) -> list[SweepOutcome]:
    """Run every grid point in a process pool; results come back in grid order."""
    jobs = [(model, np.asarray(coefficients(psi0)), np.asarray(coefficients(psi1)), settings, p) for p in points]
    workers = workers or min(len(jobs), os.cpu_count() or 1)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_point(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_point, jobs))
