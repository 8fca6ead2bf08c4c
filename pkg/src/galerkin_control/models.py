"""Model generators: a point interaction in a box, and user-supplied matrices.

Box convention: ``Phi_k(x) = sqrt(2) sin(k pi x)`` on ``[0, 1]`` with
``E_k = k^2 pi^2``. A point interaction of strength ``mu`` at ``c`` adds the
form ``mu * conj(Psi(c)) Phi(c)``, so the coupling is the rank-one matrix
``B_kl = Phi_k(c) Phi_l(c)``.

With a baseline strength ``eta > 0`` (only at ``c = 1/2``) the drift becomes
``H0 + eta h1``. Its eigenfunctions are known in closed form: odd-parity
levels are unchanged, and even-parity levels are ``A sin(kx)`` mirrored
about the centre, with ``k`` solving ``2k cos(k/2) + eta sin(k/2) = 0``.
The system is then expressed in that perturbed eigenbasis, and the
coupling is again rank-one in the perturbed trace values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .core import BilinearSystem, CouplingMatrix, Spectrum
from .graph import GAP_TOLERANCE, NonresonanceReport, build_graph, check_nonresonance

PI2 = math.pi**2
DEFAULT_YOUNG_EPSILON = 0.1
LIFT_GRID_POINTS = 32


class ModelValidationError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


class ResonanceLiftError(RuntimeError):
    pass


@dataclass(frozen=True)
class DeltaBoxModel:
    position: float = 0.5
    eta: float = 0.0
    truncation: int = 8

    def __post_init__(self):
        if not 0 < self.position < 1:
            raise ValueError(f"interaction position must lie in (0, 1), got {self.position}")
        if self.truncation < 2:
            raise ValueError("truncation must keep at least 2 levels")
        if self.eta < 0:
            raise ValueError("attractive baseline interactions (eta < 0) are not supported")
        if self.eta > 0 and not self.centered:
            raise ValueError("eta > 0 is only supported for the centred interaction")

    @property
    def centered(self) -> bool:
        return self.position == 0.5

    def with_eta(self, eta: float) -> DeltaBoxModel:
        return DeltaBoxModel(self.position, eta, self.truncation)

    def with_truncation(self, n: int) -> DeltaBoxModel:
        return DeltaBoxModel(self.position, self.eta, n)

    def to_json(self) -> dict:
        return {"type": "delta_box", "position": self.position, "eta": self.eta, "truncation": self.truncation}


def _sin_pi(x: float) -> float:
    """``sin(pi x)`` that is exact at integers and half-integers."""
    q = Fraction(x).limit_denominator(1 << 20) if isinstance(x, float) else Fraction(x)
    if float(q) == x and q.denominator in (1, 2):
        r = (2 * q) % 4  # sin(pi x) depends on 2x mod 4
        return {0: 0.0, 1: 1.0, 2: 0.0, 3: -1.0}[int(r)]
    return math.sin(math.pi * x)


def _secular(k: float, eta: float) -> float:
    return 2 * k * math.cos(k / 2) + eta * math.sin(k / 2)


def even_wavenumber(j: int, eta: float) -> float:
    """Wavenumber of the ``j``-th even-parity level (``j = 0`` is the ground state)."""
    lo, hi = (2 * j + 1) * math.pi, (2 * j + 2) * math.pi
    if eta == 0:
        return lo
    return brentq(_secular, lo, hi, args=(eta,), xtol=1e-15, rtol=8.9e-16, maxiter=200)


def secular_residual(k: float, eta: float) -> float:
    return _secular(k, eta)


def _even_trace(k: float) -> float:
    # normalized A sin(kx) on [0, 1/2], mirrored; value at the centre
    norm2 = 0.5 - math.sin(k) / (2 * k)
    return math.sin(k / 2) / math.sqrt(norm2)


def eigenpairs(model: DeltaBoxModel) -> tuple[np.ndarray, np.ndarray]:
    """Energies and trace values ``Phi_k(c)`` of levels ``1..N``."""
    n = model.truncation
    levels = np.arange(1, n + 1)
    if model.eta == 0:
        energies = levels.astype(float) ** 2 * PI2
        traces = np.array([math.sqrt(2) * _sin_pi(k * model.position) for k in levels])
        return energies, traces
    energies = np.empty(n)
    traces = np.zeros(n)
    for idx, k in enumerate(levels):
        if k % 2:
            kk = even_wavenumber((k - 1) // 2, model.eta)
            energies[idx] = kk**2
            traces[idx] = _even_trace(kk)
        else:
            energies[idx] = k**2 * PI2
    return energies, traces


def delta_box_system(model: DeltaBoxModel, r: float = 1.0, young_epsilon: float = DEFAULT_YOUNG_EPSILON) -> BilinearSystem:
    """Galerkin truncation of the box with a point interaction.

    The relative form bounds come from ``|f(c)|^2 <= eps ||f'||^2 + ||f||^2 / eps``.
    """
    energies, traces = eigenpairs(model)
    if model.eta == 0:
        # 2 sin sin rather than (sqrt2 sin)(sqrt2 sin): exact +-2 at the centre
        s = np.array([_sin_pi(k * model.position) for k in range(1, model.truncation + 1)])
        B = (2.0 * np.outer(s, s)).astype(complex)
    else:
        B = np.outer(traces, traces).astype(complex)
    return BilinearSystem(
        Spectrum(energies),
        CouplingMatrix(B),
        r,
        young_epsilon,
        1.0 / young_epsilon,
        tuple(range(1, model.truncation + 1)),
        model,
    )


def even_subspace(system) -> BilinearSystem:
    """Restriction to the odd-numbered levels (even parity about the centre)."""
    if isinstance(system, DeltaBoxModel):
        system = delta_box_system(system)
    model = system.model
    if not isinstance(model, DeltaBoxModel) or not model.centered:
        raise ValueError("the parity selection rule needs a centred point interaction")
    keep = [i for i, k in enumerate(system.levels) if k % 2 == 1]
    return system.restrict(keep)


def perturbed_spectrum(model: DeltaBoxModel, eta: float, count: int) -> Spectrum:
    """First ``count`` levels of ``H0 + eta h1`` (centred interaction)."""
    if eta < 0:
        raise ValueError("eta < 0 is out of scope")
    if not model.centered:
        raise ValueError("perturbed spectrum is only available for the centred interaction")
    energies, _ = eigenpairs(DeltaBoxModel(model.position, eta, count))
    return Spectrum(energies)


def even_level_energy(j: int, eta: float) -> float:
    return even_wavenumber(j, eta) ** 2


def perturbation_coefficients(level: int) -> tuple[float, float]:
    """Low-order coefficients of the even-parity level ``k = 2l + 1``.

    Returns ``(2, 1/(pi^2 k^2))``: the first-order coefficient
    ``h1(Phi_k, Phi_k)`` and the magnitude of the second-order sum
    ``sum_j |b_kj|^2 / (E_j - E_k)`` over the other even-parity levels.
    The level itself behaves as ``E_k + 2 eta - eta^2 / (pi^2 k^2) + O(eta^3)``
    because that sum enters with a negative sign.
    """
    if level < 1 or level % 2 == 0:
        raise ValueError("perturbation coefficients are defined for odd levels k = 2l+1")
    return 2.0, 1.0 / (PI2 * level**2)


def telescoping_partial_sum(l: int, terms: int) -> float:
    """``sum_{j != l, j < terms} (1/(j-l) - 1/(j+l+1))``, which tends to ``1/(2l+1)``."""
    j = np.arange(terms, dtype=float)
    j = j[j != l]
    # pairwise summation of the small tail differences
    return float(np.sum(1.0 / (j - l) - 1.0 / (j + l + 1)))


def second_order_sum(level: int, terms: int = 200_000) -> float:
    """Direct Rayleigh-Schrödinger sum ``sum_j |b_kj|^2 / (E_k - E_j)`` over even-parity levels."""
    k = level
    j = np.arange(terms)
    kj = 2 * j + 1
    kj = kj[kj != k]
    return float(np.sum(4.0 / (PI2 * (k**2 - kj.astype(float) ** 2))))


@dataclass(frozen=True)
class LiftResult:
    eta: float
    report: NonresonanceReport
    tried: tuple


def lift_grid(eta_max: float, points: int = LIFT_GRID_POINTS) -> np.ndarray:
    """Ascending geometric grid in ``[1e-3 eta_max, eta_max)``."""
    return eta_max * 10.0 ** (-3.0 * (1.0 - np.arange(points) / points))


def _even_certificate(model: DeltaBoxModel, m: int, gap_tolerance: float) -> NonresonanceReport:
    system = even_subspace(delta_box_system(model.with_truncation(2 * m)))
    system = system.truncate(m)
    chain = build_graph(system.coupling).edges
    return check_nonresonance(system.spectrum, system.coupling, chain, gap_tolerance)


def lift_resonances(
    model: DeltaBoxModel, m: int, eta_max: float, gap_tolerance: float = GAP_TOLERANCE
) -> LiftResult:
    """Smallest baseline strength that makes the first ``m`` even levels non-resonant.

    The model's own ``eta`` is tried first, then the geometric grid.
    """
    if eta_max <= 0:
        raise ValueError("eta_max must be positive")
    if not model.centered:
        raise ValueError("resonance lifting needs the centred interaction")
    tried = []
    for eta in [model.eta, *lift_grid(eta_max)]:
        if eta >= eta_max and eta != model.eta:
            continue
        report = _even_certificate(model.with_eta(float(eta)), m, gap_tolerance)
        tried.append(float(eta))
        if report.ok:
            return LiftResult(float(eta), report, tuple(tried))
    raise ResonanceLiftError(
        f"no eta in (0, {eta_max:g}) clears the gap collisions among {m} levels; "
        "try a larger eta_max or a finer grid"
    )


def user_matrix_model(spectrum, coupling, r: float, a: float = 0.0, b: float = 0.0) -> BilinearSystem:
    """Validated system from raw data; every violated condition is reported."""
    problems = []
    lam = np.asarray(spectrum, dtype=float).reshape(-1)
    B = np.asarray(coupling, dtype=complex)
    if not np.all(np.isfinite(lam)):
        problems.append("spectrum contains non-finite values")
    if lam.size > 1 and np.any(np.diff(lam) < 0):
        problems.append("spectrum must be sorted nondecreasing")
    if lam.size and lam.min() < 0:
        problems.append("spectrum must be nonnegative (shift the model first)")
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        problems.append(f"coupling must be square, got shape {B.shape}")
    elif B.shape[0] != lam.size:
        problems.append(f"coupling is {B.shape[0]}x{B.shape[0]} but spectrum has {lam.size} levels")
    elif not np.all(np.isfinite(B)):
        problems.append("coupling contains non-finite entries")
    elif not np.array_equal(B, B.conj().T):
        problems.append("coupling is not Hermitian")
    if not r > 0:
        problems.append("r must be positive")
    if a < 0 or b < 0:
        problems.append("relative bounds a, b must be nonnegative")
    if r * a >= 1:
        problems.append(f"r must lie in (0,1/a): got r*a = {r * a:g}")
    if problems:
        raise ModelValidationError(problems)
    return BilinearSystem(Spectrum(lam), CouplingMatrix(B), r, a, b)
