"""Core value types shared by every module.

All objects are immutable after construction. Arrays handed out by these
types are read-only views; copy them before mutating.

Indices are zero-based throughout the library. Physical level numbers (the
``k`` in ``E_k = k^2 pi^2``) are carried separately as ``levels`` labels on
:class:`BilinearSystem` and only show up in reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Couplings with modulus at or below this count as absent (graph edges,
# planner support, repair sets).
ZERO_TOLERANCE = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


def coefficients(v) -> np.ndarray:
    """Return the complex coefficient array behind a StateVector or array-like."""
    if isinstance(v, StateVector):
        return v.coefficients
    return np.asarray(v, dtype=complex)


@dataclass(frozen=True)
class Spectrum:
    """Ordered drift eigenvalues with a stored lower bound ``-lower_bound``."""

    values: np.ndarray
    lower_bound: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum contains non-finite values")
        if values.size > 1 and np.any(np.diff(values) < 0):
            raise ValueError("spectrum must be nondecreasing; relabel explicitly before construction")
        if self.lower_bound < 0:
            raise ValueError("lower_bound must be >= 0")
        if values.size and values[0] < -self.lower_bound:
            raise ValueError(f"eigenvalue {values[0]} is below the stored bound -{self.lower_bound}")
        object.__setattr__(self, "values", _frozen(values))

    def __len__(self) -> int:
        return self.values.size

    @property
    def size(self) -> int:
        return self.values.size

    def shifted(self) -> Spectrum:
        """Shift by the stored bound so that every value is nonnegative."""
        return Spectrum(self.values + self.lower_bound, 0.0)

    def restrict(self, indices: Sequence[int]) -> Spectrum:
        return Spectrum(self.values[list(indices)], self.lower_bound)

    def weights(self) -> np.ndarray:
        """The Hilbert-scale weights ``lambda_j + 1``."""
        w = self.values + 1.0
        if np.any(w <= 0):
            raise ValueError("lambda_j + 1 must be positive; shift the spectrum first")
        return w


@dataclass(frozen=True)
class CouplingMatrix:
    """Dense Hermitian coupling ``B_jk = h1(Phi_j, Phi_k)`` on an m-truncation."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"coupling must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("coupling contains non-finite entries")
        if not np.array_equal(entries, entries.conj().T):
            defect = float(np.max(np.abs(entries - entries.conj().T)))
            raise ValueError(f"coupling is not Hermitian (max defect {defect:.3e})")
        object.__setattr__(self, "entries", _frozen(entries))

    @property
    def truncation_size(self) -> int:
        return self.entries.shape[0]

    def restrict(self, indices: Sequence[int]) -> CouplingMatrix:
        idx = np.asarray(list(indices), dtype=int)
        return CouplingMatrix(self.entries[np.ix_(idx, idx)])

    def __len__(self) -> int:
        return self.truncation_size


@dataclass(frozen=True)
class BilinearSystem:
    """Galerkin truncation of a form bilinear control system ``(H0, h1, r)``.

    ``levels`` are the physical labels of the basis vectors (1..m unless the
    system was restricted); ``model`` records the generator that produced the
    system, if any.
    """

    spectrum: Spectrum
    coupling: CouplingMatrix
    r: float
    relative_bound_a: float = 0.0
    relative_bound_b: float = 0.0
    levels: tuple[int, ...] = ()
    model: object = field(default=None, compare=False)

    def __post_init__(self):
        if not isinstance(self.spectrum, Spectrum):
            object.__setattr__(self, "spectrum", Spectrum(self.spectrum))
        if not isinstance(self.coupling, CouplingMatrix):
            object.__setattr__(self, "coupling", CouplingMatrix(self.coupling))
        m = self.spectrum.size
        if self.coupling.truncation_size != m:
            raise ValueError(
                f"spectrum has {m} levels but coupling is {self.coupling.truncation_size}x{self.coupling.truncation_size}"
            )
        if not self.r > 0:
            raise ValueError("r must be positive")
        if self.relative_bound_a < 0 or self.relative_bound_b < 0:
            raise ValueError("relative bounds must be nonnegative")
        if self.r * self.relative_bound_a >= 1:
            raise ValueError(f"r must lie in (0,1/a): r*a = {self.r * self.relative_bound_a:g} >= 1")
        levels = tuple(int(k) for k in self.levels) if self.levels else tuple(range(1, m + 1))
        if len(levels) != m:
            raise ValueError("levels must label every basis vector")
        object.__setattr__(self, "levels", levels)

    @property
    def size(self) -> int:
        return self.spectrum.size

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum.values

    @property
    def matrix(self) -> np.ndarray:
        return self.coupling.entries

    def hamiltonian(self, u: float) -> np.ndarray:
        return np.diag(self.spectrum.values).astype(complex) + u * self.coupling.entries

    def restrict(self, indices: Iterable[int]) -> BilinearSystem:
        idx = sorted(int(i) for i in indices)
        return BilinearSystem(
            self.spectrum.restrict(idx),
            self.coupling.restrict(idx),
            self.r,
            self.relative_bound_a,
            self.relative_bound_b,
            tuple(self.levels[i] for i in idx),
            self.model,
        )

    def truncate(self, m: int) -> BilinearSystem:
        if not 1 <= m <= self.size:
            raise ValueError(f"cannot truncate {self.size} levels to {m}")
        return self.restrict(range(m))

    def with_ceiling(self, r: float) -> BilinearSystem:
        return BilinearSystem(
            self.spectrum, self.coupling, r, self.relative_bound_a, self.relative_bound_b, self.levels, self.model
        )


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise-constant control: consecutive ``(duration, amplitude)`` segments."""

    durations: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.durations, dtype=float).reshape(-1)
        a = np.asarray(self.amplitudes, dtype=float).reshape(-1)
        if d.shape != a.shape:
            raise ValueError("durations and amplitudes differ in length")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(a))):
            raise ValueError("schedule contains non-finite values")
        if np.any(d <= 0):
            raise ValueError("every segment duration must be positive")
        if np.any(a < 0):
            raise ValueError("control amplitudes must be nonnegative")
        object.__setattr__(self, "durations", _frozen(d))
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def from_segments(cls, segments: Iterable[tuple[float, float]]) -> ControlSchedule:
        segments = list(segments)
        if not segments:
            return cls.empty()
        d, a = zip(*segments)
        return cls(np.array(d, dtype=float), np.array(a, dtype=float))

    @classmethod
    def empty(cls) -> ControlSchedule:
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def concatenate(cls, parts: Iterable[ControlSchedule]) -> ControlSchedule:
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.durations for p in parts]),
            np.concatenate([p.amplitudes for p in parts]),
        )

    def __add__(self, other: ControlSchedule) -> ControlSchedule:
        return ControlSchedule.concatenate([self, other])

    def __len__(self) -> int:
        return self.durations.size

    @property
    def segments(self) -> list[tuple[float, float]]:
        return list(zip(self.durations.tolist(), self.amplitudes.tolist()))

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    @property
    def start_times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)[:-1]]) if len(self) else np.zeros(0)

    @property
    def max_amplitude(self) -> float:
        return float(self.amplitudes.max()) if len(self) else 0.0

    def shifted(self, offset: float) -> ControlSchedule:
        """Same segments with ``offset`` added to every amplitude."""
        return ControlSchedule(self.durations, self.amplitudes + offset)

    def check_ceiling(self, r: float) -> None:
        if len(self) and self.max_amplitude >= r:
            raise ValueError(f"amplitude {self.max_amplitude:g} violates the ceiling r={r:g}")


@dataclass(frozen=True)
class StateVector:
    """Coordinates of a state in the drift eigenbasis."""

    coefficients: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValueError("state contains non-finite coefficients")
        if self.normalized and abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise ValueError(f"state flagged normalized has norm {np.linalg.norm(c):.15g}")
        object.__setattr__(self, "coefficients", _frozen(c))

    @classmethod
    def basis(cls, m: int, k: int) -> StateVector:
        c = np.zeros(m, dtype=complex)
        c[k] = 1.0
        return cls(c, normalized=True)

    @classmethod
    def unit(cls, values) -> StateVector:
        c = np.asarray(values, dtype=complex)
        n = np.linalg.norm(c)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(c / n, normalized=True)

    def __len__(self) -> int:
        return self.coefficients.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


def norm_scale(v, spectrum: Spectrum, sign: str | int = "+") -> float:
    """Hilbert-scale norm ``||(H0+1)^{+-1/2} v||`` on the truncation."""
    c = coefficients(v)
    if c.size != spectrum.size:
        raise ValueError(f"state has {c.size} coefficients, spectrum {spectrum.size} levels")
    if sign in ("+", 1, +1):
        power = 1.0
    elif sign in ("-", -1):
        power = -1.0
    else:
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    w = spectrum.weights()
    return float(np.sqrt(np.sum(w**power * np.abs(c) ** 2)))


def op_norm_pm(A, spectrum: Spectrum) -> float:
    """Operator norm from the ``+`` to the ``-`` scale: ``sigma_max(D^-1/2 A D^-1/2)``."""
    A = np.asarray(A.entries if isinstance(A, CouplingMatrix) else A, dtype=complex)
    if A.shape != (spectrum.size, spectrum.size):
        raise ValueError(f"matrix shape {A.shape} does not match {spectrum.size} levels")
    if A.size == 0:
        return 0.0
    s = 1.0 / np.sqrt(spectrum.weights())
    return float(np.linalg.norm(s[:, None] * A * s[None, :], 2))


def l1_norm(schedule: ControlSchedule) -> float:
    return float(np.sum(schedule.durations * np.abs(schedule.amplitudes)))
