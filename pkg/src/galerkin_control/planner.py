"""Pilot trajectories on C^m built from planar pair rotations.

A rotation on the pair ``(i, j)`` with phase ``theta`` and angle ``t`` is
``exp(t T)`` with ``T = e^{i theta} E_ij - e^{-i theta} E_ji``. It fixes
every other coordinate and acts on the pair as

    e_i -> cos(t) e_i - e^{-i theta} sin(t) e_j
    e_j -> cos(t) e_j + e^{i theta} sin(t) e_i

The pilot system runs such a rotation at rate ``nu * |b_ij|``, so a rotation
by ``t`` costs ``t / (nu |b_ij|)`` pilot time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ZERO_TOLERANCE, BilinearSystem, coefficients
from .graph import SpanningTree, build_graph, spanning_tree

TWO_PI = 2.0 * math.pi
DEFAULT_NU = 0.5


def _wrap(angle: float) -> float:
    a = math.fmod(angle, TWO_PI)
    if a < 0:
        a += TWO_PI
    return 0.0 if a >= TWO_PI else a


@dataclass(frozen=True)
class Rotation:
    i: int
    j: int
    theta: float
    angle: float
    sigma_duration: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("rotation needs two distinct indices")
        if not 0 < self.angle <= math.pi / 2 + 1e-15:
            raise ValueError(f"rotation angle {self.angle} outside (0, pi/2]")
        if self.sigma_duration <= 0:
            raise ValueError("pilot duration must be positive")
        object.__setattr__(self, "theta", _wrap(self.theta))

    @classmethod
    def build(cls, i: int, j: int, theta: float, angle: float, nu: float, coupling: float) -> Rotation:
        rate = nu * abs(coupling)
        if rate <= 0:
            raise ValueError("pilot rate nu*|b_ij| must be positive")
        return cls(int(i), int(j), theta, angle, angle / rate)

    @property
    def rate(self) -> float:
        return self.angle / self.sigma_duration

    def inverse(self) -> Rotation:
        # exp(-t T^theta) = exp(t T^(theta + pi))
        return Rotation(self.i, self.j, self.theta + math.pi, self.angle, self.sigma_duration)

    def shifted(self, dtheta: float) -> Rotation:
        return Rotation(self.i, self.j, self.theta + dtheta, self.angle, self.sigma_duration)

    def matrix(self, m: int) -> np.ndarray:
        return pair_rotation(m, self.i, self.j, self.theta, self.angle)

    def to_json(self) -> dict:
        return {
            "i": self.i,
            "j": self.j,
            "theta": self.theta,
            "angle": self.angle,
            "sigma_duration": self.sigma_duration,
        }


def generator(m: int, i: int, j: int, theta: float) -> np.ndarray:
    """The skew-Hermitian pair generator ``T_ij^theta``."""
    T = np.zeros((m, m), dtype=complex)
    T[i, j] = np.exp(1j * theta)
    T[j, i] = -np.exp(-1j * theta)
    return T


def pair_rotation(m: int, i: int, j: int, theta: float, t: float) -> np.ndarray:
    if i == j:
        raise ValueError("rotation needs two distinct indices")
    if not (0 <= i < m and 0 <= j < m):
        raise ValueError(f"indices ({i}, {j}) out of range for m={m}")
    R = np.eye(m, dtype=complex)
    c, s = math.cos(t), math.sin(t)
    R[i, i] = c
    R[j, j] = c
    R[j, i] = -np.exp(-1j * theta) * s
    R[i, j] = np.exp(1j * theta) * s
    return R


def rotation_matrix(rot: Rotation, m: int) -> np.ndarray:
    return pair_rotation(m, rot.i, rot.j, rot.theta, rot.angle)


def apply_rotation(psi: np.ndarray, i: int, j: int, theta: float, t: float) -> np.ndarray:
    out = np.array(psi, dtype=complex, copy=True)
    c, s = math.cos(t), math.sin(t)
    pi_, pj = psi[i], psi[j]
    out[i] = pi_ * c + np.exp(1j * theta) * pj * s
    out[j] = pj * c - np.exp(-1j * theta) * pi_ * s
    return out


def zero_component(psi, i: int, j: int, variant: str = "first") -> tuple[float, float]:
    """Phase and angle of the ``(i, j)`` rotation that annihilates one component.

    ``variant="first"`` zeroes component ``i``, ``"second"`` zeroes ``j``.
    Returns ``(0.0, 0.0)`` when the component is already zero, which callers
    treat as "skip".
    """
    if variant not in ("first", "second"):
        raise ValueError(f"unknown variant {variant!r}")
    c = coefficients(psi)
    a, b = (c[i], c[j]) if variant == "first" else (c[j], c[i])
    if abs(a) == 0:
        return 0.0, 0.0
    if abs(b) == 0:
        return 0.0, math.pi / 2
    t = math.atan2(abs(a), abs(b))
    if variant == "first":
        # psi_i(t) = e^{i arg psi_i} (|psi_i| cos t - |psi_j| sin t)
        theta = np.angle(c[i]) - np.angle(-c[j])
    else:
        # psi_j(t) = e^{i arg psi_j} (|psi_j| cos t - |psi_i| sin t)
        theta = np.angle(c[i]) - np.angle(c[j])
    return _wrap(float(theta)), t


def transfer_to_basis(
    psi,
    tree: SpanningTree,
    B,
    nu: float = DEFAULT_NU,
    zero_tolerance: float = ZERO_TOLERANCE,
) -> tuple[list[Rotation], float]:
    """Greedy deepest-first transfer of ``psi`` onto ``e^{i phi} e_root``.

    At each step the deepest non-root component with modulus above
    ``zero_tolerance`` is rotated into its parent (equal depths: largest
    index first). Returns the rotations in application order and ``phi``.
    """
    B = np.asarray(getattr(B, "entries", B))
    x = np.array(coefficients(psi), dtype=complex)
    n = np.linalg.norm(x)
    if n == 0:
        raise ValueError("cannot transfer the zero vector")
    if abs(n - 1.0) > 1e-10:
        x = x / n
    m = x.size
    outside = [v for v in range(m) if v not in tree.depth and abs(x[v]) > zero_tolerance]
    if outside:
        raise ValueError(f"state has support on vertices {outside} outside the spanning tree")

    rotations: list[Rotation] = []
    while True:
        live = [v for v in tree.parent if abs(x[v]) > zero_tolerance]
        if not live:
            break
        v = max(live, key=lambda w: (tree.depth[w], w))
        p = tree.parent[v]
        if abs(B[v, p]) <= zero_tolerance:
            raise ValueError(f"tree edge ({v}, {p}) has zero coupling")
        theta, t = zero_component(x, v, p)
        x = apply_rotation(x, v, p, theta, t)
        x[v] = 0.0
        rotations.append(Rotation.build(v, p, theta, t, nu, B[v, p]))
    phi = _wrap(float(np.angle(x[tree.root])))
    return rotations, phi


def apply_rotations(rotations, psi) -> np.ndarray:
    x = np.array(coefficients(psi), dtype=complex)
    for rot in rotations:
        x = apply_rotation(x, rot.i, rot.j, rot.theta, rot.angle)
    return x


def rotations_matrix(rotations, m: int) -> np.ndarray:
    M = np.eye(m, dtype=complex)
    for rot in rotations:
        M = rotation_matrix(rot, m) @ M
    return M


@dataclass(frozen=True)
class PilotPlan:
    """Three-phase pilot transfer: forward drive, free evolution, reverse drive.

    ``final_phase`` is the phase of the target basis vector reached by the
    forward drive and ``reverse_phase`` the phase the reverse drive starts
    from. Free evolution over ``free_evolution_duration`` multiplies
    component ``k`` by ``exp(-i lambda_k tau)``.
    """

    rotations: tuple
    target_vertex: int
    final_phase: float
    free_evolution_duration: float
    reverse_rotations: tuple
    reverse_phase: float = 0.0
    dimension: int = 0
    nu: float = DEFAULT_NU
    min_coupling: float = field(default=math.inf)

    def __post_init__(self):
        if self.free_evolution_duration < 0:
            raise ValueError("free evolution duration must be nonnegative")

    @property
    def sigma_time(self) -> float:
        return sum(r.sigma_duration for r in self.rotations)

    @property
    def reverse_sigma_time(self) -> float:
        return sum(r.sigma_duration for r in self.reverse_rotations)

    @property
    def time_bound(self) -> float:
        """Per-direction pilot time ceiling ``(m-1) pi / (2 nu min|b|)``."""
        if self.dimension <= 1 or not math.isfinite(self.min_coupling):
            return 0.0
        return (self.dimension - 1) * math.pi / (2 * self.nu * self.min_coupling)

    def pilot_map(self, eigenvalues) -> np.ndarray:
        lam = np.asarray(eigenvalues, dtype=float)
        m = self.dimension
        free = np.diag(np.exp(-1j * lam[:m] * self.free_evolution_duration))
        return rotations_matrix(self.reverse_rotations, m) @ free @ rotations_matrix(self.rotations, m)

    def to_json(self) -> dict:
        return {
            "dimension": self.dimension,
            "target_vertex": self.target_vertex,
            "nu": self.nu,
            "final_phase": self.final_phase,
            "reverse_phase": self.reverse_phase,
            "free_evolution_duration": self.free_evolution_duration,
            "rotations": [r.to_json() for r in self.rotations],
            "reverse_rotations": [r.to_json() for r in self.reverse_rotations],
        }


def plan_transfer(psi0, psi1, system: BilinearSystem, k: int, nu: float = DEFAULT_NU) -> PilotPlan:
    """Pilot plan steering ``psi0`` to ``psi1`` through ``e^{i phi} e_k``."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    x0 = np.asarray(coefficients(psi0), dtype=complex)
    x1 = np.asarray(coefficients(psi1), dtype=complex)
    m = system.size
    if x0.size != m or x1.size != m:
        raise ValueError("state dimensions must match the system")
    for name, x in (("psi0", x0), ("psi1", x1)):
        if abs(np.linalg.norm(x) - 1.0) > 1e-10:
            raise ValueError(f"{name} must be normalized")
    graph = build_graph(system.coupling)
    tree = spanning_tree(graph, k)
    B = system.coupling.entries

    forward, phi = transfer_to_basis(x0, tree, B, nu)
    backward, phi_rev = transfer_to_basis(x1, tree, B, nu)

    lam_k = float(system.eigenvalues[k])
    delta = _wrap(phi - phi_rev)
    if delta > TWO_PI - 1e-12:
        delta = 0.0
    if abs(lam_k) < 1e-15:
        if delta > 1e-12:
            raise ValueError(
                "phase unreachable by free evolution at this vertex; choose k with lambda_k != 0"
            )
        tau = 0.0
    else:
        # free evolution exp(-i lambda_k tau) must carry phi to phi_rev
        tau = delta / lam_k if lam_k > 0 else (TWO_PI - delta) % TWO_PI / -lam_k
    reverse = tuple(r.inverse() for r in reversed(backward))
    min_b = min(graph.weights.values()) if graph.weights else math.inf
    return PilotPlan(tuple(forward), k, phi, tau, reverse, phi_rev, m, nu, min_b)
