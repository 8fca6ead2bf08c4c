"""Control synthesis and verification for truncated bilinear Schrödinger systems."""

from .approximation import ApproximatingFamily, connectivity_repair, finite_rank_truncation, uniform_bounds
from .compiler import compile_plan, compile_rotation, free_evolution_segment
from .core import (
    BilinearSystem,
    ControlSchedule,
    CouplingMatrix,
    Spectrum,
    StateVector,
    l1_norm,
    norm_scale,
    op_norm_pm,
)
from .graph import build_graph, check_nonresonance, is_connected, spanning_tree
from .models import (
    DeltaBoxModel,
    delta_box_system,
    even_subspace,
    lift_resonances,
    perturbation_coefficients,
    perturbed_spectrum,
    user_matrix_model,
)
from .pipeline import ExperimentSettings, run_controllability_experiment, truncate_targets
from .planner import plan_transfer, rotation_matrix, transfer_to_basis, zero_component
from .propagator import evolve, fidelity, propagator, stability_gap

__version__ = "0.1.0"
