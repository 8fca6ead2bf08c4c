import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from galerkin_control.compiler import (
    BudgetCertificate,
    alias_free_samples,
    alias_images,
    compile_plan,
    compile_rotation,
    coupled_gaps,
    design_pulse,
    frame_phases,
    free_evolution_segment,
    l1_budget,
    schedule_from_csv,
    schedule_to_csv,
    schedule_to_json,
)
from galerkin_control.core import BilinearSystem, ControlSchedule, Spectrum, l1_norm
from galerkin_control.models import DeltaBoxModel, delta_box_system, even_subspace
from galerkin_control.planner import Rotation, plan_transfer
from galerkin_control.propagator import evolve


def two_level(gap=10.0, b=1.0, r=1.0):
    B = np.array([[0, b], [np.conj(b), 0]], dtype=complex)
    return BilinearSystem(Spectrum([0.0, gap]), B, r=r)


def rot(i, j, theta, angle, b=1.0):
    return Rotation.build(i, j, theta, angle, 0.5, b)


def pilot_error(system, rotation, u0, samples, psi0):
    """Distance between the simulated pulse and the frame-corrected pilot rotation."""
    sched = compile_rotation(rotation, system, u0, samples)
    out = evolve(system, sched, psi0).final_state.coefficients
    ref = np.exp(-1j * frame_phases(system, sched)) * (rotation.matrix(system.size) @ psi0)
    return np.linalg.norm(out - ref), out


def test_pulse_duration_and_l1_example():
    sys_ = two_level(b=2.0)
    r_ = rot(0, 1, 0.3, math.pi / 2, b=2.0)
    pulse = design_pulse(r_, sys_, 0.1)
    assert pulse.pulse_duration == pytest.approx(10 * math.pi, rel=1e-15)
    sched = pulse.schedule()
    assert sched.total_duration == pytest.approx(10 * math.pi, rel=1e-12)
    assert l1_norm(sched) == pytest.approx(math.pi / 2, rel=0.01)


def test_vanishing_angle_gives_empty_schedule():
    sched = compile_rotation(rot(0, 1, 0.0, 1e-16), two_level(), 0.05)
    assert len(sched) == 0 and l1_norm(sched) == 0.0


def test_two_level_pulse_matches_pilot_rotation():
    sys_ = two_level()
    psi0 = np.array([0.6, 0.8j])
    for theta in (0.0, 1.0, 2.5, -2.0):
        err, out = pilot_error(sys_, rot(0, 1, theta, 0.7 * math.pi / 2), 0.05, 32, psi0)
        ref = np.exp(-1j * frame_phases(sys_, compile_rotation(rot(0, 1, theta, 0.7 * math.pi / 2), sys_, 0.05)))
        ref = ref * (rot(0, 1, theta, 0.7 * math.pi / 2).matrix(2) @ psi0)
        assert 1 - abs(np.vdot(ref, out)) ** 2 < 0.01
        assert err < 0.05


def test_pulse_realizes_population_transfer():
    # full pi/2 turn: all population moves from the ground level
    sys_ = two_level()
    sched = compile_rotation(rot(0, 1, 0.4, math.pi / 2), sys_, 0.05)
    out = evolve(sys_, sched, [1, 0]).final_state.coefficients
    assert abs(out[1]) ** 2 > 0.99


def test_complex_coupling_phase_is_absorbed():
    b = 1.5 * np.exp(0.9j)
    sys_ = two_level(b=b)
    psi0 = np.array([0.8, 0.6])
    err, _ = pilot_error(sys_, rot(0, 1, 0.7, 1.0, b=abs(b)), 0.05, 32, psi0)
    assert err < 0.05


def test_reverse_pair_orientation():
    # rotation written on (1, 0): the carrier phase branch for negative detuning
    sys_ = two_level()
    psi0 = np.array([0.6, 0.8j])
    err, _ = pilot_error(sys_, rot(1, 0, 1.3, 0.9), 0.05, 32, psi0)
    assert err < 0.05


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.3, math.pi / 2),
    st.floats(-math.pi, math.pi),
    st.floats(0.02, 0.1),
    st.floats(0.5, 2.0),
    st.integers(8, 64),
)
def test_pulse_amplitudes_and_l1(angle, theta, u0, b, samples):
    sys_ = two_level(gap=40.0, b=b)
    sched = compile_rotation(rot(0, 1, theta, angle, b), sys_, u0, samples)
    assert np.all(sched.amplitudes >= 0) and sched.max_amplitude <= u0 < sys_.r
    assert l1_norm(sched) == pytest.approx(2 * angle / b, rel=0.01)


def test_amplitude_halving_refinement():
    sys_ = two_level()
    psi0 = np.array([0.6, 0.8j])
    r_ = rot(0, 1, 1.0, 0.7 * math.pi / 2)
    durations, l1s, errors = [], [], []
    for u0 in (0.2, 0.1, 0.05):
        pulse = design_pulse(r_, sys_, u0, 64)
        sched = pulse.schedule()
        durations.append(pulse.pulse_duration)
        l1s.append(l1_norm(sched))
        errors.append(pilot_error(sys_, r_, u0, 64, psi0)[0])
    assert durations[1] == pytest.approx(2 * durations[0], rel=1e-14)
    assert durations[2] == pytest.approx(2 * durations[1], rel=1e-14)
    assert max(l1s) / min(l1s) - 1 < 0.01
    assert errors[0] > errors[1] > errors[2]


def test_sampling_refinement_is_second_order():
    sys_ = two_level()
    psi0 = np.array([0.6, 0.8j])
    r_ = rot(0, 1, 0.5, 0.7 * math.pi / 2)
    states = [pilot_error(sys_, r_, 0.05, n, psi0)[1] for n in (8, 16, 32, 64)]
    diffs = [np.linalg.norm(a - b) for a, b in zip(states, states[1:])]
    for coarse, fine in zip(diffs, diffs[1:]):
        assert 3 <= coarse / fine <= 5


def test_compile_rotation_errors():
    with pytest.raises(ValueError, match="degenerate"):
        compile_rotation(rot(0, 1, 0.0, 0.5), two_level(gap=0.0), 0.05)
    with pytest.raises(ValueError, match="u0"):
        compile_rotation(rot(0, 1, 0.0, 0.5), two_level(r=0.5), 0.5)
    B = np.diag([1.0, 2.0])
    with pytest.raises(ValueError, match="uncoupled"):
        compile_rotation(rot(0, 1, 0.0, 0.5), BilinearSystem(Spectrum([0.0, 1.0]), B, r=1.0), 0.05)
    with pytest.raises(ValueError, match="samples"):
        compile_rotation(rot(0, 1, 0.0, 0.5), two_level(), 0.05, 4)


def test_free_evolution_segment():
    assert free_evolution_segment(1 / math.pi).segments == [(1 / math.pi, 0.0)]
    assert len(free_evolution_segment(0.0)) == 0
    assert l1_norm(free_evolution_segment(3.0)) == 0.0
    with pytest.raises(ValueError, match="nonnegative"):
        free_evolution_segment(-1.0)


def test_frame_phases_of_free_drift():
    sys_ = two_level()
    assert frame_phases(sys_, free_evolution_segment(0.3)).tolist() == pytest.approx([0.0, 3.0])


def test_compile_empty_plan():
    sys_ = two_level()
    plan = plan_transfer([1, 0], [1, 0], sys_, 0)
    compiled = compile_plan(plan, sys_, 0.05)
    assert len(compiled.schedule) == 0 and l1_norm(compiled.schedule) == 0.0
    assert compiled.certificate.ok


def test_compile_two_level_round_trip_budget():
    sys_ = BilinearSystem(Spectrum([1.0, 11.0]), np.array([[0, 2], [2, 0]], dtype=complex), r=1.0)
    plan = plan_transfer([0, 1], [0, 1j], sys_, 0)
    assert len(plan.rotations) == 1 and len(plan.reverse_rotations) == 1
    compiled = compile_plan(plan, sys_, 0.1)
    assert l1_norm(compiled.schedule) == pytest.approx(math.pi, rel=0.01)
    # 5 (m-1) pi / (2 min|b|) with m = 2, |b| = 2
    assert compiled.certificate.budget == pytest.approx(5 * math.pi / 4, rel=1e-15)
    assert compiled.certificate.ok
    assert compiled.effective_nu == pytest.approx(0.5, rel=0.01)
    # the free gap sits between the pulses at zero amplitude
    gap = plan.free_evolution_duration
    if gap > 0:
        assert (gap, 0.0) in compiled.schedule.segments


def test_compile_delta_box_budget():
    even = even_subspace(delta_box_system(DeltaBoxModel(eta=0.0018258706362741886, truncation=8)))
    s = 1 / math.sqrt(2)
    plan = plan_transfer([1, 0, 0, 0], [s, s, 0, 0], even, 0)
    compiled = compile_plan(plan, even, 0.05)
    # lifted couplings sit within 1e-3 of the unperturbed value 2
    assert compiled.certificate.budget == pytest.approx(15 * math.pi / 4, rel=1e-3)
    assert l1_norm(compiled.schedule) <= 15 * math.pi / 4
    assert compiled.certificate.to_json()["ok"] is True
    assert compiled.schedule.max_amplitude < even.r


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_l1_certificate_on_random_plans(m, seed):
    rng = np.random.default_rng(seed)
    lam = np.cumsum(rng.uniform(3.0, 9.0, size=m))
    B = np.zeros((m, m), dtype=complex)
    for a in range(m):
        for b in range(a + 1, m):
            B[a, b] = rng.uniform(0.5, 3.0) * np.exp(1j * rng.uniform(0, 2 * math.pi))
            B[b, a] = np.conj(B[a, b])
    sys_ = BilinearSystem(Spectrum(lam), B, r=1.0)
    psi0 = rng.normal(size=m) + 1j * rng.normal(size=m)
    psi1 = rng.normal(size=m) + 1j * rng.normal(size=m)
    plan = plan_transfer(psi0 / np.linalg.norm(psi0), psi1 / np.linalg.norm(psi1), sys_, 0)
    compiled = compile_plan(plan, sys_, 0.1, 8)
    min_b = np.min(np.abs(B[np.triu_indices(m, 1)]))
    assert l1_norm(compiled.schedule) <= 2 * (m - 1) * math.pi / min_b * 1.01
    assert 2 * (m - 1) * math.pi / min_b <= l1_budget(m, min_b)


def test_multi_rotation_plan_tracks_frame_on_lifted_box():
    eta = 0.0018258706362741886
    sys12 = even_subspace(delta_box_system(DeltaBoxModel(eta=eta, truncation=24)))
    sys24 = even_subspace(delta_box_system(DeltaBoxModel(eta=eta, truncation=48)))
    s4 = sys12.truncate(4)
    rng = np.random.default_rng(0)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    w = rng.normal(size=4) + 1j * rng.normal(size=4)
    v, w = v / np.linalg.norm(v), w / np.linalg.norm(w)
    # root at level 3: every tree transition is spectrally isolated
    plan = plan_transfer(v, w, s4, 1)
    compiled = compile_plan(plan, s4, 0.05, guard=sys24)
    y = np.zeros(12, dtype=complex)
    y[:4] = v
    out = evolve(sys12, compiled.schedule, y).final_state.coefficients
    expected = np.exp(-1j * compiled.frame_phases) * (plan.pilot_map(s4.eigenvalues) @ v)
    assert np.linalg.norm(out[:4] - expected) < 0.02
    assert np.linalg.norm(out[4:]) < 0.03


def test_alias_images_and_guard():
    assert alias_images(2.0, 8, 2).tolist() == [14.0, 30.0, 18.0, 34.0]
    omega = 16 * math.pi**2
    hit = (23**2 - 1) * math.pi**2  # the 33rd image at n = 32
    assert np.min(np.abs(alias_images(omega, 32) - hit)) < 1e-9
    n = alias_free_samples(omega, 32, [hit], 1.0)
    assert n > 32
    assert np.min(np.abs(alias_images(omega, n) - hit)) > 1.0
    assert alias_free_samples(omega, 32, [], 1.0) == 32
    # nothing clears a band covering every image: keep the request
    assert alias_free_samples(1.0, 8, np.arange(0, 200.0, 0.5), 1.0) == 8


def test_coupled_gaps_skip_uncoupled_pairs():
    full = delta_box_system(DeltaBoxModel(truncation=4))
    assert coupled_gaps(full) / math.pi**2 == pytest.approx([8.0])
    even = even_subspace(delta_box_system(DeltaBoxModel(truncation=8)))
    assert coupled_gaps(even) / math.pi**2 == pytest.approx([8, 16, 24, 24, 40, 48])


def test_guarded_pulse_records_raised_sample_count():
    even = even_subspace(delta_box_system(DeltaBoxModel(truncation=48)))
    s4 = even.truncate(4)
    pulse = design_pulse(rot(1, 2, 0.0, 1.0, 2.0), s4, 0.05, 32, guard_gaps=coupled_gaps(even))
    assert pulse.samples_per_period > 32
    assert pulse.to_json()["samples_per_period"] == pulse.samples_per_period


def test_schedule_csv_and_json_roundtrip():
    sched = compile_rotation(rot(0, 1, 0.2, 0.4), two_level(), 0.1, 8)
    text = schedule_to_csv(sched)
    assert text.splitlines()[0] == "t_start,duration,amplitude"
    back = schedule_from_csv(text)
    assert np.array_equal(back.durations, sched.durations)
    assert np.array_equal(back.amplitudes, sched.amplitudes)
    data = schedule_to_json(sched)
    assert data["l1_norm"] == l1_norm(sched) and len(data["durations"]) == len(sched)


def test_budget_certificate_json():
    cert = BudgetCertificate(1.0, l1_budget(3, 2.0), 3, 2.0)
    assert cert.budget == pytest.approx(5 * math.pi / 2)
    assert cert.to_json()["ok"] is True
    assert l1_budget(1, 2.0) == 0.0
    assert not BudgetCertificate(10.0, 1.0, 2, 1.0).ok
    assert isinstance(ControlSchedule.empty(), ControlSchedule)
