"""Block decomposition, one-step fidelity bound, drag planner, time accounting."""

import numpy as np
import pytest

from zenodrag.bounds import (
    block_decompose,
    corollary_time,
    execute_plan,
    fidelity_bound,
    overlap_floor,
    plan_linear_drag,
    upsilon,
)
from zenodrag.dynamics import MeasurementConfig, averaged_channel
from zenodrag.operators import (
    ground_projector,
    groundspace_overlap,
    make_axis,
    projector_set,
    spectral_gap,
)
from zenodrag.sat import ring2sat, single_solution_ring


def random_density_matrix(d, rng):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# block decomposition


def test_block_reconstruction():
    rng = np.random.default_rng(1)
    inst = ring2sat(2)
    Pi0 = ground_projector(inst, make_axis(0.7, 2))
    for _ in range(20):
        rho = random_density_matrix(4, rng)
        dec = block_decompose(rho, Pi0)
        assert np.abs(dec.reconstruct() - rho).max() < 1e-12
        assert 0.0 <= dec.f <= 1.0
        # c lives strictly in the upper-left cross block
        assert np.abs(Pi0 @ dec.c_block - dec.c_block).max() < 1e-12
        assert np.abs(dec.c_block @ Pi0).max() < 1e-12
        # positivity budget
        assert dec.f * (1.0 - dec.f) >= dec.coherence_weight - 1e-9


def test_block_decompose_pure_superposition():
    # cos|psi0> + sin|perp>: f = cos^2, off-block norm = |cos sin|
    inst = single_solution_ring(2)
    axis = make_axis(0.9, 2)
    Pi0 = ground_projector(inst, axis)
    vals, vecs = np.linalg.eigh(Pi0)
    psi0 = vecs[:, np.argmax(vals)]
    perp = vecs[:, np.argmin(vals)]
    phi = 0.4
    psi = np.cos(phi) * psi0 + np.sin(phi) * perp
    dec = block_decompose(np.outer(psi, psi.conj()), Pi0)
    assert np.isclose(dec.f, np.cos(phi) ** 2, atol=1e-12)
    assert np.isclose(dec.gamma, abs(np.cos(phi) * np.sin(phi)), atol=1e-12)


def test_block_decompose_block_diagonal_has_no_coherence():
    inst = ring2sat(2)
    Pi0 = ground_projector(inst, make_axis(0.5, 2))
    Q = np.eye(4) - Pi0
    rho = 0.5 * Pi0 / np.trace(Pi0).real + 0.5 * Q / np.trace(Q).real
    dec = block_decompose(rho, Pi0)
    assert dec.gamma < 1e-12
    assert dec.coherence_weight < 1e-12


def test_block_decompose_rejects_impossible_coherence():
    inst = single_solution_ring(2)
    Pi0 = ground_projector(inst, make_axis(0.8, 2))
    Q = np.eye(4) - Pi0
    fake = Q / np.trace(Q).real + 0.1 * (Pi0 @ np.ones((4, 4)) @ Q)
    fake = fake + fake.conj().T - Q / np.trace(Q).real  # f ~ 0, off-block nonzero
    with pytest.raises(ValueError):
        block_decompose(fake, Pi0)


def test_coherence_weight_contraction():
    # the gap-controlled decay that makes dragging work
    rng = np.random.default_rng(8)
    cfg = MeasurementConfig(dt=0.3)
    for inst in (ring2sat(2), single_solution_ring(3)):
        n = inst.n_vars
        for _ in range(25):
            theta = rng.uniform(0.2, np.pi / 2)
            axis = make_axis(theta, n)
            pset = projector_set(inst, axis)
            Pi0 = ground_projector(inst, axis)
            G = spectral_gap(inst, axis)
            rho = random_density_matrix(1 << n, rng)
            before = block_decompose(rho, Pi0)
            after = block_decompose(averaged_channel(rho, pset, cfg), Pi0)
            # groundspace block frozen, fidelity conserved
            assert np.isclose(after.f, before.f, atol=1e-12)
            assert np.abs(after.f * after.rho0_block - before.f * before.rho0_block).max() < 1e-12
            factor = (1.0 - cfg.beta * G) ** 2
            assert after.coherence_weight <= factor * before.coherence_weight + 1e-10


# ---------------------------------------------------------------------------
# fidelity bound


def test_fidelity_bound_formula_values():
    assert fidelity_bound(1.0, 0.9, 0.1, 1) == pytest.approx(0.9)
    # hand evaluation: f=0.9, delta=0.99, betaG=0.1, M=50
    a = 0.99 - 0.99**2
    want = 0.9 * 0.99 - 2.0 * 0.9**50 * np.sqrt(a * 0.9 * 0.1)
    assert fidelity_bound(0.9, 0.99, 0.1, 50) == pytest.approx(want, rel=1e-12)
    # small-delta branch switches a(delta) to 1/4
    want_small = 0.5 * 0.3 - 2.0 * 0.8 * np.sqrt(0.25 * 0.25)
    assert fidelity_bound(0.5, 0.3, 0.2, 1) == pytest.approx(want_small, rel=1e-12)
    with pytest.raises(ValueError):
        fidelity_bound(1.2, 0.5, 0.1, 1)
    with pytest.raises(ValueError):
        fidelity_bound(0.5, 0.5, 0.1, 0)


def test_fidelity_bound_never_violated_by_simulation():
    rng = np.random.default_rng(17)
    cfg = MeasurementConfig(dt=0.4)
    inst = single_solution_ring(2)
    n = inst.n_vars
    for _ in range(40):
        theta = rng.uniform(0.2, 1.3)
        dtheta = rng.uniform(0.01, 0.2)
        axis_a = make_axis(theta, n)
        axis_b = make_axis(theta + dtheta, n)
        pset = projector_set(inst, axis_a)
        Pi_a = ground_projector(inst, axis_a)
        Pi_b = ground_projector(inst, axis_b)
        G = spectral_gap(inst, axis_a)
        delta = groundspace_overlap(inst, axis_a, axis_b)
        rho = random_density_matrix(1 << n, rng)
        f = np.trace(Pi_a @ rho).real
        out = averaged_channel(rho, pset, cfg)
        f_next = np.trace(Pi_b @ out).real
        assert f_next >= fidelity_bound(f, delta, cfg.beta * G, 1) - 1e-9


def test_overlap_floor_matches_unique_solution_overlap():
    inst = single_solution_ring(2)
    got = groundspace_overlap(inst, make_axis(0.4, 2), make_axis(0.55, 2))
    assert np.isclose(got, overlap_floor(2, 0.15), atol=1e-12)


# ---------------------------------------------------------------------------
# planner


def test_plan_increment_count_formula():
    # the count formula itself, on a quarter-circle sweep: ceil(12.337) = 13
    assert int(np.ceil(2 * (np.pi / 2) ** 2 / (4 * 0.1))) == 13
    cfg = MeasurementConfig(dt=0.5)
    plan = plan_linear_drag(2, 0.05, np.pi / 2, 0.1, 0.1, cfg, gap_fn=lambda t: 0.3)
    phi = plan.theta_f - plan.theta_i
    assert plan.N == int(np.ceil(2 * phi**2 / 0.4))
    assert np.isclose(plan.N * plan.delta_theta, phi, atol=1e-12)
    assert np.all(plan.M_per_step >= 1)
    assert plan.total_applications == plan.M_per_step.sum()
    assert np.isclose(plan.total_time, plan.total_applications * 0.5)
    # constant gap: uniform pricing agrees with the per-step sum
    assert np.isclose(plan.total_time_uniform, plan.total_time)


def test_plan_m_clamped_when_no_mixing_needed():
    # eps2 near 1 with a short angle interval drives the numerator negative
    cfg = MeasurementConfig(dt=0.5)
    plan = plan_linear_drag(2, 0.3, 0.5, 0.1, 0.99, cfg, gap_fn=lambda t: 0.3)
    assert np.all(plan.M_per_step == 1)


def test_plan_rejects_closed_gap():
    cfg = MeasurementConfig(dt=0.5)
    with pytest.raises(ValueError, match="gap too small"):
        plan_linear_drag(2, 0.1, 1.0, 0.1, 0.1, cfg, gap_fn=lambda t: 0.0)
    with pytest.raises(ValueError):
        plan_linear_drag(2, 0.5, 0.3, 0.1, 0.1, cfg, gap_fn=lambda t: 0.3)
    with pytest.raises(ValueError):
        plan_linear_drag(2, 0.1, 1.0, 0.1, 0.1, MeasurementConfig(dt=0.0), lambda t: 0.3)


def test_plan_large_first_step():
    cfg = MeasurementConfig(dt=0.5)
    plan = plan_linear_drag(
        4, 0.05, 1.5, 0.02, 0.1, cfg, gap_fn=lambda t: 0.3, large_first_step=True
    )
    ref = plan_linear_drag(4, 0.05, 1.5, 0.02, 0.1, cfg, gap_fn=lambda t: 0.3)
    first_jump = plan.thetas[1] - plan.thetas[0]
    assert np.isclose(first_jump, np.sqrt(4 * 0.02 / 4), atol=1e-12)
    assert plan.N < ref.N
    assert not plan.uniform_increments
    # increments still tile the interval
    increments = np.diff(np.append(plan.thetas, plan.theta_f))
    assert np.isclose(increments.sum(), plan.theta_f - plan.theta_i, atol=1e-12)


def test_plan_execution_meets_guarantee():
    # sufficiency on the smallest single-solution ring at modest budgets
    inst = single_solution_ring(2)
    cfg = MeasurementConfig(dt=0.5)
    plan = plan_linear_drag(
        2, 0.05, np.pi / 2, 0.1, 0.1,
        cfg, gap_fn=lambda t: spectral_gap(inst, make_axis(t, 2)),
    )
    run = execute_plan(inst, plan)
    assert run.final_fidelity >= 1.0 - 0.1 - 0.1
    assert run.fidelities.shape == (plan.N,)


# ---------------------------------------------------------------------------
# time accounting


def test_upsilon_limit_and_values():
    assert upsilon(0.0, 1.0) == 2.0
    assert upsilon(0.0, 2.5) == 5.0
    dt = 2 * np.log(2)
    assert np.isclose(upsilon(dt, 1.0), dt / 0.5)
    assert np.isclose(upsilon(100.0, 1.0), 100.0, rtol=1e-6)


def test_upsilon_monotone():
    grid = np.linspace(0.0, 8.0, 100)
    vals = [upsilon(float(dt), 1.0) for dt in grid]
    assert np.all(np.diff(vals) > 0)


def test_corollary_time_slowdown_at_long_slices():
    cfg_fine = MeasurementConfig(dt=4.0, tau=1.0)
    plan = plan_linear_drag(2, 0.05, np.pi / 2, 0.05, 0.05, cfg_fine, lambda t: 0.05)
    T_long, ups_long = corollary_time(plan, cfg_fine)
    T_zero, ups_zero = corollary_time(plan, MeasurementConfig(dt=0.0, tau=1.0))
    assert ups_zero == 2.0
    assert T_long / T_zero >= 1.9
    # continuum pricing agrees with the upsilon form
    phi = plan.theta_f - plan.theta_i
    num = np.log(1 / 0.05) + 0.5 * np.log(2) + np.log(phi)
    assert np.isclose(T_zero, plan.N * num * 2.0 / plan.gap_min, rtol=1e-12)
