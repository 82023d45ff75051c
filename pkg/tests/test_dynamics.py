"""Kraus slices, the averaged channel, the master equation, and trajectories.

Oracles used here:
  * scalar Gaussian quadrature identities for the Kraus integrals,
  * dense Simpson quadrature in r for the matrix-valued channel integral,
  * matrix-exponential propagation of the vectorized generator,
  * Richardson extrapolation for the integrator order,
  * a Kolmogorov-Smirnov test against the two-Gaussian readout mixture.
"""

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.stats import kstest

from zenodrag.dynamics import (
    MeasurementConfig,
    Schedule,
    averaged_channel,
    ensemble_statistics,
    evolve_kraus_shot,
    evolve_lindblad,
    evolve_trajectory,
    kraus_operator,
    readout_mixture_cdf,
    sample_measurement,
    simulate_ensemble,
    symmetric_product_state,
)
from zenodrag.operators import (
    ground_projector,
    make_axis,
    projector_set,
    solution_basis_projector,
)
from zenodrag.sat import ring2sat, single_solution_ring
from zenodrag.seeding import substream


def random_density_matrix(d, rng):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def simpson_channel_integral(P, rho, config, n_points=4001, width=10.0):
    """Brute-force \\int M rho M^dag dr on a dense symmetric r-grid."""
    from scipy.integrate import simpson

    sigma = 1.0 / np.sqrt(config.dt)
    u = 1.0 / np.sqrt(config.tau)
    r = np.linspace(-u - width * sigma, u + width * sigma, n_points)
    vals = np.empty((n_points,) + rho.shape, dtype=complex)
    for i, ri in enumerate(r):
        M = kraus_operator(P, ri, config)
        vals[i] = M @ rho @ M.conj().T
    return simpson(vals, x=r, axis=0)


def lindblad_superoperator(pset, tau, share):
    """Vectorized generator (row-major flattening)."""
    d = pset.dim
    eye = np.eye(d)
    L = np.zeros((d * d, d * d), dtype=complex)
    for P in pset.projectors:
        L += np.kron(P, P.T) - 0.5 * (np.kron(P, eye) + np.kron(eye, P.T))
    return L / (share * tau)


# ---------------------------------------------------------------------------
# Kraus slice


def test_kraus_completeness_quadrature():
    # sum over outcomes resolves the identity; cross terms cancel since PQ = 0
    from scipy.integrate import simpson

    rng = np.random.default_rng(3)
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.05, tau=1.0)
    pset = projector_set(inst, make_axis(0.6, 2))
    P = pset.projectors[0]
    sigma = 1.0 / np.sqrt(config.dt)
    u = 1.0
    r = np.linspace(-u - 10 * sigma, u + 10 * sigma, 4001)
    acc = np.zeros((4, 4), dtype=complex)
    vals = np.empty((len(r), 4, 4), dtype=complex)
    for i, ri in enumerate(r):
        M = kraus_operator(P, ri, config)
        vals[i] = M.conj().T @ M
    acc = simpson(vals, x=r, axis=0)
    assert np.abs(acc - np.eye(4)).max() < 1e-10


def test_channel_matches_readout_average():
    rng = np.random.default_rng(7)
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.08, tau=1.0)
    pset = projector_set(inst, make_axis(0.9, 2))
    P = pset.projectors[1]
    rho = random_density_matrix(4, rng)
    quad = simpson_channel_integral(P, rho, config)
    # single-channel slice: keep diagonal blocks, damp coherences by 1 - beta
    Q = np.eye(4) - P
    beta = config.beta
    direct = rho - beta * (P @ rho @ Q + Q @ rho @ P)
    assert np.abs(quad - direct).max() < 1e-10
    # and the m-clause averaged map at share 1 is the same single-clause map
    one = MeasurementConfig(dt=0.08, tau=1.0, rate_share="parallel")
    pset1 = type(pset)(axis=pset.axis, projectors=P[None, :, :])
    assert np.abs(averaged_channel(rho, pset1, one) - direct).max() < 1e-12


def test_slice_composition_closure():
    # two slices of dt equal one slice of 2 dt, clause by clause
    rng = np.random.default_rng(11)
    inst = single_solution_ring(2)
    pset = projector_set(inst, make_axis(0.4, 2))
    pset1 = type(pset)(axis=pset.axis, projectors=pset.projectors[:1])
    rho = random_density_matrix(4, rng)
    cfg = MeasurementConfig(dt=0.3, tau=1.0, rate_share="parallel")
    cfg2 = MeasurementConfig(dt=0.6, tau=1.0, rate_share="parallel")
    twice = averaged_channel(averaged_channel(rho, pset1, cfg), pset1, cfg)
    once = averaged_channel(rho, pset1, cfg2)
    assert np.abs(twice - once).max() < 1e-13


def test_readout_distribution_ks():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.5, tau=1.0)
    pset = projector_set(inst, make_axis(0.7, 2))
    P = pset.projectors[0]
    rho = symmetric_product_state(2)
    weight = float(np.trace(P @ rho).real)
    rng = substream(123, 0)
    draws = np.array([sample_measurement(rho, P, config, rng)[0] for _ in range(4000)])
    stat = kstest(draws, lambda r: readout_mixture_cdf(r, weight, config))
    assert stat.pvalue > 1e-3


def test_sample_measurement_updates_state():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.2)
    P = projector_set(inst, make_axis(0.5, 2)).projectors[0]
    rng = substream(9, 0)
    rho = symmetric_product_state(2)
    r, post = sample_measurement(rho, P, config, rng)
    assert np.isclose(np.trace(post).real, 1.0, atol=1e-12)
    assert np.allclose(post, post.conj().T)
    assert np.linalg.eigvalsh(post).min() > -1e-12


def test_channel_conserves_groundspace_weight():
    rng = np.random.default_rng(21)
    inst = ring2sat(3)
    config = MeasurementConfig(dt=0.1)
    for theta in (0.3, 1.0, np.pi / 2):
        axis = make_axis(theta, 3)
        pset = projector_set(inst, axis)
        Pi0 = ground_projector(inst, axis)
        for _ in range(20):
            rho = random_density_matrix(8, rng)
            out = averaged_channel(rho, pset, config)
            before = np.trace(Pi0 @ rho).real
            after = np.trace(Pi0 @ out).real
            assert abs(after - before) < 1e-12


# ---------------------------------------------------------------------------
# master equation


def test_lindblad_matches_matrix_exponential_constant_axis():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.0)
    theta = 0.8
    T_f = 2.0
    schedule = Schedule.constant(theta, T_f)
    res = evolve_lindblad(inst, schedule, config, max_step=0.002)
    pset = projector_set(inst, make_axis(theta, 2))
    L = lindblad_superoperator(pset, config.tau, config.share(2))
    rho0 = symmetric_product_state(2)
    expected = (expm(T_f * L) @ rho0.reshape(-1)).reshape(4, 4)
    assert np.abs(res.final_state - expected).max() < 1e-9


def test_lindblad_matches_matrix_exponential_piecewise():
    inst = single_solution_ring(2)
    config = MeasurementConfig(dt=0.0)
    times = np.array([0.0, 0.7, 1.5])
    values = np.array([0.3, 1.1, 1.1])
    schedule = Schedule(times, values)
    res = evolve_lindblad(inst, schedule, config, max_step=0.002)
    rho = symmetric_product_state(2).reshape(-1)
    share = config.share(inst.n_clauses)
    for j, (t0, t1) in enumerate(((0.0, 0.7), (0.7, 1.5))):
        pset = projector_set(inst, make_axis(values[j], 2))
        L = lindblad_superoperator(pset, config.tau, share)
        rho = expm((t1 - t0) * L) @ rho
    assert np.abs(res.final_state - rho.reshape(4, 4)).max() < 1e-9


def test_lindblad_integrator_order():
    # Richardson: halving the step should shrink the error ~16x for RK4
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.0)
    schedule = Schedule.linear(1.0, n_points=5)
    coarse = evolve_lindblad(inst, schedule, config, max_step=0.05).final_state
    mid = evolve_lindblad(inst, schedule, config, max_step=0.025).final_state
    fine = evolve_lindblad(inst, schedule, config, max_step=0.0125).final_state
    e1 = np.abs(coarse - fine).max()
    e2 = np.abs(mid - fine).max()
    order = np.log2(e1 / e2)
    assert order > 3.5


def test_lindblad_fidelity_monotone_for_linear_drag():
    inst = ring2sat(3)
    config = MeasurementConfig(dt=0.0)
    schedule = Schedule.linear(5.0, n_points=100)
    res = evolve_lindblad(inst, schedule, config)
    assert res.fidelities[0] == pytest.approx(2 / 8)
    assert res.fidelities[-1] > res.fidelities[0]
    assert np.isclose(np.trace(res.final_state).real, 1.0, atol=1e-9)


def test_lindblad_groundspace_weight_constant_at_fixed_axis():
    rng = np.random.default_rng(5)
    inst = single_solution_ring(2)
    config = MeasurementConfig(dt=0.0)
    theta = 0.9
    axis = make_axis(theta, 2)
    Pi0 = ground_projector(inst, axis)
    rho0 = random_density_matrix(4, rng)
    res = evolve_lindblad(
        inst, Schedule.constant(theta, 3.0), config, rho0=rho0, target=Pi0
    )
    assert np.abs(res.fidelities - res.fidelities[0]).max() < 1e-10


# ---------------------------------------------------------------------------
# schedules


def test_schedule_piecewise_lookup():
    s = Schedule(np.array([0.0, 1.0, 2.0]), np.array([0.1, 0.5, 0.9]))
    assert np.allclose(s.axis_at(0.0, 2), 0.1)
    assert np.allclose(s.axis_at(0.99, 2), 0.1)
    assert np.allclose(s.axis_at(1.0, 2), 0.5)
    assert np.allclose(s.axis_at(2.0, 2), 0.9)


def test_schedule_per_qubit_rows():
    vals = np.array([[0.1, 0.2], [0.3, 0.4]])
    s = Schedule(np.array([0.0, 1.0]), vals)
    assert s.per_qubit
    assert np.allclose(s.axis_rows(2), vals)
    with pytest.raises(ValueError):
        s.axis_rows(3)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(np.array([0.0, 0.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Schedule(np.array([0.5, 1.0]), np.zeros(2))
    with pytest.raises(ValueError):
        Schedule(np.array([0.0, 1.0]), np.zeros(3))


def test_schedule_linear_endpoints():
    s = Schedule.linear(4.0, n_points=9)
    assert s.duration == 4.0
    assert s.values[0] == 0.0
    assert np.isclose(s.values[-1], np.pi / 2)


# ---------------------------------------------------------------------------
# conditioned trajectories


def test_trajectory_replay_is_deterministic():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.0)
    schedule = Schedule.linear(1.0, n_points=20)
    rng = substream(77, 0)
    rec = evolve_trajectory(inst, schedule, config, rng=rng, max_step=0.01)
    replay = evolve_trajectory(
        inst, schedule, config, readouts=rec.readouts, max_step=0.01
    )
    assert np.abs(rec.final_state - replay.final_state).max() < 1e-12
    assert np.abs(rec.fidelities - replay.fidelities).max() < 1e-12


def test_trajectory_preserves_state_validity():
    inst = single_solution_ring(2)
    config = MeasurementConfig(dt=0.0)
    schedule = Schedule.linear(2.0, n_points=40)
    rec = evolve_trajectory(inst, schedule, config, rng=substream(5, 1), max_step=0.01)
    assert np.isclose(np.trace(rec.final_state).real, 1.0, atol=1e-9)
    # pure states stay pure up to discretization; overshoot shrinks with step
    assert np.all(rec.purities <= 1.0 + 1e-3)
    fine = evolve_trajectory(inst, schedule, config, rng=substream(5, 1), max_step=0.0025)
    assert (fine.purities - 1.0).max() < (rec.purities - 1.0).max()
    assert np.all(rec.fidelities >= -1e-9)


def test_trajectory_frozen_on_measurement_eigenstate():
    # computational states at axis pi/2 are fixed points of the conditioned flow
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.0)
    d = 4
    rho0 = np.zeros((d, d), dtype=complex)
    rho0[3, 3] = 1.0  # the all-True solution
    schedule = Schedule.constant(np.pi / 2, 10.0)
    rec = evolve_trajectory(
        inst, schedule, config, rng=substream(2, 0), rho0=rho0, max_step=0.02
    )
    assert np.abs(rec.final_state - rho0).max() < 1e-10
    assert np.abs(rec.fidelities - 1.0).max() < 1e-10
    # both clauses satisfied: readout drift vanishes, time-mean near zero
    m_over_T = inst.n_clauses / schedule.duration
    assert np.abs(rec.readouts.mean(axis=0)).max() < 5 * np.sqrt(m_over_T)


def test_trajectory_readout_drift_on_violating_eigenstate():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.0)
    d = 4
    rho0 = np.zeros((d, d), dtype=complex)
    rho0[1, 1] = 1.0  # F,T violates the first clause only
    schedule = Schedule.constant(np.pi / 2, 10.0)
    rec = evolve_trajectory(
        inst, schedule, config, rng=substream(3, 0), rho0=rho0, max_step=0.02
    )
    assert np.abs(rec.final_state - rho0).max() < 1e-10
    tol = 5 * np.sqrt(inst.n_clauses / schedule.duration)
    means = rec.readouts.mean(axis=0)
    assert abs(means[0] - 2.0) < tol  # violated channel drifts at 2/sqrt(tau)
    assert abs(means[1]) < tol


def test_ensemble_mean_tracks_master_equation():
    # smoke-scale version of the unconditional-average consistency check
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.0)
    schedule = Schedule.linear(1.0, n_points=30)
    ens = simulate_ensemble(
        inst, schedule, config, shots=600, seed=42, max_step=0.01
    )
    ref = evolve_lindblad(inst, schedule, config, max_step=0.01).final_state
    diff = ens.mean_final_state - ref
    se = ens.se_final_state
    z_re = np.abs(diff.real) / np.maximum(se.real, 1e-12)
    z_im = np.abs(diff.imag) / np.maximum(se.imag, 1e-12)
    assert np.median(z_re) < 3.0
    assert z_re.max() < 6.0
    assert z_im.max() < 6.0


def test_ensemble_chunking_and_seeding_invariance():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.0)
    schedule = Schedule.linear(0.5, n_points=10)
    a = simulate_ensemble(inst, schedule, config, shots=20, seed=9, chunk=7, max_step=0.02)
    b = simulate_ensemble(inst, schedule, config, shots=20, seed=9, chunk=20, max_step=0.02)
    assert np.abs(a.mean_final_state - b.mean_final_state).max() < 1e-14
    assert np.allclose(a.final_fidelities, b.final_fidelities)


def test_ensemble_statistics_post_selection():
    fids = np.array([0.9, 0.8, 0.02, 0.7, 0.01])
    stats = ensemble_statistics(fids, cutoff=0.05)
    assert stats.n_shots == 5
    assert stats.post_selected_fraction == pytest.approx(3 / 5)
    assert stats.post_selected_mean == pytest.approx(np.mean([0.9, 0.8, 0.7]))
    assert stats.mean_fidelity == pytest.approx(fids.mean())
    assert stats.se_mean > 0


def test_kraus_shot_protocol():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.05)
    schedule = Schedule.linear(2.0, n_points=20)
    rec = evolve_kraus_shot(inst, schedule, config, rng=substream(1, 0))
    n_steps = int(round(2.0 / 0.05))
    assert rec.readouts.shape == (n_steps, 2)
    # exactly one clause read per slice
    assert np.all(np.sum(~np.isnan(rec.readouts), axis=1) == 1)
    assert np.isclose(np.trace(rec.final_state).real, 1.0, atol=1e-10)


def test_kraus_shot_frozen_on_solution():
    inst = ring2sat(2)
    config = MeasurementConfig(dt=0.1)
    d = 4
    rho0 = np.zeros((d, d), dtype=complex)
    rho0[0, 0] = 1.0  # the all-False solution
    schedule = Schedule.constant(np.pi / 2, 20.0)
    rec = evolve_kraus_shot(inst, schedule, config, rng=substream(4, 0), rho0=rho0)
    assert np.abs(rec.final_state - rho0).max() < 1e-12
    # satisfied clauses read out around +1/sqrt(tau) in the sliced convention
    r = rec.readouts[~np.isnan(rec.readouts)]
    assert abs(r.mean() - 1.0) < 5 / np.sqrt(config.dt * len(r))
