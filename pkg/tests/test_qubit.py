"""Closed-form single-qubit drag schedules against their own dynamics."""

import numpy as np
import pytest

from zenodrag.qubit import (
    QubitDragSpec,
    gamma_from_tau,
    lindblad_schedule,
    mlp_schedule,
    optimal_cost,
    replay_cost,
    solve_phi_tf,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        QubitDragSpec(0.0, 1.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        QubitDragSpec(0.0, 1.0, 1.0, 0.0)


def test_gamma_tau_conversion():
    assert gamma_from_tau(1.0) == 0.25
    assert gamma_from_tau(0.5) == 0.5


def test_mlp_schedule_formula():
    spec = QubitDragSpec(0.0, np.pi / 2, 1.0, 1.0)
    offset = np.arctan(np.pi / 8)
    assert mlp_schedule(spec, 0.0) == pytest.approx(offset, abs=1e-14)
    assert mlp_schedule(spec, 1.0) == pytest.approx(np.pi / 2 + offset, abs=1e-14)
    mid = mlp_schedule(spec, 0.5)
    assert mid == pytest.approx(np.pi / 4 + offset, abs=1e-14)
    with pytest.raises(ValueError):
        mlp_schedule(spec, 1.5)


def test_mlp_schedule_limits():
    flat = QubitDragSpec(0.7, 0.7, 2.0, 3.0)
    ts = np.linspace(0, 3.0, 7)
    assert np.allclose(mlp_schedule(flat, ts), 0.7)
    slow = QubitDragSpec(0.0, 1.0, 1.0, 1e6)
    # the lead angle vanishes for adiabatically slow drags
    assert abs(mlp_schedule(slow, 0.0)) < 1e-6


def test_solve_phi_tf_residual():
    for gT, drop in ((0.5, 1.0), (2.0, np.pi / 2), (10.0, 0.3), (0.1, 2.5)):
        spec = QubitDragSpec(0.2, 0.2 + drop, gT, 1.0)
        phi = solve_phi_tf(spec)
        residual = np.sin(spec.phi_f - phi) - (phi - spec.phi_i) / gT
        assert abs(residual) < 1e-12
        assert spec.phi_i - 1e-12 <= phi <= spec.phi_f + 1e-12


def test_solve_phi_tf_limits():
    assert solve_phi_tf(QubitDragSpec(0.4, 0.4, 1.0, 1.0)) == 0.4
    fast = QubitDragSpec(0.0, 1.2, 1.0, 1e8)
    assert solve_phi_tf(fast) == pytest.approx(1.2, abs=1e-7)
    with pytest.raises(ValueError):
        solve_phi_tf(QubitDragSpec(0.0, np.pi, 1.0, 1.0))


def test_lindblad_schedule_affine():
    spec = QubitDragSpec(0.0, np.pi / 2, 0.25, 4.0)
    ts = np.linspace(0, 4.0, 9)
    vals = lindblad_schedule(spec, ts)
    second_diff = np.diff(vals, n=2)
    assert np.abs(second_diff).max() < 1e-14
    # endpoints: starts ahead of phi_i, ends short of ... ahead of phi_f symmetric
    phi_tf = solve_phi_tf(spec)
    assert vals[0] == pytest.approx(0.5 * (spec.phi_f - phi_tf) + spec.phi_i)
    assert vals[-1] == pytest.approx(phi_tf + 0.5 * (spec.phi_f - phi_tf))


def test_optimal_cost_values_and_monotonicity():
    assert optimal_cost(QubitDragSpec(0.3, 0.3, 1.0, 2.0)) == pytest.approx(1.0)
    costs = [
        optimal_cost(QubitDragSpec(0.0, np.pi / 2, 0.25, tf))
        for tf in np.linspace(0.5, 40.0, 50)
    ]
    assert np.all(np.diff(costs) > 0)
    assert costs[-1] < 1.0


def test_replay_matches_closed_form():
    for gT in (0.5, 1.0, 4.0):
        spec = QubitDragSpec(0.0, np.pi / 2, 0.25, gT / 0.25)
        sched = lambda t: lindblad_schedule(spec, t)
        assert replay_cost(spec, sched) == pytest.approx(optimal_cost(spec), abs=1e-6)


def test_optimal_schedule_beats_naive_linear():
    for gT in np.linspace(0.3, 5.0, 5):
        for drop in np.linspace(0.2, 2.8, 5):
            spec = QubitDragSpec(0.1, 0.1 + drop, 1.0, gT)
            opt = replay_cost(spec, lambda t: lindblad_schedule(spec, t))
            naive = replay_cost(
                spec, lambda t: spec.phi_i + drop * t / spec.T_f
            )
            assert opt >= naive - 1e-9


def test_perturbed_schedule_never_beats_optimum():
    spec = QubitDragSpec(0.0, np.pi / 2, 0.25, 4.0)
    J = optimal_cost(spec)
    for eps in (-0.02, 0.02):
        cost = replay_cost(spec, lambda t: lindblad_schedule(spec, t) + eps)
        assert cost <= J + 1e-6