"""Closed-form single-qubit dragging solutions, used as optimizer oracles.

A lone qubit measured along the tunable axis sigma(theta) = cos(theta) sigma_x
+ sin(theta) sigma_z admits exact optimal schedules for dragging the Bloch
vector from azimuth phi_i to phi_f in the xz-plane.  Everything here works in
the measurement-rate normalization Gamma; the projector-channel picture at
characteristic time tau corresponds to Gamma = 1/(4 tau), see gamma_from_tau.

Unconditional (rate-Gamma) dynamics confined to the xz-plane reduce to polar
Bloch coordinates (R, phi):

    dR/dt   = -Gamma R (1 - cos(2 (theta - phi)))
    dphi/dt =  Gamma sin(2 (theta - phi))

which is what replay_cost integrates; the closed forms below are its exact
optima.  The drag objective is J = Tr[rho(T_f) sigma(phi_f)] =
R(T_f) cos(phi(T_f) - phi_f).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class QubitDragSpec:
    """Single-qubit drag problem: start azimuth, target azimuth, rate, horizon."""

    phi_i: float
    phi_f: float
    gamma_rate: float
    T_f: float

    def __post_init__(self) -> None:
        if self.gamma_rate <= 0 or self.T_f <= 0:
            raise ValueError("need gamma_rate > 0 and T_f > 0")


def gamma_from_tau(tau: float) -> float:
    """Measurement rate of the projector channel at characteristic time tau."""
    return 1.0 / (4.0 * tau)


def _check_time(spec: QubitDragSpec, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > spec.T_f + 1e-12):
        raise ValueError(f"t outside [0, {spec.T_f}]")
    return t


def mlp_schedule(spec: QubitDragSpec, t) -> np.ndarray | float:
    """Most-likely-path optimal schedule: linear with a constant lead angle.

    theta*(t) = phi_i + (phi_f - phi_i) t/T_f + arctan((phi_f - phi_i)/(4 Gamma T_f)).
    """
    t = _check_time(spec, t)
    drop = spec.phi_f - spec.phi_i
    out = (
        spec.phi_i
        + drop * t / spec.T_f
        + np.arctan(drop / (4.0 * spec.gamma_rate * spec.T_f))
    )
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=1024)
def solve_phi_tf(spec: QubitDragSpec) -> float:
    """Terminal Bloch azimuth of the rate-limited optimal drag.

    Root of sin(phi_f - phi) = (phi - phi_i)/(Gamma T_f) between phi_i and
    phi_f, by bisection run to the last representable midpoint (residuals
    far below 1e-12 even where the equation is steep).  The drag may end
    short of the target when Gamma T_f is small: information extraction
    limits the angular speed.
    """
    if abs(spec.phi_f - spec.phi_i) >= np.pi:
        raise ValueError("azimuth change must stay below pi for a single branch")
    if spec.phi_f == spec.phi_i:
        return spec.phi_i

    gT = spec.gamma_rate * spec.T_f

    def residual(phi: float) -> float:
        return np.sin(spec.phi_f - phi) - (phi - spec.phi_i) / gT

    lo, hi = sorted((spec.phi_i, spec.phi_f))
    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo == 0.0:
        return lo
    if r_hi == 0.0:
        return hi
    if np.sign(r_lo) == np.sign(r_hi):
        raise ValueError("no sign change across the bracket")
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        r_mid = residual(mid)
        if r_mid == 0.0:
            return mid
        if np.sign(r_mid) == np.sign(r_lo):
            lo, r_lo = mid, r_mid
        else:
            hi = mid


def lindblad_schedule(spec: QubitDragSpec, t) -> np.ndarray | float:
    """Unconditional-dynamics optimal schedule: linear, symmetric half-shortfall lead.

    theta(t) = phi_i + (phi(T_f) - phi_i) t/T_f + (phi_f - phi(T_f))/2.
    """
    t = _check_time(spec, t)
    phi_tf = solve_phi_tf(spec)
    out = spec.phi_i + (phi_tf - spec.phi_i) * t / spec.T_f + 0.5 * (spec.phi_f - phi_tf)
    return float(out) if out.ndim == 0 else out


def optimal_cost(spec: QubitDragSpec) -> float:
    """Exact optimum J* = exp(-[1 - cos(phi_f - phi(T_f))] Gamma T_f) cos(phi_f - phi(T_f))."""
    shortfall = spec.phi_f - solve_phi_tf(spec)
    gT = spec.gamma_rate * spec.T_f
    return float(np.exp(-(1.0 - np.cos(shortfall)) * gT) * np.cos(shortfall))


def replay_cost(
    spec: QubitDragSpec,
    schedule: Callable[[float], float],
    n_steps: int = 4000,
) -> float:
    """Integrate the rate-Gamma dynamics under an arbitrary schedule (RK4).

    Starts from the pure state at azimuth phi_i and returns the drag
    objective R(T_f) cos(phi(T_f) - phi_f).
    """
    g = spec.gamma_rate
    h = spec.T_f / n_steps

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        R, phi = y
        delta = schedule(t) - phi
        return np.array(
            [-g * R * (1.0 - np.cos(2.0 * delta)), g * np.sin(2.0 * delta)]
        )

    y = np.array([1.0, spec.phi_i])
    t = 0.0
    for _ in range(n_steps):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    R, phi = y
    return float(R * np.cos(phi - spec.phi_f))
