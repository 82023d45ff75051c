"""Convergence theory made executable: block decomposition of states around a
groundspace, the one-step fidelity lower bound, the linear-drag planner, and
the total-time / Upsilon accounting for finite slice durations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import MeasurementConfig, averaged_channel, symmetric_product_state
from .operators import ground_projector, make_axis, projector_set
from .sat import SatInstance

PINV_CUTOFF = 1e-10
BLOCK_TOL = 1e-9


@dataclass(frozen=True)
class BlockDecomposition:
    """rho = f rho0 + (1-f) rho_perp + gamma (c + c^dag) around a projector.

    rho0_block lives inside the projector's range, rho_perp_block outside,
    and c_block carries the cross coherences (Pi0 c = c, c Pi0 = 0).  gamma
    is fixed as the Frobenius norm of the off-diagonal block so the split is
    deterministic.  coherence_weight is gamma^2 Tr[c^dag rho0^+ c], the
    quantity whose contraction under the channel is gap-controlled; state
    positivity requires f(1-f) >= coherence_weight.
    """

    f: float
    rho0_block: np.ndarray
    rho_perp_block: np.ndarray
    gamma: float
    c_block: np.ndarray
    coherence_weight: float

    def reconstruct(self) -> np.ndarray:
        return (
            self.f * self.rho0_block
            + (1.0 - self.f) * self.rho_perp_block
            + self.gamma * (self.c_block + self.c_block.conj().T)
        )


def block_decompose(
    rho: np.ndarray, Pi0: np.ndarray, pinv_cutoff: float = PINV_CUTOFF
) -> BlockDecomposition:
    """Split a state into groundspace, orthogonal, and coherence blocks."""
    d = rho.shape[0]
    if np.abs(Pi0 @ Pi0 - Pi0).max() > 1e-10 or np.abs(Pi0 - Pi0.conj().T).max() > 1e-10:
        raise ValueError("projector must be Hermitian and idempotent")
    Q = np.eye(d) - Pi0
    f = float(np.trace(Pi0 @ rho).real)
    off = Pi0 @ rho @ Q
    gamma = float(np.linalg.norm(off))
    if (f < BLOCK_TOL or f > 1.0 - BLOCK_TOL) and gamma > 1e-8:
        raise ValueError(
            f"coherence {gamma:.3e} with extremal fidelity {f:.3e} violates positivity"
        )
    rho0 = Pi0 @ rho @ Pi0
    rho0 = rho0 / f if f > BLOCK_TOL else np.zeros_like(rho0)
    rho_perp = Q @ rho @ Q
    rho_perp = rho_perp / (1.0 - f) if f < 1.0 - BLOCK_TOL else np.zeros_like(rho_perp)
    c = off / gamma if gamma > 1e-15 else np.zeros_like(off)
    if gamma > 1e-15 and f > BLOCK_TOL:
        rho0_pinv = np.linalg.pinv(rho0, rcond=pinv_cutoff, hermitian=True)
        weight = float(np.trace(off.conj().T @ rho0_pinv @ off).real)
    else:
        weight = 0.0
    return BlockDecomposition(
        f=f,
        rho0_block=rho0,
        rho_perp_block=rho_perp,
        gamma=gamma,
        c_block=c,
        coherence_weight=weight,
    )


def overlap_floor(n: int, delta_theta: float) -> float:
    """Groundspace survival of a product state under an axis step."""
    return float(np.cos(delta_theta / 2.0) ** (2 * n))


def fidelity_bound(f: float, delta: float, betaG: float, M: int = 1) -> float:
    """One-increment fidelity lower bound after M channel applications.

    f' >= f delta - 2 (1 - betaG)^M sqrt(a(delta) f (1-f)), with
    a(delta) = delta - delta^2 on [1/2, 1] and 1/4 below.
    """
    if not (0.0 <= f <= 1.0 and 0.0 <= delta <= 1.0):
        raise ValueError("f and delta must lie in [0, 1]")
    if not (0.0 <= betaG <= 1.0) or M < 1:
        raise ValueError("need betaG in [0, 1] and M >= 1")
    a = delta - delta**2 if delta >= 0.5 else 0.25
    return f * delta - 2.0 * (1.0 - betaG) ** M * np.sqrt(a * f * (1.0 - f))


@dataclass(frozen=True)
class DragPlan:
    """Linear-schedule drag certificate: increments, repetitions, accounting.

    thetas lists the axis values at which the channel is applied (the last
    increment lands on theta_f, where no further mixing is required).
    total_time sums the per-step repetitions; total_time_uniform prices every
    step at the worst-gap repetition count, the constant-(M, dt) reading.
    """

    n_vars: int
    theta_i: float
    theta_f: float
    delta_theta: float
    N: int
    thetas: np.ndarray
    gaps: np.ndarray
    M_per_step: np.ndarray
    epsilon1: float
    epsilon2: float
    dt: float
    tau: float
    total_applications: int
    total_time: float
    total_time_uniform: float
    upsilon: float
    uniform_increments: bool = True

    def __post_init__(self) -> None:
        if np.any(self.M_per_step < 1):
            raise ValueError("every step needs at least one channel application")
        if self.uniform_increments:
            if abs(self.N * self.delta_theta - (self.theta_f - self.theta_i)) > 1e-12:
                raise ValueError("increments do not tile the angle interval")

    @property
    def gap_min(self) -> float:
        return float(self.gaps.min())


def upsilon(dt: float, tau: float) -> float:
    """Slice-duration penalty dt / (1 - e^(-dt/2tau)); limit 2 tau at dt = 0."""
    if dt < 0 or tau <= 0:
        raise ValueError("need dt >= 0 and tau > 0")
    if dt < 1e-12:
        return 2.0 * tau
    return dt / -np.expm1(-dt / (2.0 * tau))


def _mixing_numerator(n: int, eps2: float, phi: float) -> float:
    return np.log(1.0 / eps2) + 0.5 * np.log(n) + np.log(phi)


def _repetitions(numerator: float, beta: float, gap: float) -> int:
    if numerator <= 0:
        return 1
    denom = np.log(1.0 / (1.0 - beta * gap))
    return max(1, int(np.ceil(numerator / denom - 1e-12)))


def plan_linear_drag(
    n: int,
    theta_i: float,
    theta_f: float,
    eps1: float,
    eps2: float,
    cfg: MeasurementConfig,
    gap_fn: Callable[[float], float],
    gap_floor: float = 1e-6,
    large_first_step: bool = False,
) -> DragPlan:
    """Sufficient linear-drag plan for final fidelity >= 1 - eps1 - eps2.

    N = ceil(n (theta_f - theta_i)^2 / (4 eps1)) equal increments; at each
    visited axis the channel repeats M(theta) = ceil(numerator / log(1/(1 -
    beta G(theta)))) times.  With large_first_step one bigger opening
    increment of size sqrt(4 eps1 / n) is taken (costing its error once
    rather than once per step), and the remainder is tiled as before.
    """
    if not (0.0 < theta_i < theta_f <= np.pi / 2):
        raise ValueError("need 0 < theta_i < theta_f <= pi/2")
    if not (0.0 < eps1 < 1.0 and 0.0 < eps2 < 1.0):
        raise ValueError("error budgets must lie in (0, 1)")
    if cfg.dt <= 0:
        raise ValueError("planning needs a finite slice dt > 0")
    phi = theta_f - theta_i
    numerator = _mixing_numerator(n, eps2, phi)
    beta = cfg.beta

    if large_first_step:
        first = min(np.sqrt(4.0 * eps1 / n), phi)
        rest = phi - first
        n_rest = int(np.ceil(n * rest**2 / (4.0 * eps1))) if rest > 1e-15 else 0
        steps = [first] + [rest / n_rest] * n_rest if n_rest else [first]
        thetas = theta_i + np.concatenate([[0.0], np.cumsum(steps)[:-1]])
        delta = steps[-1]
        uniform = False
    else:
        N = int(np.ceil(n * phi**2 / (4.0 * eps1)))
        delta = phi / N
        thetas = theta_i + delta * np.arange(N)
        uniform = True

    gaps = np.array([float(gap_fn(t)) for t in thetas])
    if np.any(gaps <= gap_floor):
        worst = thetas[int(np.argmin(gaps))]
        raise ValueError(f"gap too small for finite plan (G({worst:.4f}) <= {gap_floor})")
    M = np.array([_repetitions(numerator, beta, g) for g in gaps], dtype=int)
    total_apps = int(M.sum())
    M_uniform = _repetitions(numerator, beta, float(gaps.min()))
    return DragPlan(
        n_vars=n,
        theta_i=theta_i,
        theta_f=theta_f,
        delta_theta=float(delta),
        N=len(thetas),
        thetas=thetas,
        gaps=gaps,
        M_per_step=M,
        epsilon1=eps1,
        epsilon2=eps2,
        dt=cfg.dt,
        tau=cfg.tau,
        total_applications=total_apps,
        total_time=total_apps * cfg.dt,
        total_time_uniform=len(thetas) * M_uniform * cfg.dt,
        upsilon=upsilon(cfg.dt, cfg.tau),
        uniform_increments=uniform,
    )


def corollary_time(plan: DragPlan, cfg: MeasurementConfig) -> tuple[float, float]:
    """Total dragging time of the plan re-priced at cfg's slice duration.

    Uses the worst gap along the plan's path with a single repetition count
    (the constant-(M, dt) accounting).  At dt below 1e-12 the continuum value
    N * numerator * 2 tau / G_min is returned, the dt -> 0 limit where the
    penalty factor equals 2 tau.
    """
    ups = upsilon(cfg.dt, cfg.tau)
    phi = plan.theta_f - plan.theta_i
    numerator = max(_mixing_numerator(plan.n_vars, plan.epsilon2, phi), 0.0)
    g = plan.gap_min
    if cfg.dt < 1e-12:
        return plan.N * numerator * 2.0 * cfg.tau / g, ups
    M_u = _repetitions(numerator, cfg.beta, g)
    return plan.N * M_u * cfg.dt, ups


@dataclass
class PlanExecution:
    thetas: np.ndarray
    fidelities: np.ndarray  # vs the instantaneous groundspace, after each step
    final_fidelity: float  # vs the groundspace at theta_f
    final_state: np.ndarray


def execute_plan(
    instance: SatInstance,
    plan: DragPlan,
    cfg: MeasurementConfig | None = None,
    rho0: np.ndarray | None = None,
) -> PlanExecution:
    """Run a drag plan with the finite-slice averaged channel.

    Starts from the shared ground state of the axis-0 cost operator unless a
    state is supplied; reports fidelity against the instantaneous groundspace
    after the repetitions at each visited axis, and against the groundspace
    at theta_f at the end.
    """
    if cfg is None:
        cfg = MeasurementConfig(dt=plan.dt, tau=plan.tau)
    n = instance.n_vars
    rho = symmetric_product_state(n) if rho0 is None else np.array(rho0, dtype=complex)
    fids = np.empty(plan.N)
    for k, (theta, reps) in enumerate(zip(plan.thetas, plan.M_per_step)):
        axis = make_axis(float(theta), n)
        pset = projector_set(instance, axis)
        for _ in range(int(reps)):
            rho = averaged_channel(rho, pset, cfg)
        fids[k] = np.trace(ground_projector(instance, axis) @ rho).real
    target = ground_projector(instance, make_axis(plan.theta_f, n))
    final = float(np.trace(target @ rho).real)
    return PlanExecution(
        thetas=plan.thetas.copy(), fidelities=fids, final_fidelity=final, final_state=rho
    )
