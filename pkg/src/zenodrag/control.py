"""Measurement-axis schedule optimization by Pontryagin-style adjoint gradients.

Four problem kinds share one optimizer.  The dynamics family is either

* ``lindblad_*``: the readout-averaged master equation, a linear map of the
  density matrix, or
* ``mlp_*``: most-likely-path dynamics, in which each clause channel carries a
  readout field r_a(t) that enters the propagation, is optimized pointwise
  (closed form, see `optimal_readout`), and contributes a running cost.  The
  readout field, the state, and the costate are mutually dependent and are
  resolved by damped fixed-point sweeps.

The objective is either

* ``*_ofs``: maximize the terminal weight on the solution subspace at a fixed
  horizon T_f, or
* ``*_ot``: trade the horizon against a readout window tau_m through the log
  time-to-solution surrogate J = log(T_f + tau_m) - log Tr[Pi0 rho(T_f)];
  the horizon itself is searched by `optimize_tf`.

Pi0 is the projector onto the computational-basis solution states of the
instance.  Units: the characteristic measurement time is tau = 1 and the m
clause channels share the budget, so each channel runs at rate 1/m.

Gradient conventions.  Schedules are piecewise-constant-left on the problem
grid; gradient row j is dJ/dtheta_j, and the final row governs no interval so
its gradient is identically zero.  For the averaged dynamics the backward pass
differentiates the discrete RK4 propagator exactly, which makes the gradient
match finite differences of the discrete cost to roundoff.  For most-likely
paths the costate is integrated in the identity-shifted frame in which the
backward equation is source-free; the identity component cancels from every
gradient trace, so the frame cannot affect the gradient (``frame="raw"``
integrates the unshifted equation instead, for verification).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dynamics import (
    TRACE_TOL,
    MeasurementConfig,
    Schedule,
    evolve_lindblad,
    lindblad_rhs,
    symmetric_product_state,
)
from .operators import make_axis, projector_set, solution_basis_projector
from .sat import SatInstance

KINDS = ("lindblad_ofs", "lindblad_ot", "mlp_ofs", "mlp_ot")

COSTATE_TOL = 1e-10  # Hermiticity budget for backward integration
PICARD_TOL = 1e-8  # sup-norm readout-field convergence
PICARD_CAP = 200
_ANDERSON_DEPTH = 5  # extrapolation history for the readout fixed point

_LINDBLAD_MAX_STEP = 0.05
_CDJ_MAX_STEP = 0.02
_TABLE_FLOAT_BUDGET = 6e7  # precompute interval operators below this footprint
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# problem and config types


@dataclass(frozen=True)
class ControlProblem:
    """One schedule-optimization task on a uniform time grid.

    T_f is the fixed horizon for ``*_ofs`` kinds and the current horizon for
    ``*_ot`` kinds (whose outer search constructs fresh problems per probe).
    """

    kind: str
    instance: SatInstance
    T_f: float
    grid_size: int = 200
    tau_m: float | None = None
    per_qubit: bool = False
    initial_schedule: Schedule | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}, expected one of {KINDS}")
        if not self.T_f > 0:
            raise ValueError(f"need T_f > 0, got {self.T_f}")
        if self.grid_size < 2:
            raise ValueError(f"need at least two grid points, got {self.grid_size}")
        if self.is_time_problem and (self.tau_m is None or not self.tau_m > 0):
            raise ValueError("time problems need a readout window tau_m > 0")
        if self.initial_schedule is not None:
            self._check_grid(self.initial_schedule)

    @property
    def is_time_problem(self) -> bool:
        return self.kind.endswith("_ot")

    @property
    def is_mlp(self) -> bool:
        return self.kind.startswith("mlp_")

    def grid_times(self) -> np.ndarray:
        return np.linspace(0.0, self.T_f, self.grid_size)

    def _check_grid(self, schedule: Schedule) -> None:
        times = self.grid_times()
        if schedule.times.shape != times.shape or not np.allclose(
            schedule.times, times, rtol=0.0, atol=1e-9 * max(1.0, self.T_f)
        ):
            raise ValueError("schedule grid differs from the problem grid")
        if schedule.per_qubit != self.per_qubit:
            raise ValueError("schedule per-qubit layout differs from the problem")
        if schedule.per_qubit and schedule.values.shape[1] != self.instance.n_vars:
            raise ValueError("per-qubit schedule needs one angle track per variable")

    def starting_values(self) -> np.ndarray:
        """Initial angle rows: the given schedule, else the linear 0 -> pi/2
        ramp sampled at interval midpoints.

        Midpoint sampling is the natural piecewise-constant-left rendering of
        a continuous ramp (O(grid^2) bias instead of O(grid)); it also keeps
        node 0 off theta = 0, where the cost gradient vanishes identically
        whenever the start state lies in the theta = 0 groundspace and a
        node initialized there would never move.
        """
        if self.initial_schedule is not None:
            return np.array(self.initial_schedule.values, dtype=float)
        K = self.grid_size - 1
        mids = (np.arange(K) + 0.5) / K
        vals = (math.pi / 2.0) * np.concatenate([mids, mids[-1:]])
        if self.per_qubit:
            vals = np.repeat(vals[:, None], self.instance.n_vars, axis=1)
        return vals

    def make_schedule(self, values: np.ndarray) -> Schedule:
        return Schedule(self.grid_times(), np.array(values, dtype=float))


@dataclass(frozen=True)
class GrapeConfig:
    """Nesterov-GRAPE hyperparameters (defaults tuned on the single-qubit oracle).

    cdj_running_cost_weight rescales the most-likely-path running cost against
    the terminal cost; 1 is the plain formulation, small values recover the
    pinned-endpoint problem the single-qubit closed forms solve.
    """

    learning_rate: float = 0.05
    momentum: float = 0.9
    max_iters: int = 2000
    grad_tol: float = 1e-6
    theta_clamp: tuple[float, float] | None = (0.0, math.pi / 2.0)
    cdj_running_cost_weight: float = 1.0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError(f"need learning_rate > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"need 0 <= momentum < 1, got {self.momentum}")
        if self.max_iters < 0:
            raise ValueError(f"need max_iters >= 0, got {self.max_iters}")
        if self.grad_tol < 0:
            raise ValueError(f"need grad_tol >= 0, got {self.grad_tol}")
        if self.theta_clamp is not None:
            lo, hi = self.theta_clamp
            if not lo < hi:
                raise ValueError(f"clamp bounds must be ordered, got {self.theta_clamp}")
        if not self.cdj_running_cost_weight > 0:
            raise ValueError("running-cost weight must be positive")


@dataclass
class LindbladPass:
    """Forward/backward adjoint sweep of the averaged dynamics on one schedule.

    states and costates are sampled at the grid nodes; final_fidelity is the
    terminal solution weight Tr(Pi0 rho(T_f)) of this pass's own propagation.
    """

    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray
    gradient: np.ndarray
    cost: float
    final_fidelity: float


@dataclass
class CdjPass:
    """Converged forward/backward/readout sweep of the most-likely-path dynamics.

    costates are reported in the unshifted frame and terminal-cost units, so
    the terminal entry equals the bare solution projector (fidelity kinds) or
    the projector scaled by 1/fidelity (time kinds).  readouts samples the
    optimal readout field at the grid nodes (one row per clause channel);
    readout_nodes keeps the full integration-resolution field, which later
    passes may reuse as a fixed-point warm start.
    """

    times: np.ndarray
    states: np.ndarray
    costates: np.ndarray
    readouts: np.ndarray
    gradient: np.ndarray
    cost: float
    final_fidelity: float
    sweeps: int
    residual: float
    readout_nodes: np.ndarray


@dataclass
class OptimizationResult:
    """Outcome of a GRAPE run (or of the outer horizon search).

    final_fidelity is always the schedule replayed through the averaged
    dynamics, the common yardstick across problem kinds; cost_history holds
    the accepted per-iteration costs (length iterations_used).
    """

    schedule: Schedule
    cost_history: np.ndarray
    gradient_norm_history: np.ndarray
    final_fidelity: float
    optimal_readouts: np.ndarray | None
    converged: bool
    iterations_used: int
    tf_residual: float | None = None


# ---------------------------------------------------------------------------
# per-interval clause operators


def _drag_frames(thetas: np.ndarray, sign: bool) -> tuple[np.ndarray, np.ndarray]:
    """Single-qubit violating-state vectors and angle derivatives, batched."""
    l = 1.0 if sign else -1.0
    half = 0.5 * (np.pi + l * np.asarray(thetas, dtype=float))
    c, s = np.cos(half), np.sin(half)
    inv = 1.0 / math.sqrt(2.0)
    v = np.stack([(c - s) * inv, (c + s) * inv], axis=-1)
    dv = (0.5 * l) * np.stack([-(s + c) * inv, (c - s) * inv], axis=-1)
    return v, dv


def _kron_chain(factors: dict, n: int, eye2: np.ndarray) -> np.ndarray:
    """Batched kron over qubit positions 1..n (qubit 1 the most significant)."""
    acc = None
    for var in range(1, n + 1):
        f = factors.get(var, eye2)
        if acc is None:
            acc = f
        else:
            k, p, q = acc.shape
            acc = np.einsum("kij,kab->kiajb", acc, f).reshape(k, 2 * p, 2 * q)
    return acc


class _IntervalOps:
    """Clause projectors and angle derivatives for one schedule interval."""

    __slots__ = ("P", "Psum", "dP", "tracks", "scale")

    def __init__(self, P, Psum, dP, tracks, scale):
        self.P = P
        self.Psum = Psum
        self.dP = dP  # (m, d, d), summed over clause members (shared-angle mode)
        self.tracks = tracks  # per clause: (qubit columns, per-member dP stack)
        self.scale = scale


class _OperatorTable:
    """Clause projectors P_a(theta_j) and derivatives on every interval.

    Precomputes all intervals in batched form when the footprint is small
    enough; otherwise rebuilds one interval at a time from the cached
    single-qubit frames (keeps n ~ 10 usable at the price of speed).
    """

    def __init__(self, instance: SatInstance, rows: np.ndarray, per_qubit: bool):
        self.instance = instance
        self.rows = np.asarray(rows, dtype=float)
        self.per_qubit = per_qubit
        n_intervals, n = self.rows.shape
        self.dim = 1 << n
        self.scale = 1.0 / instance.n_clauses
        self._frames = {}
        for clause in instance.clauses:
            for var, sign in clause:
                key = (var, bool(sign))
                if key not in self._frames:
                    v, dv = _drag_frames(self.rows[:, var - 1], sign)
                    p = v[:, :, None] * v[:, None, :]
                    dp = dv[:, :, None] * v[:, None, :] + v[:, :, None] * dv[:, None, :]
                    self._frames[key] = (p, dp)
        width = max(len(c) for c in instance.clauses) if per_qubit else 1
        footprint = n_intervals * instance.n_clauses * (2 + width) * self.dim**2
        self._cache = self._build_range(0, n_intervals) if footprint <= _TABLE_FLOAT_BUDGET else None

    def _build_range(self, j0: int, j1: int):
        count = j1 - j0
        n = self.rows.shape[1]
        m = self.instance.n_clauses
        eye2 = np.broadcast_to(np.eye(2), (count, 2, 2))
        P = np.empty((count, m, self.dim, self.dim))
        dP = None if self.per_qubit else np.empty_like(P)
        tracks = [] if self.per_qubit else None
        for a, clause in enumerate(self.instance.clauses):
            fac = {var: self._frames[(var, bool(sign))][0][j0:j1] for var, sign in clause}
            P[:, a] = _kron_chain(fac, n, eye2)
            if self.per_qubit:
                dPs = np.empty((count, len(clause), self.dim, self.dim))
                for t, (var, sign) in enumerate(clause):
                    fac_d = dict(fac)
                    fac_d[var] = self._frames[(var, bool(sign))][1][j0:j1]
                    dPs[:, t] = _kron_chain(fac_d, n, eye2)
                tracks.append((tuple(var - 1 for var, _ in clause), dPs))
            else:
                acc = np.zeros((count, self.dim, self.dim))
                for var, sign in clause:
                    fac_d = dict(fac)
                    fac_d[var] = self._frames[(var, bool(sign))][1][j0:j1]
                    acc += _kron_chain(fac_d, n, eye2)
                dP[:, a] = acc
        return P, P.sum(axis=1), dP, tracks

    def interval(self, j: int) -> _IntervalOps:
        if self._cache is not None:
            P, Psum, dP, tracks = self._cache
            tr = None if tracks is None else [(q, dPs[j]) for q, dPs in tracks]
            return _IntervalOps(P[j], Psum[j], None if dP is None else dP[j], tr, self.scale)
        P, Psum, dP, tracks = self._build_range(j, j + 1)
        tr = None if tracks is None else [(q, dPs[0]) for q, dPs in tracks]
        return _IntervalOps(P[0], Psum[0], None if dP is None else dP[0], tr, self.scale)


def _substep_plan(times: np.ndarray, max_step: float) -> list[tuple[float, int]]:
    plan = []
    for j in range(times.size - 1):
        h = float(times[j + 1] - times[j])
        n_sub = max(1, int(math.ceil(h / max_step - 1e-12)))
        plan.append((h / n_sub, n_sub))
    return plan


def _checked_costate(lam: np.ndarray) -> np.ndarray:
    asym = np.abs(lam - lam.T).max()
    if asym > COSTATE_TOL:
        raise FloatingPointError(f"costate Hermiticity drifted to {asym:.2e}")
    return 0.5 * (lam + lam.T)


def _trace_dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.einsum("ij,ji->", a, b))


def _batch_trace(A: np.ndarray) -> np.ndarray:
    return A.diagonal(axis1=-2, axis2=-1).sum(axis=-1)


def _trace_pairs(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Tr(B_a A_b) for stacks A (..., d, d) and B (m, d, d) -> (..., m)."""
    return np.tensordot(A, B, axes=((-2, -1), (2, 1)))


# ---------------------------------------------------------------------------
# averaged-dynamics (Lindblad) adjoint pass


def _apply_avg(ops: _IntervalOps, x: np.ndarray) -> np.ndarray:
    """Generator of the averaged dynamics on a symmetric matrix."""
    Px = ops.P @ x
    PxP = np.matmul(Px, ops.P).sum(axis=0)
    anti = ops.Psum @ x
    anti = anti + anti.T
    return ops.scale * (PxP - 0.5 * anti)


def adjoint_pass_lindblad(
    problem: ControlProblem, schedule: Schedule, *, max_step: float | None = None
) -> LindbladPass:
    """One forward/backward sweep of the averaged dynamics with its gradient.

    The forward propagator is the fourth-order polynomial truncation of the
    interval exponential (RK4 on a linear autonomous system); the backward
    pass reuses the same self-adjoint map on the costate, and the gradient
    accumulates the exact derivative of the discrete step polynomial, so it
    matches finite differences of the discrete cost to roundoff.
    """
    if problem.is_mlp:
        raise ValueError("averaged-dynamics pass called on a most-likely-path kind")
    problem._check_grid(schedule)
    inst = problem.instance
    n = inst.n_vars
    times = schedule.times
    K = times.size
    rows = schedule.axis_rows(n)[:-1]
    table = _OperatorTable(inst, rows, problem.per_qubit)
    plan = _substep_plan(times, max_step if max_step is not None else _LINDBLAD_MAX_STEP)
    d = table.dim
    m = inst.n_clauses
    Pi0 = np.real(solution_basis_projector(inst))

    offsets = np.concatenate(([0], np.cumsum([ns for _, ns in plan])))
    store = np.empty((offsets[-1], d, d))
    states = np.empty((K, d, d))
    rho = np.real(symmetric_product_state(n))
    states[0] = rho
    for j in range(K - 1):
        ops = table.interval(j)
        delta, n_sub = plan[j]
        c1, c2, c3, c4 = delta, delta**2 / 2.0, delta**3 / 6.0, delta**4 / 24.0
        for s in range(n_sub):
            store[offsets[j] + s] = rho
            a1 = _apply_avg(ops, rho)
            a2 = _apply_avg(ops, a1)
            a3 = _apply_avg(ops, a2)
            a4 = _apply_avg(ops, a3)
            rho = rho + c1 * a1 + c2 * a2 + c3 * a3 + c4 * a4
            rho = 0.5 * (rho + rho.T)
        tr = float(np.trace(rho))
        if abs(tr - 1.0) > TRACE_TOL:
            raise FloatingPointError(
                f"trace drifted to {tr} by t={times[j + 1]:.4g}; reduce max_step"
            )
        states[j + 1] = rho

    fid = _trace_dot(Pi0, rho)
    if problem.is_time_problem:
        if fid <= 0.0:
            raise FloatingPointError("vanishing solution weight; log cost undefined")
        cost = math.log(problem.T_f + problem.tau_m) - math.log(fid)
        lam = Pi0 / fid
    else:
        cost = -fid
        lam = Pi0.copy()

    grad = np.zeros((K, n)) if problem.per_qubit else np.zeros(K)
    costates = np.empty_like(states)
    costates[K - 1] = lam
    for j in range(K - 2, -1, -1):
        ops = table.interval(j)
        delta, n_sub = plan[j]
        c1, c2, c3, c4 = delta, delta**2 / 2.0, delta**3 / 6.0, delta**4 / 24.0
        # W[a, b] pairs the costate power a with the state power b in the
        # derivative of the quartic step polynomial.
        W = np.zeros((4, 4))
        for a in range(4):
            for b in range(4 - a):
                W[a, b] = delta ** (a + b + 1) / math.factorial(a + b + 1)
        for s in range(n_sub - 1, -1, -1):
            rho_s = store[offsets[j] + s]
            x1 = _apply_avg(ops, rho_s)
            x2 = _apply_avg(ops, x1)
            x3 = _apply_avg(ops, x2)
            xs = np.stack([rho_s, x1, x2, x3])
            y1 = _apply_avg(ops, lam)
            y2 = _apply_avg(ops, y1)
            y3 = _apply_avg(ops, y2)
            y4 = _apply_avg(ops, y3)
            ys = np.stack([lam, y1, y2, y3])
            # pair[a, b] = xs[b] @ ys[a]; pairM[c, a, b] = xs[b] @ P[c] @ ys[a]
            pair = np.matmul(xs[None, :], ys[:, None])
            S = np.tensordot(W, pair, axes=((0, 1), (0, 1)))
            if ops.tracks is None:
                total = 0.0
                step = max(1, int(2e7 // (16 * d * d)))
                for c0 in range(0, m, step):
                    XP = np.matmul(xs[None, :], ops.P[c0 : c0 + step, None])
                    pairM = np.matmul(XP[:, None], ys[None, :, None])
                    M = np.tensordot(W, pairM, axes=((0, 1), (1, 2)))
                    total += float(
                        (ops.dP[c0 : c0 + step] * (M - 0.5 * S).transpose(0, 2, 1)).sum()
                    )
                grad[j] -= 2.0 * ops.scale * total
            else:
                for a, (qcols, dPs) in enumerate(ops.tracks):
                    XP = np.matmul(xs, ops.P[a])
                    pairM = np.matmul(XP[None, :], ys[:, None])
                    M = np.tensordot(W, pairM, axes=((0, 1), (0, 1)))
                    vals = (dPs * (M - 0.5 * S).T).sum(axis=(1, 2))
                    for t, qc in enumerate(qcols):
                        grad[j, qc] -= 2.0 * ops.scale * float(vals[t])
            lam = lam + c1 * y1 + c2 * y2 + c3 * y3 + c4 * y4
            lam = 0.5 * (lam + lam.T)
        costates[j] = _checked_costate(lam)

    return LindbladPass(
        times=times.copy(),
        states=states,
        costates=costates,
        gradient=grad,
        cost=cost,
        final_fidelity=fid,
    )


def lindblad_control_hamiltonian(rho, costate, axis, instance: SatInstance) -> float:
    """Control Hamiltonian Tr(Lambda L(theta)[rho]) at the per-clause rate.

    Constant in time along an optimized trajectory (autonomous dynamics), a
    useful convergence certificate for fidelity-style runs.
    """
    pset = projector_set(instance, make_axis(axis, instance.n_vars, validate=False))
    flow = lindblad_rhs(np.asarray(rho, dtype=complex), pset, 1.0, instance.n_clauses)
    return float(np.einsum("ij,ji->", np.asarray(costate, dtype=complex), flow).real)


# ---------------------------------------------------------------------------
# most-likely-path (CDJ) machinery


def optimal_readout(rho: np.ndarray, costate: np.ndarray, P: np.ndarray) -> float:
    """Stationary readout r* = 2Tr(rho P) + Tr{Lambda(rho P + P rho - 2 rho Tr[rho P])}.

    The stochastic Hamiltonian is concave quadratic in each channel's readout,
    so this stationary point is its unique maximizer.
    """
    rho = np.asarray(rho, dtype=complex)
    costate = np.asarray(costate, dtype=complex)
    P = np.asarray(P, dtype=complex)
    occ = np.einsum("ij,ji->", rho, P)
    t = (
        np.einsum("ij,jk,ki->", costate, rho, P)
        + np.einsum("ij,jk,ki->", costate, P, rho)
        - 2.0 * occ * np.einsum("ij,ji->", costate, rho)
    )
    return float((2.0 * occ + t).real)


def cdj_hamiltonian(rho, costate, readouts, axis, instance: SatInstance) -> float:
    """Stochastic-path Hamiltonian of the readout-conditioned dynamics.

    (1/m) sum_a { Tr(Lambda F_a) - [r_a - 2Tr(rho P_a)]^2 / 2 - g_a } with
    F_a the readout-drift generator of channel a and g_a twice the projector
    variance; evaluated at measurement time tau = 1.
    """
    n = instance.n_vars
    axis = make_axis(axis, n, validate=False)
    P = projector_set(instance, axis).projectors
    rho = np.asarray(rho, dtype=complex)
    costate = np.asarray(costate, dtype=complex)
    r = np.atleast_1d(np.asarray(readouts, dtype=float))
    m = instance.n_clauses
    if r.shape != (m,):
        raise ValueError(f"need one readout per clause, got shape {r.shape} for m={m}")
    total = 0.0
    for a in range(m):
        occ = float(np.einsum("ij,ji->", P[a], rho).real)
        back = P[a] @ rho + rho @ P[a] - 2.0 * occ * rho
        drive = float(np.einsum("ij,ji->", costate, back).real)
        total += (r[a] - 1.0) * drive - 0.5 * (r[a] - 2.0 * occ) ** 2 - 2.0 * (occ - occ**2)
    return total / m


def _occupations(ops: _IntervalOps, rho: np.ndarray) -> np.ndarray:
    return _batch_trace(ops.P @ rho)


def _mlp_drift(ops: _IntervalOps, rho: np.ndarray, r_row: np.ndarray, occ: np.ndarray) -> np.ndarray:
    """State flow under the readout field: (1/m) sum_a (r_a-1) B_a(rho)."""
    coef = ops.scale * (r_row - 1.0)
    D = np.tensordot(coef, ops.P @ rho, axes=(0, 0))
    return D + D.T - (2.0 * float(coef @ occ)) * rho


def _running_density(ops: _IntervalOps, occ: np.ndarray, r_row: np.ndarray) -> float:
    quad = 0.5 * float(((r_row - 2.0 * occ) ** 2).sum())
    var = 2.0 * float((occ * (1.0 - occ)).sum())
    return ops.scale * (quad + var)


class _CdjGrid:
    """Integration nodes refined from the schedule grid, with interval owners."""

    def __init__(self, times: np.ndarray, plan: list[tuple[float, int]]):
        self.plan = plan
        counts = [ns for _, ns in plan]
        self.gidx = np.concatenate(([0], np.cumsum(counts)))  # grid node -> fine node
        self.n_nodes = int(self.gidx[-1]) + 1
        owner = np.empty(self.n_nodes, dtype=int)
        for j in range(len(plan)):
            owner[self.gidx[j] : self.gidx[j + 1]] = j
        owner[-1] = len(plan) - 1
        self.owner = owner


def _substep_propagator(ops, field, delta, lo: int):
    """Half-step propagator E = exp(delta (G - g_max)) of the frozen generator
    G = (1/m) sum_a (r_a - 1) P_a at the substep's midpoint field, plus the
    peak-eigenvalue shift that keeps E bounded by one."""
    coef = ops.scale * (0.5 * (field[lo] + field[lo + 1]) - 1.0)
    G = np.tensordot(coef, ops.P, axes=(0, 0))
    w, U = np.linalg.eigh(G)
    E = (U * np.exp(delta * (w - w[-1]))) @ U.T
    return E, float(w[-1])


def _interval_propagators(ops, field, delta, lo: int, hi: int):
    """Batched substep propagators for fine nodes [lo, hi); the generator
    depends only on the field, so one batched eigh covers the interval."""
    coef = ops.scale * (0.5 * (field[lo:hi] + field[lo + 1 : hi + 1]) - 1.0)
    G = np.tensordot(coef, ops.P, axes=(1, 0))
    w, U = np.linalg.eigh(G)
    gmax = w[:, -1]
    scaled = U * np.exp(delta * (w - gmax[:, None]))[:, None, :]
    return np.matmul(scaled, U.transpose(0, 2, 1)), gmax


def _cdj_forward(table, grid: _CdjGrid, rho0, field):
    """Propagate the state through each substep as the normalized sandwich
    rho -> E rho E / Tr(E rho E), which keeps rho a density matrix for any
    readout field.  With field None, bootstrap r = 2<P> pointwise first.
    Returns the per-interval propagators and normalizers for the backward
    sweep (None in bootstrap mode)."""
    d = table.dim
    m = table.instance.n_clauses
    rho_nodes = np.empty((grid.n_nodes, d, d))
    occ_nodes = np.empty((grid.n_nodes, m))
    bootstrap = field is None
    if bootstrap:
        field = np.empty((grid.n_nodes, m))
    cache: list[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None if bootstrap else []
    rho = rho0
    rho_nodes[0] = rho
    for j in range(len(grid.plan)):
        ops = table.interval(j)
        delta, n_sub = grid.plan[j]
        lo = grid.gidx[j]
        if not bootstrap:
            E_blk, gmax_blk = _interval_propagators(ops, field, delta, lo, lo + n_sub)
            norms = np.empty(n_sub)
        for s in range(n_sub):
            node = lo + s
            occ = _occupations(ops, rho)
            occ_nodes[node] = occ
            if bootstrap:
                # freeze the generator on this node's self-consistent readout
                field[node] = field[node + 1] = 2.0 * occ
                E, _ = _substep_propagator(ops, field, delta, node)
            else:
                E = E_blk[s]
            rho = E @ rho @ E
            tr = float(np.trace(rho))
            if not (np.isfinite(tr) and tr > 0.0):
                rho_nodes[node + 1 :] = np.nan
                return rho_nodes, occ_nodes, field, None
            if not bootstrap:
                norms[s] = tr
            rho = rho / tr
            rho = 0.5 * (rho + rho.T)
            rho_nodes[node + 1] = rho
        if not bootstrap:
            cache.append((E_blk, gmax_blk, norms))
    occ_nodes[-1] = _occupations(table.interval(len(grid.plan) - 1), rho)
    if bootstrap:
        field[-1] = 2.0 * occ_nodes[-1]
    return rho_nodes, occ_nodes, field, cache


def _cdj_backward(table, grid: _CdjGrid, rho_nodes, cache, terminal, shift, frame):
    """Integrate the costate backward with the forward substeps' own
    propagators and normalizers, so that Tr(costate rho) = 1 is conserved
    exactly in the identity-shifted frame; returns node costates and, in that
    frame, the identity coefficient needed to unshift them."""
    lam_nodes = np.empty_like(rho_nodes)
    c_nodes = np.zeros(grid.n_nodes)
    eye = np.eye(table.dim)
    reduced = frame == "reduced"
    lam = terminal + shift * eye if reduced else terminal.copy()
    c = shift if reduced else 0.0
    lam_nodes[-1] = lam
    c_nodes[-1] = c
    for j in range(len(grid.plan) - 1, -1, -1):
        E_blk, gmax_blk, norms = cache[j]
        delta, n_sub = grid.plan[j]
        for s in range(n_sub - 1, -1, -1):
            lo = grid.gidx[j] + s
            E = E_blk[s]
            norm = norms[s]
            gmax = gmax_blk[s]
            if reduced:
                lam = (E @ lam @ E) / norm
                c = c * float(np.exp(-2.0 * delta * gmax)) / norm
            else:
                # variation of constants through the identity-shifted step
                c_hi = 1.0 - _trace_dot(lam, rho_nodes[lo + 1])
                shifted = (E @ (lam + c_hi * eye) @ E) / norm
                lam = shifted - (c_hi * float(np.exp(-2.0 * delta * gmax)) / norm) * eye
            lam = 0.5 * (lam + lam.T)
            lam_nodes[lo] = lam
            c_nodes[lo] = c
    return lam_nodes, c_nodes


def _readout_proposal(table, grid: _CdjGrid, rho_nodes, occ_nodes, lam_nodes):
    """Pointwise optimal readout field from the current state and costate."""
    prop = np.empty_like(occ_nodes)
    last = len(grid.plan) - 1
    for j in range(len(grid.plan)):
        ops = table.interval(j)
        sl = slice(grid.gidx[j], grid.gidx[j + 1] + (1 if j == last else 0))
        M = np.matmul(rho_nodes[sl], lam_nodes[sl])
        t1 = _trace_pairs(M, ops.P)
        trM = _batch_trace(M)
        prop[sl] = 2.0 * occ_nodes[sl] + 2.0 * (t1 - occ_nodes[sl] * trM[:, None])
    return prop


def adjoint_pass_cdj(
    problem: ControlProblem,
    schedule: Schedule,
    *,
    max_step: float | None = None,
    running_cost_weight: float = 1.0,
    frame: str = "reduced",
    readouts: np.ndarray | None = None,
    readout_init: np.ndarray | None = None,
) -> CdjPass:
    """Self-consistent forward/backward sweep of the most-likely-path dynamics.

    Damped fixed-point iteration: propagate the state under the current
    readout field (normalized exponential substeps), integrate the costate
    backward in the chosen frame with the matching propagators, then move the
    field toward its pointwise-optimal value until it changes by less than
    PICARD_TOL in sup norm (cap PICARD_CAP sweeps).  `readouts`
    prescribes a full-resolution field and skips the iteration (single sweep);
    `readout_init` seeds it.  The gradient weighs the running cost by
    running_cost_weight and includes its explicit axis dependence.
    """
    if not problem.is_mlp:
        raise ValueError("most-likely-path pass called on an averaged-dynamics kind")
    if frame not in ("reduced", "raw"):
        raise ValueError(f"unknown costate frame {frame!r}")
    if not running_cost_weight > 0:
        raise ValueError("running-cost weight must be positive")
    problem._check_grid(schedule)
    omega = float(running_cost_weight)
    inst = problem.instance
    n = inst.n_vars
    times = schedule.times
    K = times.size
    rows = schedule.axis_rows(n)[:-1]
    table = _OperatorTable(inst, rows, problem.per_qubit)
    plan = _substep_plan(times, max_step if max_step is not None else _CDJ_MAX_STEP)
    grid = _CdjGrid(times, plan)
    m = inst.n_clauses
    Pi0 = np.real(solution_basis_projector(inst))
    rho0 = np.real(symmetric_product_state(n))

    def check_shape(arr, name):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (grid.n_nodes, m):
            raise ValueError(
                f"{name} must have shape (n_nodes, m) = ({grid.n_nodes}, {m}), got {arr.shape}"
            )
        return arr

    prescribed = readouts is not None
    if prescribed:
        field = check_shape(readouts, "readouts")
    elif readout_init is not None and np.asarray(readout_init).shape == (grid.n_nodes, m):
        field = np.array(readout_init, dtype=float)
    else:
        field = None

    if field is None:
        field = _cdj_forward(table, grid, rho0, None)[2].copy()

    def terminal_pieces(rho_N):
        fid = _trace_dot(Pi0, rho_N)
        if problem.is_time_problem:
            if fid <= 0.0:
                raise FloatingPointError("vanishing solution weight; log cost undefined")
            return Pi0 / (omega * fid), 1.0 - 1.0 / omega, fid
        return Pi0 / omega, 1.0 - fid / omega, fid

    def do_sweep(fld, strict):
        """One forward/backward/proposal evaluation of a readout field.  The
        forward map is unconditionally stable, so a non-finite backward or
        proposal is the rejection signal for a runaway trial field; strict
        mode turns it into an error instead of returning None."""
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                rho_n, occ_n, _, cache = _cdj_forward(table, grid, rho0, fld)
                if cache is None or not np.isfinite(rho_n).all():
                    raise FloatingPointError("state propagation left the representable range")
                terminal, shift, fid = terminal_pieces(rho_n[-1])
                lam_n, c_n = _cdj_backward(table, grid, rho_n, cache, terminal, shift, frame)
                if not (np.isfinite(lam_n).all() and np.isfinite(c_n).all()):
                    raise FloatingPointError(
                        "costate sweep diverged; reduce max_step or raise the "
                        "running-cost weight"
                    )
                prop = _readout_proposal(table, grid, rho_n, occ_n, lam_n)
                if not np.isfinite(prop).all():
                    raise FloatingPointError("readout proposal left the representable range")
        except (FloatingPointError, np.linalg.LinAlgError):
            if strict:
                raise
            return None
        residual = float(np.abs(prop - fld).max())
        return rho_n, occ_n, lam_n, c_n, prop, residual, fid

    # Damped fixed-point sweeps on the readout field, with Anderson
    # extrapolation over a short history to kill slow near-unit-rate modes;
    # any setback (residual growth, rejected trial) drops the history and
    # falls back to a more heavily damped step.
    state = do_sweep(field, strict=True)
    kappa = 1.0
    res_prev = math.inf
    sweeps = 0
    hist_x: list[np.ndarray] = []
    hist_f: list[np.ndarray] = []
    while True:
        rho_nodes, occ_nodes, lam_nodes, c_nodes, prop, residual, fid = state
        if prescribed or residual < PICARD_TOL:
            break
        sweeps += 1
        if sweeps >= PICARD_CAP:
            raise RuntimeError(
                f"readout fixed point did not converge: residual {residual:.3e} "
                f"after {sweeps} sweeps (tolerance {PICARD_TOL})"
            )
        if residual > res_prev:
            kappa = max(0.05, 0.5 * kappa)
            hist_x.clear()
            hist_f.clear()
        elif residual < 0.5 * res_prev:
            kappa = min(1.0, 1.25 * kappa)
        res_prev = residual
        f_vec = (prop - field).ravel()
        hist_x.append(field.ravel().copy())
        hist_f.append(f_vec.copy())
        if len(hist_x) > _ANDERSON_DEPTH:
            hist_x.pop(0)
            hist_f.pop(0)
        nxt = None
        if len(hist_x) >= 2:
            dX = np.diff(np.stack(hist_x, axis=1), axis=1)
            dF = np.diff(np.stack(hist_f, axis=1), axis=1)
            gamma, *_ = np.linalg.lstsq(dF, f_vec, rcond=None)
            if np.isfinite(gamma).all() and np.abs(gamma).max() < 1e4:
                cand = (hist_x[-1] + kappa * f_vec - (dX + kappa * dF) @ gamma).reshape(
                    field.shape
                )
                st = do_sweep(cand, strict=False)
                if st is not None:
                    field, nxt = cand, st
        if nxt is None:
            while True:
                trial = field + kappa * (prop - field)
                st = do_sweep(trial, strict=False)
                if st is not None:
                    field, nxt = trial, st
                    break
                kappa *= 0.5
                if kappa < 1e-4:
                    raise RuntimeError("readout sweeps diverged even under heavy damping")
        state = nxt

    # gradient and running cost by per-interval trapezoid over the fine nodes
    grad = np.zeros((K, n)) if problem.per_qubit else np.zeros(K)
    j_run = 0.0
    for j in range(K - 1):
        ops = table.interval(j)
        delta, n_sub = plan[j]
        sl = slice(grid.gidx[j], grid.gidx[j + 1] + 1)
        w = np.full(n_sub + 1, delta)
        w[0] = w[-1] = 0.5 * delta
        rho_blk = rho_nodes[sl]
        occ_blk = occ_nodes[sl].copy()
        # the right edge belongs to the next interval; re-read it on this axis
        occ_blk[-1] = _occupations(ops, rho_blk[-1])
        r_blk = field[sl]
        coef = r_blk - 1.0
        quad = 0.5 * ((r_blk - 2.0 * occ_blk) ** 2).sum(axis=1)
        var = 2.0 * (occ_blk * (1.0 - occ_blk)).sum(axis=1)
        j_run += float(w @ (quad + var)) * ops.scale
        M = np.matmul(rho_blk, lam_nodes[sl])
        trM = _batch_trace(M)
        if ops.tracks is None:
            t1 = _trace_pairs(M, ops.dP)
            t2 = _trace_pairs(rho_blk, ops.dP)
            psi = 2.0 * ops.scale * (coef * (t1 - t2 * trM[:, None] + t2)).sum(axis=1)
            grad[j] -= omega * float(w @ psi)
        else:
            for a, (qcols, dPs) in enumerate(ops.tracks):
                t1 = _trace_pairs(M, dPs)
                t2 = _trace_pairs(rho_blk, dPs)
                vals = 2.0 * ops.scale * coef[:, a : a + 1] * (t1 - t2 * trM[:, None] + t2)
                contrib = omega * (w[:, None] * vals).sum(axis=0)
                for t, qc in enumerate(qcols):
                    grad[j, qc] -= contrib[t]

    terminal_cost = (
        math.log(problem.T_f + problem.tau_m) - math.log(fid)
        if problem.is_time_problem
        else -fid
    )
    cost = terminal_cost + omega * j_run

    sel = grid.gidx
    if frame == "reduced":
        eye = np.eye(table.dim)
        costates = omega * (lam_nodes[sel] - c_nodes[sel][:, None, None] * eye)
    else:
        costates = omega * lam_nodes[sel]
    for k in range(K):
        costates[k] = _checked_costate(costates[k])

    return CdjPass(
        times=times.copy(),
        states=rho_nodes[sel].copy(),
        costates=costates,
        readouts=field[sel].T.copy(),
        gradient=grad,
        cost=cost,
        final_fidelity=fid,
        sweeps=sweeps,
        residual=residual,
        readout_nodes=field,
    )


# ---------------------------------------------------------------------------
# Nesterov-GRAPE


def _replay_fidelity(instance: SatInstance, schedule: Schedule, max_step=None) -> float:
    """Terminal solution weight of a schedule under the averaged dynamics."""
    res = evolve_lindblad(instance, schedule, MeasurementConfig(dt=0.0), max_step=max_step)
    return float(res.fidelities[-1])


def nesterov_grape(
    problem: ControlProblem, cfg: GrapeConfig | None = None, *, max_step: float | None = None
) -> OptimizationResult:
    """Momentum-lookahead gradient descent on the schedule, clamped per config.

    Velocity is rebuilt from realized (post-clamp) displacements; on a cost
    increase the momentum is reset and a plain backtracking gradient step is
    tried (monotone-or-restart), so accepted costs never increase.  A pass
    that fails or returns non-finite numbers aborts the run with the last
    accepted iterate.
    """
    cfg = cfg if cfg is not None else GrapeConfig()
    theta = problem.starting_values()
    clamp = cfg.theta_clamp
    if clamp is not None:
        lo, hi = clamp
        if theta.min() < lo - 1e-12 or theta.max() > hi + 1e-12:
            raise ValueError("initial schedule violates theta_clamp; widen or disable it")

    warm = {"field": None}

    def run_pass(vals):
        sched = problem.make_schedule(vals)
        if problem.is_mlp:
            p = adjoint_pass_cdj(
                problem,
                sched,
                max_step=max_step,
                running_cost_weight=cfg.cdj_running_cost_weight,
                readout_init=warm["field"],
            )
            warm["field"] = p.readout_nodes
            return p
        return adjoint_pass_lindblad(problem, sched, max_step=max_step)

    def try_pass(vals):
        try:
            p = run_pass(vals)
        except (FloatingPointError, RuntimeError) as err:
            return err
        if not (math.isfinite(p.cost) and np.isfinite(p.gradient).all()):
            return FloatingPointError("non-finite cost or gradient")
        return p

    def clip(vals):
        return np.clip(vals, lo, hi) if clamp is not None else vals

    def pg_norm(vals, grad):
        act, g = vals[:-1], grad[:-1]
        if clamp is None:
            return float(np.abs(g).max())
        stepped = np.clip(act - cfg.learning_rate * g, lo, hi)
        return float(np.abs(act - stepped).max() / cfg.learning_rate)

    cur = run_pass(theta)
    if not (math.isfinite(cur.cost) and np.isfinite(cur.gradient).all()):
        raise FloatingPointError("non-finite cost or gradient at the initial schedule")
    v = np.zeros_like(theta)
    cost_hist: list[float] = []
    gnorm_hist: list[float] = []
    converged = False
    aborted = False
    used = 0

    for _ in range(cfg.max_iters):
        if pg_norm(theta, cur.gradient) < cfg.grad_tol:
            converged = True
            break
        if np.any(v):
            look = try_pass(clip(theta + cfg.momentum * v))
            if isinstance(look, Exception):
                v[:] = 0.0
                look = cur
        else:
            look = cur
        cand = clip(theta + cfg.momentum * v - cfg.learning_rate * look.gradient)
        trial = try_pass(cand)
        if not isinstance(trial, Exception) and trial.cost <= cur.cost:
            v = cand - theta
            theta, cur = cand, trial
        else:
            # momentum restart: plain gradient step with backtracking
            v[:] = 0.0
            step = cfg.learning_rate
            accepted = False
            for _ in range(30):
                cand = clip(theta - step * cur.gradient)
                trial = try_pass(cand)
                if not isinstance(trial, Exception) and trial.cost <= cur.cost:
                    v = cand - theta
                    theta, cur = cand, trial
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                aborted = isinstance(trial, Exception)
                break
        used += 1
        cost_hist.append(cur.cost)
        gnorm_hist.append(pg_norm(theta, cur.gradient))

    if aborted:
        warnings.warn(
            "optimization aborted on a failed adjoint pass; returning the last accepted iterate",
            stacklevel=2,
        )

    values = np.array(theta)
    values[-1] = values[-2]  # the final row governs no interval; mirror the last one
    sched = problem.make_schedule(values)
    tf_res = None
    if problem.is_time_problem:
        tf_res = _tf_residual_from_pass(problem, sched, cur, cfg.cdj_running_cost_weight)
    return OptimizationResult(
        schedule=sched,
        cost_history=np.asarray(cost_hist),
        gradient_norm_history=np.asarray(gnorm_hist),
        final_fidelity=_replay_fidelity(problem.instance, sched),
        optimal_readouts=cur.readouts if problem.is_mlp else None,
        converged=converged,
        iterations_used=used,
        tf_residual=tf_res,
    )


# ---------------------------------------------------------------------------
# horizon optimization


def _tf_residual_from_pass(problem: ControlProblem, schedule: Schedule, p, omega: float) -> float:
    """Horizon-stationarity residual from a finished adjoint pass.

    Marginal readout-window cost 1/(T_f + tau_m) minus the terminal
    log-fidelity growth rate, plus (most-likely-path kinds) the terminal
    running-cost density; everything evaluated on the final interval's axis.
    """
    inst = problem.instance
    rows = schedule.axis_rows(inst.n_vars)[-2:-1]
    table = _OperatorTable(inst, rows, problem.per_qubit)
    ops = table.interval(0)
    Pi0 = np.real(solution_basis_projector(inst))
    rho_N = p.states[-1]
    fid = p.final_fidelity
    window = 1.0 / (problem.T_f + problem.tau_m)
    if problem.is_mlp:
        r_N = p.readouts[:, -1]
        occ = _occupations(ops, rho_N)
        flow = _mlp_drift(ops, rho_N, r_N, occ)
        c_run = _running_density(ops, occ, r_N)
        return float(window + omega * c_run - _trace_dot(Pi0, flow) / fid)
    flow = _apply_avg(ops, rho_N)
    return float(window - _trace_dot(Pi0, flow) / fid)


def tf_stationarity(
    problem: ControlProblem, result: OptimizationResult, *, running_cost_weight: float = 1.0
) -> float:
    """Stationarity residual of the log-TTS objective in the horizon T_f.

    Zero at an optimal horizon: the marginal log readout-window cost
    1/(T_f + tau_m) balances the terminal log-fidelity growth rate (plus the
    terminal running-cost density for most-likely-path kinds).
    """
    if not problem.is_time_problem:
        raise ValueError("stationarity residual is defined for time-optimal kinds only")
    if problem.is_mlp:
        p = adjoint_pass_cdj(
            problem, result.schedule, running_cost_weight=running_cost_weight
        )
    else:
        p = adjoint_pass_lindblad(problem, result.schedule)
    return _tf_residual_from_pass(problem, result.schedule, p, running_cost_weight)


def optimize_tf(
    problem: ControlProblem,
    tf_bracket: tuple[float, float],
    cfg: GrapeConfig | None = None,
    *,
    linear_baseline: bool = False,
    outer: str = "replay",
    tf_tol: float = 1e-2,
    max_step: float | None = None,
) -> tuple[float, OptimizationResult]:
    """Golden-section search of the horizon on the log time-to-solution.

    Each probe re-solves the matching fidelity problem at that horizon (warm
    started from the nearest solved probe), then scores log TTS with the
    schedule replayed through the averaged dynamics (``outer="replay"``; the
    common yardstick) or with the probe kind's own cost (``outer="native"``).
    ``linear_baseline=True`` skips the inner solves and optimizes the horizon
    of the plain linear schedule.  Returns (T_f*, result at T_f*) with the
    stationarity residual attached as a certificate.
    """
    if not problem.is_time_problem:
        raise ValueError("horizon search needs a time-optimal problem kind")
    if outer not in ("replay", "native"):
        raise ValueError(f"unknown outer objective {outer!r}")
    lo, hi = float(tf_bracket[0]), float(tf_bracket[1])
    if not 0.0 < lo < hi:
        raise ValueError(f"need 0 < T_lo < T_hi, got ({lo}, {hi})")
    cfg = cfg if cfg is not None else GrapeConfig()
    inner_kind = "mlp_ofs" if problem.is_mlp else "lindblad_ofs"
    tau_m = float(problem.tau_m)
    cache: dict[float, tuple[float, Schedule, OptimizationResult | None, float]] = {}
    warm: dict[float, np.ndarray] = {}

    def probe(T: float):
        key = round(float(T), 12)
        if key in cache:
            return cache[key]
        if linear_baseline:
            sub = replace(problem, kind=inner_kind, T_f=key, initial_schedule=None)
            sched = sub.make_schedule(sub.starting_values())
            result = None
            fid = _replay_fidelity(problem.instance, sched, max_step=max_step)
        else:
            init = None
            if warm:
                t_ref = min(warm, key=lambda x: abs(x - key))
                init = Schedule(np.linspace(0.0, key, problem.grid_size), warm[t_ref])
            sub = replace(problem, kind=inner_kind, T_f=key, initial_schedule=init)
            result = nesterov_grape(sub, cfg, max_step=max_step)
            sched = result.schedule
            warm[key] = np.array(sched.values)
            fid = result.final_fidelity
        if outer == "native" and problem.is_mlp:
            sub_ot = replace(problem, T_f=key, initial_schedule=None)
            obj = adjoint_pass_cdj(
                sub_ot, sched, max_step=max_step,
                running_cost_weight=cfg.cdj_running_cost_weight,
            ).cost
        else:
            obj = math.log(key + tau_m) - math.log(fid) if fid > 0 else math.inf
        cache[key] = (obj, sched, result, fid)
        return cache[key]

    probe(lo)
    probe(hi)
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = probe(x1)[0]
    f2 = probe(x2)[0]
    while (b - a) > tf_tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = probe(x1)[0]
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = probe(x2)[0]

    t_star = min(cache, key=lambda k: cache[k][0])
    if t_star <= lo + tf_tol or t_star >= hi - tf_tol:
        warnings.warn(
            f"log TTS has no interior minimum in [{lo}, {hi}]; returning the bracket boundary",
            stacklevel=2,
        )
    _, sched, result, fid = cache[t_star]
    if result is None:
        result = OptimizationResult(
            schedule=sched,
            cost_history=np.zeros(0),
            gradient_norm_history=np.zeros(0),
            final_fidelity=fid,
            optimal_readouts=None,
            converged=True,
            iterations_used=0,
        )
    prob_star = replace(problem, T_f=t_star, initial_schedule=None)
    result.tf_residual = tf_stationarity(
        prob_star, result, running_cost_weight=cfg.cdj_running_cost_weight
    )
    return float(t_star), result


# ---------------------------------------------------------------------------
# comparison metrics


def relative_speedup(tts_opt: float, tts_linear: float) -> float:
    """Ratio of optimized to linear-schedule time-to-solution (< 1 = faster)."""
    if not (tts_opt > 0 and tts_linear > 0):
        raise ValueError(f"TTS values must be positive, got {tts_opt} and {tts_linear}")
    return float(tts_opt) / float(tts_linear)


def schedule_distance(schedules: Sequence[Schedule]) -> float:
    """Mean pairwise l2 distance between single-track schedules on one grid.

    Averages ||theta_i - theta_j||_l2 over all ordered pairs, with the squared
    norm integrated by the trapezoid rule on the shared grid.
    """
    scheds = list(schedules)
    if len(scheds) < 2:
        raise ValueError("need at least two schedules")
    t = scheds[0].times
    for s in scheds[1:]:
        if s.times.shape != t.shape or not np.allclose(
            s.times, t, rtol=0.0, atol=1e-12 * max(1.0, float(t[-1]))
        ):
            raise ValueError("schedules must share one grid")
    vals = []
    for s in scheds:
        if s.per_qubit:
            raise ValueError("per-qubit schedule passed; split it into per-track schedules")
        vals.append(s.values)
    dt = np.diff(t)
    total = 0.0
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            f2 = (vals[i] - vals[j]) ** 2
            total += 2.0 * math.sqrt(float(np.sum(0.5 * dt * (f2[:-1] + f2[1:]))))
    n = len(vals)
    return total / (n * (n - 1))


def split_per_qubit(schedule: Schedule) -> list[Schedule]:
    """One single-track Schedule per angle track of a per-qubit schedule."""
    if not schedule.per_qubit:
        raise ValueError("schedule has a single shared track")
    return [
        Schedule(schedule.times, schedule.values[:, i].copy())
        for i in range(schedule.values.shape[1])
    ]
