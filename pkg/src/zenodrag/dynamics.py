"""Measurement dynamics: discrete Kraus slices, the averaged channel, the
clause-averaged master equation, and diffusive conditioned trajectories.

Readout conventions
-------------------
A single clause measured for a slice dt at characteristic time tau produces a
continuous readout r drawn from a two-Gaussian mixture: weight Tr(P rho) at
mean -1/sqrt(tau), weight 1 - Tr(P rho) at mean +1/sqrt(tau), variance 1/dt
each.  Averaging the conditional update over r contracts the coherences
between the projector's eigenspaces by 1 - beta, beta = 1 - exp(-dt/2tau).

With m clauses sharing the measurement budget (rate_share "per_clause"), each
channel runs at characteristic time m*tau.  The diffusive limit keeps the
readout scale of the single-channel convention,

    r_a dt = (2/sqrt(tau)) Tr(P_a rho) dt + dW_a,

which prices each channel's Wiener increment at variance m*dt; this is the
normalization under which averaging the conditioned trajectories reproduces
the unconditional master equation exactly.  rate_share "parallel" instead runs
every channel at full strength (m' = 1), where dW has the plain variance dt.

The trajectory integrator is a Stratonovich-consistent midpoint (Heun) scheme;
the per-step readout is frozen across the predictor and corrector stages so a
stored readout record replays the identical trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .operators import ProjectorSet, projector_set, solution_basis_projector
from .sat import SatInstance
from .seeding import substream

TRACE_TOL = 1e-6


@dataclass(frozen=True)
class MeasurementConfig:
    """Slice duration dt and characteristic measurement time tau, in shared units."""

    dt: float
    tau: float = 1.0
    rate_share: str = "per_clause"  # or "parallel"

    def __post_init__(self) -> None:
        if self.dt < 0 or self.tau <= 0:
            raise ValueError(f"need dt >= 0 and tau > 0, got dt={self.dt}, tau={self.tau}")
        if self.rate_share not in ("per_clause", "parallel"):
            raise ValueError(f"unknown rate_share {self.rate_share!r}")

    def share(self, n_clauses: int) -> int:
        """Effective channel count m' dividing the measurement rate."""
        return n_clauses if self.rate_share == "per_clause" else 1

    @property
    def beta(self) -> float:
        """Coherence contraction per slice, 1 - exp(-dt/2tau)."""
        return -np.expm1(-self.dt / (2.0 * self.tau))


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant measurement-axis schedule on a time grid.

    values has one row per grid point: shape (K,) for a globally shared angle
    or (K, n) for per-qubit angles.  Interpolation is piecewise-constant-left;
    the value at exactly t = T_f is the last row, which never enters the
    dynamics (the last interval is governed by row K-2).
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need at least two grid times")
        if np.any(np.diff(times) <= 0):
            raise ValueError("grid times must be strictly increasing")
        if abs(times[0]) > 1e-15:
            raise ValueError("schedule must start at t = 0")
        if values.shape[0] != times.size:
            raise ValueError("one value row per grid time required")
        if values.ndim not in (1, 2):
            raise ValueError("values must be 1-D (global) or 2-D (per qubit)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def per_qubit(self) -> bool:
        return self.values.ndim == 2

    def axis_rows(self, n: int) -> np.ndarray:
        """Values as a (K, n) per-qubit array."""
        if self.per_qubit:
            if self.values.shape[1] != n:
                raise ValueError(
                    f"schedule has {self.values.shape[1]} tracks, expected {n}"
                )
            return self.values
        return np.repeat(self.values[:, None], n, axis=1)

    def axis_at(self, t: float, n: int) -> np.ndarray:
        rows = self.axis_rows(n)
        j = int(np.searchsorted(self.times, t, side="right") - 1)
        j = min(max(j, 0), len(self.times) - 1)
        if j == len(self.times) - 1 and t >= self.times[-1]:
            return rows[-1]
        return rows[j]

    def interval_index(self, j: int) -> tuple[float, float]:
        return float(self.times[j]), float(self.times[j + 1])

    @staticmethod
    def linear(
        duration: float,
        n_points: int = 200,
        theta_start: float = 0.0,
        theta_end: float = np.pi / 2,
    ) -> "Schedule":
        times = np.linspace(0.0, duration, n_points)
        values = np.linspace(theta_start, theta_end, n_points)
        return Schedule(times, values)

    @staticmethod
    def constant(theta, duration: float, n_points: int = 2) -> "Schedule":
        times = np.linspace(0.0, duration, n_points)
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 0:
            values = np.full(n_points, float(theta))
        else:
            values = np.repeat(theta[None, :], n_points, axis=0)
        return Schedule(times, values)


def check_density_matrix(rho: np.ndarray, tol: float = 1e-8) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise ValueError("density matrix not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ValueError(f"trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -tol:
        raise ValueError("density matrix not positive semidefinite")


def symmetric_product_state(n: int) -> np.ndarray:
    """|+...+><+...+|, the ground state of every instance at axis 0."""
    d = 1 << n
    psi = np.full(d, 1.0 / np.sqrt(d), dtype=np.complex128)
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# single-clause Kraus slice


def kraus_operator(P: np.ndarray, r: float, config: MeasurementConfig) -> np.ndarray:
    """Measurement operator for readout r on one clause projector."""
    dt, tau = config.dt, config.tau
    u = 1.0 / np.sqrt(tau)
    pref = (dt / (2.0 * np.pi)) ** 0.25
    eye = np.eye(P.shape[0], dtype=np.complex128)
    return pref * (
        np.exp(-(dt / 4.0) * (r + u) ** 2) * P
        + np.exp(-(dt / 4.0) * (r - u) ** 2) * (eye - P)
    )


def readout_mixture_cdf(r, weight: float, config: MeasurementConfig):
    """CDF of the slice readout for occupation weight = Tr(P rho)."""
    from scipy.stats import norm

    sigma = 1.0 / np.sqrt(config.dt)
    u = 1.0 / np.sqrt(config.tau)
    return weight * norm.cdf(r, loc=-u, scale=sigma) + (1.0 - weight) * norm.cdf(
        r, loc=u, scale=sigma
    )


def sample_measurement(
    rho: np.ndarray,
    P: np.ndarray,
    config: MeasurementConfig,
    rng: np.random.Generator,
) -> tuple[float, np.ndarray]:
    """Draw one slice readout and return (r, conditioned post-state)."""
    if config.dt <= 0:
        raise ValueError("sampling needs dt > 0")
    weight = float(np.trace(P @ rho).real)
    weight = min(max(weight, 0.0), 1.0)
    u = 1.0 / np.sqrt(config.tau)
    sigma = 1.0 / np.sqrt(config.dt)
    mean = -u if rng.random() < weight else u
    r = float(rng.normal(loc=mean, scale=sigma))
    M = kraus_operator(P, r, config)
    post = M @ rho @ M.conj().T
    norm = np.trace(post).real
    if norm <= 0:
        raise FloatingPointError("measurement update produced non-normalizable state")
    post /= norm
    return r, 0.5 * (post + post.conj().T)


def averaged_channel(
    rho: np.ndarray, pset: ProjectorSet, config: MeasurementConfig
) -> np.ndarray:
    """Readout- and clause-averaged slice update.

    T(rho) = rho + (2 beta / m') sum_a [P_a rho P_a - (P_a rho + rho P_a)/2].
    """
    share = config.share(pset.n_clauses)
    P = pset.projectors
    PrP = np.einsum("aij,jk,akl->il", P, rho, P, optimize=True)
    Pr = np.einsum("aij,jk->ik", P, rho, optimize=True)
    out = rho + (2.0 * config.beta / share) * (PrP - 0.5 * (Pr + Pr.conj().T))
    return 0.5 * (out + out.conj().T)


# ---------------------------------------------------------------------------
# clause-averaged master equation


def lindblad_rhs(
    rho: np.ndarray, pset: ProjectorSet, tau: float, share: int
) -> np.ndarray:
    """(1/(m' tau)) sum_a [P_a rho P_a - (P_a rho + rho P_a)/2]."""
    P = pset.projectors
    PrP = np.einsum("aij,jk,akl->il", P, rho, P, optimize=True)
    Pr = np.einsum("aij,jk->ik", P, rho, optimize=True)
    return (PrP - 0.5 * (Pr + Pr.conj().T)) / (share * tau)


@dataclass
class LindbladResult:
    times: np.ndarray
    fidelities: np.ndarray
    purities: np.ndarray
    final_state: np.ndarray
    states: list[np.ndarray] | None = None


def _lindblad_step_plan(schedule: Schedule, tau: float, share: int, max_step):
    """Substep sizes per schedule interval: resolve both tau and the grid."""
    if max_step is None:
        max_step = min(0.01 * tau, schedule.duration / 1000.0)
    max_step = min(max_step, 0.1 * tau / share)
    plan = []
    for j in range(len(schedule.times) - 1):
        t0, t1 = schedule.interval_index(j)
        n_sub = max(1, int(np.ceil((t1 - t0) / max_step - 1e-12)))
        plan.append((j, t0, (t1 - t0) / n_sub, n_sub))
    return plan


def evolve_lindblad(
    instance: SatInstance,
    schedule: Schedule,
    config: MeasurementConfig,
    rho0: np.ndarray | None = None,
    target: np.ndarray | None = None,
    max_step: float | None = None,
    keep_states: bool = False,
) -> LindbladResult:
    """Integrate the clause-averaged master equation along a schedule (RK4).

    Fidelity is reported against `target` (default: the solution-basis
    projector) at every substep.  Aborts if the trace drifts beyond tolerance.
    """
    n = instance.n_vars
    rho = symmetric_product_state(n) if rho0 is None else np.array(rho0, dtype=complex)
    check_density_matrix(rho)
    if target is None:
        target = solution_basis_projector(instance)
    share = config.share(instance.n_clauses)
    tau = config.tau
    rows = schedule.axis_rows(n)
    times = [0.0]
    fids = [float(np.trace(target @ rho).real)]
    purs = [float(np.trace(rho @ rho).real)]
    states = [rho.copy()] if keep_states else None
    t = 0.0
    for j, t0, h, n_sub in _lindblad_step_plan(schedule, tau, share, max_step):
        pset = projector_set(instance, rows[j])
        for _ in range(n_sub):
            k1 = lindblad_rhs(rho, pset, tau, share)
            k2 = lindblad_rhs(rho + 0.5 * h * k1, pset, tau, share)
            k3 = lindblad_rhs(rho + 0.5 * h * k2, pset, tau, share)
            k4 = lindblad_rhs(rho + h * k3, pset, tau, share)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            rho = 0.5 * (rho + rho.conj().T)
            tr = np.trace(rho).real
            if abs(tr - 1.0) > TRACE_TOL:
                raise FloatingPointError(f"trace drifted to {tr} at t={t}")
            t += h
            times.append(t)
            fids.append(float(np.trace(target @ rho).real))
            purs.append(float(np.trace(rho @ rho).real))
            if keep_states:
                states.append(rho.copy())
    return LindbladResult(
        times=np.array(times),
        fidelities=np.array(fids),
        purities=np.array(purs),
        final_state=rho,
        states=states,
    )


# ---------------------------------------------------------------------------
# conditioned diffusive trajectories


@dataclass
class TrajectoryRecord:
    """One conditioned trajectory: grid, readouts per step, and traces."""

    times: np.ndarray  # (N+1,)
    readouts: np.ndarray  # (N, m)
    fidelities: np.ndarray  # (N+1,)
    purities: np.ndarray  # (N+1,)
    final_state: np.ndarray
    truncated_at: int | None = None  # reserved for post-selection truncation

    @property
    def final_fidelity(self) -> float:
        return float(self.fidelities[-1])


def _sme_grid(schedule: Schedule, tau: float, max_step):
    if max_step is None:
        max_step = min(0.01 * tau, schedule.duration / 1000.0)
    rows: list[int] = []
    steps: list[float] = []
    for j in range(len(schedule.times) - 1):
        t0, t1 = schedule.interval_index(j)
        n_sub = max(1, int(np.ceil((t1 - t0) / max_step - 1e-12)))
        rows.extend([j] * n_sub)
        steps.extend([(t1 - t0) / n_sub] * n_sub)
    return np.array(rows), np.array(steps)


def _sme_batch(
    rho: np.ndarray,  # (B, d, d), modified in place
    schedule: Schedule,
    instance: SatInstance,
    config: MeasurementConfig,
    noise: np.ndarray | None,  # (B, N, m) Wiener increments, or None for replay
    readouts: np.ndarray | None,  # (B, N, m) prescribed readouts for replay
    target: np.ndarray,
    record_traces: bool,
    max_step,
):
    n = instance.n_vars
    m = instance.n_clauses
    share = config.share(m)
    tau = config.tau
    sqrt_tau = np.sqrt(tau)
    c = 1.0 / (share * sqrt_tau)
    rows_idx, steps = _sme_grid(schedule, tau, max_step)
    N = len(steps)
    B = rho.shape[0]
    rows = schedule.axis_rows(n)
    psets = {}
    rec_r = np.empty((B, N, m))
    times = np.concatenate([[0.0], np.cumsum(steps)])
    if record_traces:
        fids = np.empty((B, N + 1))
        purs = np.empty((B, N + 1))
        fids[:, 0] = np.einsum("ij,bji->b", target, rho).real
        purs[:, 0] = np.einsum("bij,bji->b", rho, rho).real
    for k in range(N):
        j = rows_idx[k]
        if j not in psets:
            psets[j] = projector_set(instance, rows[j]).projectors
        P = psets[j]
        h = steps[k]
        occ = np.einsum("aij,bji->ba", P, rho).real
        if readouts is not None:
            r = readouts[:, k, :]
        else:
            r = 2.0 * occ / sqrt_tau + noise[:, k, :] / h
        rec_r[:, k, :] = r
        coef = c * (r - 1.0 / sqrt_tau) * h  # (B, m)

        def increment(state, occ_state):
            PR = np.einsum("aik,bkj->baij", P, state)
            B_op = PR + np.conj(np.transpose(PR, (0, 1, 3, 2)))
            B_op -= 2.0 * state[:, None, :, :] * occ_state[:, :, None, None]
            return np.einsum("ba,baij->bij", coef, B_op)

        inc1 = increment(rho, occ)
        mid = rho + inc1
        occ_mid = np.einsum("aij,bji->ba", P, mid).real
        inc2 = increment(mid, occ_mid)
        rho += 0.5 * (inc1 + inc2)
        rho += np.conj(np.transpose(rho, (0, 2, 1)))
        rho *= 0.5
        tr = np.einsum("bii->b", rho).real
        if np.abs(tr - 1.0).max() > TRACE_TOL:
            raise FloatingPointError("trace left tolerance band during trajectory")
        rho /= tr[:, None, None]
        if record_traces:
            fids[:, k + 1] = np.einsum("ij,bji->b", target, rho).real
            purs[:, k + 1] = np.einsum("bij,bji->b", rho, rho).real
    out = {"times": times, "readouts": rec_r, "steps": steps}
    if record_traces:
        out["fidelities"] = fids
        out["purities"] = purs
    return out


def evolve_trajectory(
    instance: SatInstance,
    schedule: Schedule,
    config: MeasurementConfig,
    rng: np.random.Generator | None = None,
    rho0: np.ndarray | None = None,
    readouts: np.ndarray | None = None,
    target: np.ndarray | None = None,
    max_step: float | None = None,
) -> TrajectoryRecord:
    """One conditioned diffusive trajectory (Heun midpoint scheme).

    With `readouts` the stored record is replayed deterministically; otherwise
    readouts are sampled from the rng.  The per-channel Wiener increments
    carry variance m'*step (see the module docstring).
    """
    n = instance.n_vars
    rho = symmetric_product_state(n) if rho0 is None else np.array(rho0, dtype=complex)
    check_density_matrix(rho)
    if target is None:
        target = solution_basis_projector(instance)
    rows_idx, steps = _sme_grid(schedule, config.tau, max_step)
    m = instance.n_clauses
    share = config.share(m)
    if readouts is None:
        if rng is None:
            raise ValueError("need an rng when readouts are not prescribed")
        noise = rng.normal(size=(1, len(steps), m)) * np.sqrt(share * steps)[None, :, None]
        given = None
    else:
        readouts = np.asarray(readouts, dtype=float)
        if readouts.shape != (len(steps), m):
            raise ValueError(
                f"readouts shape {readouts.shape} != expected {(len(steps), m)}"
            )
        noise = None
        given = readouts[None, :, :]
    batch = rho[None, :, :].copy()
    out = _sme_batch(
        batch, schedule, instance, config, noise, given, target,
        record_traces=True, max_step=max_step,
    )
    return TrajectoryRecord(
        times=out["times"],
        readouts=out["readouts"][0],
        fidelities=out["fidelities"][0],
        purities=out["purities"][0],
        final_state=batch[0],
    )


@dataclass
class EnsembleResult:
    """Reduced ensemble of conditioned trajectories (final-time data only)."""

    n_shots: int
    final_fidelities: np.ndarray  # (S,)
    mean_final_state: np.ndarray
    se_final_state: np.ndarray  # entrywise standard error, complex (re + i*im)


def simulate_ensemble(
    instance: SatInstance,
    schedule: Schedule,
    config: MeasurementConfig,
    shots: int,
    seed: int,
    rho0: np.ndarray | None = None,
    target: np.ndarray | None = None,
    max_step: float | None = None,
    chunk: int = 512,
) -> EnsembleResult:
    """Embarrassingly parallel trajectory ensemble with per-shot substreams.

    Shot i draws its noise from substream(seed, i), so results are
    reproducible shot-by-shot regardless of chunking.
    """
    n = instance.n_vars
    d = 1 << n
    base = symmetric_product_state(n) if rho0 is None else np.asarray(rho0, dtype=complex)
    if target is None:
        target = solution_basis_projector(instance)
    rows_idx, steps = _sme_grid(schedule, config.tau, max_step)
    m = instance.n_clauses
    share = config.share(m)
    scale = np.sqrt(share * steps)
    fids = np.empty(shots)
    s1 = np.zeros((d, d), dtype=complex)
    s2 = np.zeros((d, d), dtype=complex)  # accumulates re^2 + i*im^2
    done = 0
    while done < shots:
        B = min(chunk, shots - done)
        noise = np.empty((B, len(steps), m))
        for b in range(B):
            g = substream(seed, done + b)
            noise[b] = g.normal(size=(len(steps), m))
        noise *= scale[None, :, None]
        batch = np.repeat(base[None, :, :], B, axis=0).astype(complex)
        _sme_batch(
            batch, schedule, instance, config, noise, None, target,
            record_traces=False, max_step=max_step,
        )
        fids[done : done + B] = np.einsum("ij,bji->b", target, batch).real
        s1 += batch.sum(axis=0)
        s2 += (batch.real**2).sum(axis=0) + 1j * (batch.imag**2).sum(axis=0)
        done += B
    mean = s1 / shots
    var_re = np.maximum(s2.real / shots - mean.real**2, 0.0)
    var_im = np.maximum(s2.imag / shots - mean.imag**2, 0.0)
    se = np.sqrt(var_re / shots) + 1j * np.sqrt(var_im / shots)
    return EnsembleResult(
        n_shots=shots,
        final_fidelities=fids,
        mean_final_state=mean,
        se_final_state=se,
    )


@dataclass(frozen=True)
class EnsembleStats:
    n_shots: int
    mean_fidelity: float
    var_fidelity: float
    se_mean: float
    cutoff: float | None = None
    post_selected_mean: float | None = None
    post_selected_fraction: float | None = None
    post_selected_se: float | None = None


def ensemble_statistics(
    records: Sequence[TrajectoryRecord] | Iterable[float] | np.ndarray,
    cutoff: float | None = None,
) -> EnsembleStats:
    """Summary statistics over final fidelities, optionally post-selected.

    Accepts trajectory records or a plain array of final fidelities.  With a
    cutoff, shots below it are discarded from the post-selected statistics
    (the unconditioned statistics are always reported).
    """
    vals = np.array(
        [r.final_fidelity if isinstance(r, TrajectoryRecord) else float(r) for r in records]
    )
    if vals.size == 0:
        raise ValueError("no trajectories")
    mean = float(vals.mean())
    var = float(vals.var(ddof=1)) if vals.size > 1 else 0.0
    se = float(np.sqrt(var / vals.size)) if vals.size > 1 else 0.0
    stats = {
        "n_shots": int(vals.size),
        "mean_fidelity": mean,
        "var_fidelity": var,
        "se_mean": se,
    }
    if cutoff is not None:
        kept = vals[vals >= cutoff]
        frac = kept.size / vals.size
        if kept.size > 1:
            pmean = float(kept.mean())
            pse = float(kept.std(ddof=1) / np.sqrt(kept.size))
        elif kept.size == 1:
            pmean, pse = float(kept[0]), 0.0
        else:
            pmean, pse = float("nan"), float("nan")
        stats.update(
            cutoff=cutoff,
            post_selected_mean=pmean,
            post_selected_fraction=frac,
            post_selected_se=pse,
        )
    return EnsembleStats(**stats)


def evolve_kraus_shot(
    instance: SatInstance,
    schedule: Schedule,
    config: MeasurementConfig,
    rng: np.random.Generator,
    rho0: np.ndarray | None = None,
    target: np.ndarray | None = None,
) -> TrajectoryRecord:
    """Finite-slice protocol: one uniformly random clause measured per slice dt."""
    if config.dt <= 0:
        raise ValueError("kraus-mode evolution needs dt > 0")
    n = instance.n_vars
    rho = symmetric_product_state(n) if rho0 is None else np.array(rho0, dtype=complex)
    if target is None:
        target = solution_basis_projector(instance)
    n_steps = max(1, int(round(schedule.duration / config.dt)))
    times = [0.0]
    fids = [float(np.trace(target @ rho).real)]
    purs = [float(np.trace(rho @ rho).real)]
    readouts = np.full((n_steps, instance.n_clauses), np.nan)
    rows = schedule.axis_rows(n)
    for k in range(n_steps):
        t = k * config.dt
        j = int(np.searchsorted(schedule.times, t, side="right") - 1)
        j = min(max(j, 0), len(schedule.times) - 2)
        pset = projector_set(instance, rows[j])
        a = int(rng.integers(instance.n_clauses))
        r, rho = sample_measurement(rho, pset.projectors[a], config, rng)
        readouts[k, a] = r
        times.append(t + config.dt)
        fids.append(float(np.trace(target @ rho).real))
        purs.append(float(np.trace(rho @ rho).real))
    return TrajectoryRecord(
        times=np.array(times),
        readouts=readouts,
        fidelities=np.array(fids),
        purities=np.array(purs),
        final_state=rho,
    )
