"""Command-line driver: seeded experiments with CSV/JSON outputs and manifests.

Every run resolves its parameters from subcommand defaults, then an optional
flat JSON config file, then explicit flags (flags win), and writes its data
files next to a RunManifest JSON that echoes the fully resolved configuration.
Re-running with a manifest as the config file reproduces the data files
byte-identically: all randomness flows through counter-split substreams of the
explicit seed, reductions are order independent, and wall-clock timings live
only in the manifest, never in the data files.

Exit codes: 0 success, 2 usage errors (unknown flags, bad subcommands),
3 unreadable or unwritable files, 4 parameter violations, 5 numerical
failures.  The output directory honours ZENODRAG_OUTDIR unless --outdir is
given explicitly; no other parameter reads the environment.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import corollary_time, execute_plan, plan_linear_drag
from .control import (
    KINDS,
    ControlProblem,
    GrapeConfig,
    nesterov_grape,
    optimize_tf,
    relative_speedup,
    schedule_distance,
    split_per_qubit,
)
from .dynamics import (
    MeasurementConfig,
    Schedule,
    ensemble_statistics,
    evolve_kraus_shot,
    evolve_lindblad,
    simulate_ensemble,
)
from .operators import cost_operator, spectral_gap
from .qubit import (
    QubitDragSpec,
    gamma_from_tau,
    lindblad_schedule,
    mlp_schedule,
    optimal_cost,
    solve_phi_tf,
)
from .sat import (
    SatInstance,
    enumerate_solutions,
    parse_dimacs,
    random3sat,
    render_dimacs,
    ring2sat,
    single_solution_ring,
)
from .seeding import substream

OUTDIR_ENV = "ZENODRAG_OUTDIR"
UNITS_NOTE = "# units: time in tau, angles in radians"

# Three-variable study pair for the per-qubit schedule experiments.  The
# first instance pins variable 3 to False while tying variables 1 and 2 to
# each other (solutions FFF and TTF), so its variables play visibly
# different roles and the per-qubit optima keep a nonzero mutual distance.
# The second chains the variables into a symmetric implication ring
# (solutions FFF and TTT), so the per-qubit optima coincide and the
# distance can be driven toward zero.
STUDY_INSTANCE_1 = SatInstance(
    3,
    (
        ((1, True), (3, False)),
        ((1, False), (3, False)),
        ((1, True), (2, False)),
        ((1, False), (2, True)),
    ),
)
STUDY_INSTANCE_2 = SatInstance(
    3,
    (
        ((1, True), (2, False)),
        ((2, True), (3, False)),
        ((1, False), (3, True)),
    ),
)

FIGURES = ("fig3", "fig4", "fig5", "fig6")


class FileError(Exception):
    """Unreadable, unwritable, or unparseable file."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved parameters of one run; the seed is always explicit."""

    subcommand: str
    params: dict

    def as_manifest_dict(self) -> dict:
        return dict(self.params)


@dataclass
class RunManifest:
    """Record of one run: config echo, code version, outputs, summary, timings.

    The config echo alone is enough to re-run the command bit-identically:
    ``zenodrag <subcommand> --config <manifest.json>`` unwraps the echo.
    """

    subcommand: str
    config: dict
    code_version: str = __version__
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        payload = {
            "subcommand": self.subcommand,
            "config": self.config,
            "code_version": self.code_version,
            "outputs": self.outputs,
            "summary": self.summary,
            "timings": self.timings,
        }
        try:
            path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        except OSError as err:
            raise FileError(f"cannot write manifest {path}: {err}") from err


# ---------------------------------------------------------------------------
# output helpers


def _jsonify(value):
    if isinstance(value, dict):
        return {str(k): _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonify(v) for v in np.asarray(value).tolist()] if isinstance(
            value, np.ndarray
        ) else [_jsonify(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)  # JSON has no inf/nan
    return value


def _write_csv(path: Path, columns, rows, fmts=None, note: str = UNITS_NOTE) -> None:
    """CSV with a units comment line, a header row, and %.17g floats."""
    if fmts is None:
        fmts = ["%.17g"] * len(columns)
    lines = [note, ",".join(columns)]
    for row in rows:
        lines.append(",".join(f % v for f, v in zip(fmts, row)))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as err:
        raise FileError(f"cannot write {path}: {err}") from err


def _write_json(path: Path, payload: dict) -> None:
    try:
        path.write_text(json.dumps(_jsonify(payload), indent=2, sort_keys=True) + "\n")
    except OSError as err:
        raise FileError(f"cannot write {path}: {err}") from err


def _read_schedule_csv(path: Path) -> Schedule:
    try:
        text = path.read_text()
    except OSError as err:
        raise FileError(f"cannot read schedule file {path}: {err}") from err
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise FileError(f"schedule file {path} has no header row")
    header = [c.strip() for c in lines[0].split(",")]
    if not header or header[0] != "t" or len(header) < 2:
        raise FileError(f"schedule file {path} must have columns t,theta[_i...]")
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    except ValueError as err:
        raise FileError(f"schedule file {path} has non-numeric data: {err}") from err
    if data.ndim != 2 or data.shape[1] != len(header) or data.shape[0] < 2:
        raise FileError(f"schedule file {path} rows do not match its header")
    values = data[:, 1] if data.shape[1] == 2 else data[:, 1:]
    return Schedule(data[:, 0], values)


def _schedule_rows(schedule: Schedule) -> tuple[list, list]:
    if schedule.per_qubit:
        n = schedule.values.shape[1]
        cols = ["t"] + [f"theta_{i + 1}" for i in range(n)]
        rows = [[t, *vals] for t, vals in zip(schedule.times, schedule.values)]
    else:
        cols = ["t", "theta"]
        rows = [[t, v] for t, v in zip(schedule.times, schedule.values)]
    return cols, rows


# ---------------------------------------------------------------------------
# shared parameter handling


def _make_family(family: str, n: int, seed: int) -> SatInstance:
    if family == "ring2sat":
        return ring2sat(n)
    if family == "single_solution_ring":
        return single_solution_ring(n)
    if family == "random3sat":
        return random3sat(n, seed)
    raise ValueError(
        f"unknown instance family {family!r}; pick one of "
        "ring2sat, single_solution_ring, random3sat"
    )


def _load_instance(params: dict) -> SatInstance:
    src = params.get("instance")
    if src:
        path = Path(src)
        try:
            text = path.read_text()
        except OSError as err:
            raise FileError(f"cannot read instance file {path}: {err}") from err
        try:
            return parse_dimacs(text)
        except ValueError as err:
            raise FileError(f"cannot parse DIMACS file {path}: {err}") from err
    family = params.get("family")
    if not family:
        raise ValueError("provide --instance FILE or --family NAME with --n")
    n = params.get("n")
    if n is None:
        raise ValueError("--family needs --n")
    return _make_family(str(family), int(n), int(params.get("seed", 0)))


def _resolve_schedule(params: dict) -> Schedule:
    src = str(params["schedule"])
    if src == "linear":
        return Schedule.linear(float(params["T_f"]), int(params["grid"]))
    return _read_schedule_csv(Path(src))


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ValueError(f"{what} must be LO,HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_n_range(text: str) -> list[int]:
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        out = list(range(int(lo), int(hi) + 1))
        if not out:
            raise ValueError(f"empty variable-count range {text!r}")
        return out
    return [int(text)]


def _resolve_clamp(params: dict) -> tuple[float, float] | None:
    clamp_text = str(params.get("clamp", "default"))
    if clamp_text == "none":
        return None
    if clamp_text == "default":
        return (0.0, math.pi / 2.0)
    return _parse_pair(clamp_text, "--clamp")


def _grape_config(params: dict) -> GrapeConfig:
    return GrapeConfig(
        learning_rate=float(params["learning_rate"]),
        momentum=float(params["momentum"]),
        max_iters=int(params["max_iters"]),
        grad_tol=float(params["grad_tol"]),
        theta_clamp=_resolve_clamp(params),
        cdj_running_cost_weight=float(params["running_cost_weight"]),
    )


def _control_problem(params: dict, instance: SatInstance, rng_tag: int = 11) -> ControlProblem:
    """Control problem from resolved params, optionally with a perturbed start.

    A nonzero init_perturb adds seeded Gaussian noise to the default starting
    angles (then clips into the clamp window so the optimizer accepts it);
    used to break per-qubit symmetry on purpose.
    """
    tau_m = params.get("tau_m")
    prob = ControlProblem(
        kind=str(params["kind"]),
        instance=instance,
        T_f=float(params["T_f"]),
        grid_size=int(params["grid_size"]),
        tau_m=None if tau_m is None else float(tau_m),
        per_qubit=bool(params.get("per_qubit", False)),
    )
    amp = float(params.get("init_perturb", 0.0))
    if amp == 0.0:
        return prob
    rng = substream(int(params.get("seed", 0)), rng_tag)
    vals = prob.starting_values()
    vals = vals + amp * rng.normal(size=np.shape(vals))
    clamp = _resolve_clamp(params)
    if clamp is not None:
        vals = np.clip(vals, clamp[0], clamp[1])
    vals[-1] = vals[-2]
    return replace(prob, initial_schedule=prob.make_schedule(vals))


def _tracked_grape(
    problem: ControlProblem, cfg: GrapeConfig, every: int
):
    """GRAPE with the mean inter-qubit schedule distance recorded every few steps.

    Runs the optimizer in warm-restarted chunks (momentum resets at each
    checkpoint; the run stays deterministic) and returns the final result with
    concatenated histories plus (iteration, distance) checkpoint rows.
    """
    dist = lambda sched: schedule_distance(split_per_qubit(sched))
    rows = [(0, dist(problem.make_schedule(problem.starting_values())))]
    total = cfg.max_iters
    done = 0
    cost_h: list[float] = []
    gnorm_h: list[float] = []
    cur = problem
    result = None
    while done < total:
        step = min(every, total - done)
        res = nesterov_grape(cur, replace(cfg, max_iters=step))
        cost_h.extend(res.cost_history.tolist())
        gnorm_h.extend(res.gradient_norm_history.tolist())
        done += res.iterations_used
        rows.append((done, dist(res.schedule)))
        result = res
        if res.converged or res.iterations_used < step:
            break
        cur = replace(problem, initial_schedule=res.schedule)
    result = replace(
        result,
        cost_history=np.asarray(cost_h),
        gradient_norm_history=np.asarray(gnorm_h),
        iterations_used=done,
    )
    return result, rows


# ---------------------------------------------------------------------------
# subcommand defaults (also the schema for config files)

HALF_PI = math.pi / 2.0

DEFAULTS: dict[str, dict] = {
    "gen": {
        "family": "single_solution_ring",
        "n": 2,
        "seed": 0,
        "output": None,
    },
    "spectrum": {
        "instance": None,
        "family": "single_solution_ring",
        "n": 2,
        "seed": 0,
        "points": 101,
        "theta_min": 0.0,
        "theta_max": HALF_PI,
        "outdir": ".",
    },
    "drag": {
        "instance": None,
        "family": "single_solution_ring",
        "n": 2,
        "seed": 0,
        "schedule": "linear",
        "T_f": 2.0,
        "grid": 201,
        "mode": "lindblad",
        "dt": 0.01,
        "tau": 1.0,
        "shots": 16,
        "cutoff": None,
        "outdir": ".",
    },
    "plan": {
        "instance": None,
        "family": "single_solution_ring",
        "n": 2,
        "seed": 0,
        "theta_i": 0.1,
        "theta_f": HALF_PI,
        "eps1": 0.05,
        "eps2": 0.05,
        "dt": 0.1,
        "tau": 1.0,
        "large_first_step": False,
        "execute": False,
        "outdir": ".",
    },
    "optimize": {
        "instance": None,
        "family": "single_solution_ring",
        "n": 2,
        "seed": 0,
        "kind": "lindblad_ofs",
        "T_f": 2.0,
        "grid_size": 50,
        "tau_m": None,
        "per_qubit": False,
        "init_perturb": 0.0,
        "learning_rate": 0.3,
        "momentum": 0.9,
        "max_iters": 2000,
        "grad_tol": 1e-6,
        "clamp": "default",
        "running_cost_weight": 1.0,
        "max_step": None,
        "search_tf": False,
        "bracket": "0.2,4.0",
        "tf_tol": 0.01,
        "track_distance_every": 0,
        "outdir": ".",
    },
    "ensemble": {
        "instance": None,
        "family": "single_solution_ring",
        "n": 2,
        "seed": 0,
        "schedule": "linear",
        "T_f": 2.0,
        "grid": 201,
        "dt": 0.01,
        "tau": 1.0,
        "shots": 10000,
        "cutoff": None,
        "chunk": 512,
        "compare_lindblad": True,
        "outdir": ".",
    },
    "qubit-analytic": {
        "phi_i": HALF_PI,
        "phi_f": math.pi,
        "tau": 1.0,
        "gamma": None,
        "T_f": 2.0,
        "points": 201,
        "seed": 0,
        "outdir": ".",
    },
    "speedup": {
        "n": "2..4",
        "family": "single_solution_ring",
        "seed": 0,
        "tau_m": 5.0,
        "grid_size": 33,
        "bracket": "0.4,6.0",
        "tf_tol": 0.02,
        "learning_rate": 0.3,
        "max_iters": 300,
        "mlp_max_iters": 150,
        "grad_tol": 1e-5,
        "inset_3sat": False,
        "inset_tau_m": 2.0,
        "outdir": ".",
    },
    "reproduce": {
        "figure": "fig3",
        "seed": 0,
        "shots": 10000,
        "grid_size": None,
        "max_iters": None,
        "dt": 0.01,
        "track_every": 25,
        "outdir": ".",
    },
}


# ---------------------------------------------------------------------------
# subcommand handlers: (params, outdir) -> (output file names, summary dict)


def _cmd_gen(params: dict, outdir: Path):
    if not params.get("output"):
        raise ValueError("gen needs --output PATH for the DIMACS file")
    instance = _make_family(str(params["family"]), int(params["n"]), int(params["seed"]))
    out = Path(str(params["output"]))
    try:
        out.write_text(render_dimacs(instance))
    except OSError as err:
        raise FileError(f"cannot write {out}: {err}") from err
    n_solutions = (
        len(enumerate_solutions(instance)) if instance.n_vars <= 10 else None
    )
    summary = {
        "n_vars": instance.n_vars,
        "n_clauses": instance.n_clauses,
        "n_solutions": n_solutions,
    }
    return [out.name], summary


def _cmd_spectrum(params: dict, outdir: Path):
    instance = _load_instance(params)
    points = int(params["points"])
    lo, hi = float(params["theta_min"]), float(params["theta_max"])
    if points < 2:
        raise ValueError(f"need at least 2 grid points, got {points}")
    if not (0.0 <= lo < hi <= HALF_PI + 1e-12):
        raise ValueError(f"need 0 <= theta_min < theta_max <= pi/2, got ({lo}, {hi})")
    d = 1 << instance.n_vars
    rows = []
    min_gap, min_theta = math.inf, lo
    for th in np.linspace(lo, hi, points):
        co = cost_operator(instance, float(th))
        rows.append([th, *co.eigenvalues, co.gap])
        if co.gap < min_gap:
            min_gap, min_theta = co.gap, float(th)
    cols = ["theta"] + [f"lambda_{i}" for i in range(d)] + ["gap"]
    _write_csv(outdir / "spectrum.csv", cols, rows)
    summary = {
        "n_vars": instance.n_vars,
        "n_clauses": instance.n_clauses,
        "min_gap": min_gap,
        "theta_at_min_gap": min_theta,
    }
    return ["spectrum.csv"], summary


def _cmd_drag(params: dict, outdir: Path):
    instance = _load_instance(params)
    schedule = _resolve_schedule(params)
    mode = str(params["mode"])
    tau = float(params["tau"])
    seed = int(params["seed"])
    outputs: list[str] = []
    summary: dict = {"mode": mode, "duration": schedule.duration}

    if mode == "lindblad":
        res = evolve_lindblad(instance, schedule, MeasurementConfig(dt=0.0, tau=tau))
        rows = list(zip(res.times, res.fidelities, res.purities))
        _write_csv(outdir / "drag_trace.csv", ["t", "fidelity", "purity"], rows)
        outputs.append("drag_trace.csv")
        summary["final_fidelity"] = float(res.fidelities[-1])
        summary["final_purity"] = float(res.purities[-1])
        return outputs, summary

    shots = int(params["shots"])
    if shots < 1:
        raise ValueError(f"need at least one shot, got {shots}")
    cutoff = params.get("cutoff")
    cutoff = None if cutoff is None else float(cutoff)
    config = MeasurementConfig(dt=float(params["dt"]), tau=tau)
    if mode == "sme":
        ens = simulate_ensemble(instance, schedule, config, shots, seed)
        finals = ens.final_fidelities
    elif mode == "kraus":
        finals = np.empty(shots)
        for s in range(shots):
            rec = evolve_kraus_shot(instance, schedule, config, substream(seed, s))
            finals[s] = rec.final_fidelity
            if s == 0:
                rows = list(zip(rec.times, rec.fidelities, rec.purities))
                _write_csv(outdir / "drag_trace.csv", ["t", "fidelity", "purity"], rows)
                outputs.append("drag_trace.csv")
    else:
        raise ValueError(f"unknown drag mode {mode!r}; pick lindblad, sme, or kraus")

    rows = [[s, f] for s, f in enumerate(finals)]
    _write_csv(outdir / "drag_shots.csv", ["shot", "final_fidelity"], rows, ["%d", "%.17g"])
    outputs.append("drag_shots.csv")
    stats = ensemble_statistics(finals, cutoff)
    summary.update(
        n_shots=stats.n_shots,
        mean_fidelity=stats.mean_fidelity,
        var_fidelity=stats.var_fidelity,
        se_mean=stats.se_mean,
        cutoff=stats.cutoff,
        post_selected_mean=stats.post_selected_mean,
        post_selected_fraction=stats.post_selected_fraction,
        post_selected_se=stats.post_selected_se,
    )
    return outputs, summary


def _cmd_plan(params: dict, outdir: Path):
    instance = _load_instance(params)
    cfg = MeasurementConfig(dt=float(params["dt"]), tau=float(params["tau"]))
    plan = plan_linear_drag(
        instance.n_vars,
        float(params["theta_i"]),
        float(params["theta_f"]),
        float(params["eps1"]),
        float(params["eps2"]),
        cfg,
        lambda th: spectral_gap(instance, th),
        large_first_step=bool(params["large_first_step"]),
    )
    rows = [
        [k, plan.thetas[k], plan.gaps[k], plan.M_per_step[k]] for k in range(plan.N)
    ]
    _write_csv(
        outdir / "plan_steps.csv",
        ["k", "theta_k", "G", "M_k"],
        rows,
        ["%d", "%.17g", "%.17g", "%d"],
    )
    cor_time, cor_ups = corollary_time(plan, cfg)
    payload = {
        "n_vars": plan.n_vars,
        "theta_i": plan.theta_i,
        "theta_f": plan.theta_f,
        "delta_theta": plan.delta_theta,
        "N": plan.N,
        "epsilon1": plan.epsilon1,
        "epsilon2": plan.epsilon2,
        "dt": plan.dt,
        "tau": plan.tau,
        "total_applications": plan.total_applications,
        "total_time": plan.total_time,
        "total_time_uniform": plan.total_time_uniform,
        "upsilon": plan.upsilon,
        "uniform_increments": plan.uniform_increments,
        "corollary_time": cor_time,
        "corollary_upsilon": cor_ups,
    }
    _write_json(outdir / "plan.json", payload)
    outputs = ["plan_steps.csv", "plan.json"]
    summary = {
        "N": plan.N,
        "total_applications": plan.total_applications,
        "total_time": plan.total_time,
        "corollary_time": cor_time,
    }
    if bool(params["execute"]):
        ex = execute_plan(instance, plan, cfg)
        rows = [[k, plan.thetas[k], ex.fidelities[k]] for k in range(plan.N)]
        _write_csv(
            outdir / "plan_execution.csv",
            ["k", "theta_k", "fidelity"],
            rows,
            ["%d", "%.17g", "%.17g"],
        )
        outputs.append("plan_execution.csv")
        summary["final_fidelity"] = ex.final_fidelity
    return outputs, summary


def _cmd_optimize(params: dict, outdir: Path):
    instance = _load_instance(params)
    kind = str(params["kind"])
    if kind not in KINDS:
        raise ValueError(f"unknown problem kind {kind!r}; pick one of {sorted(KINDS)}")
    problem = _control_problem(params, instance)
    cfg = _grape_config(params)
    max_step = params.get("max_step")
    max_step = None if max_step is None else float(max_step)
    every = int(params["track_distance_every"])
    outputs: list[str] = []
    t_star = None
    dist_rows = None

    if bool(params["search_tf"]):
        bracket = _parse_pair(params["bracket"], "--bracket")
        t_star, result = optimize_tf(
            problem, bracket, cfg, tf_tol=float(params["tf_tol"]), max_step=max_step
        )
        T_f_out = t_star
    elif every > 0:
        if not problem.per_qubit:
            raise ValueError("--track-distance-every needs --per-qubit schedules")
        result, dist_rows = _tracked_grape(problem, cfg, every)
        T_f_out = problem.T_f
    else:
        result = nesterov_grape(problem, cfg, max_step=max_step)
        T_f_out = problem.T_f

    cols, rows = _schedule_rows(result.schedule)
    _write_csv(outdir / "optimize_schedule.csv", cols, rows)
    outputs.append("optimize_schedule.csv")

    if result.optimal_readouts is not None:
        m = result.optimal_readouts.shape[0]
        cols = ["t"] + [f"r_{j + 1}" for j in range(m)]
        rows = [
            [t, *r] for t, r in zip(result.schedule.times, result.optimal_readouts.T)
        ]
        _write_csv(outdir / "optimize_readouts.csv", cols, rows)
        outputs.append("optimize_readouts.csv")

    if dist_rows is not None:
        _write_csv(
            outdir / "optimize_distance.csv",
            ["iteration", "dbar"],
            dist_rows,
            ["%d", "%.17g"],
        )
        outputs.append("optimize_distance.csv")

    tau_m = params.get("tau_m")
    tts = None
    if tau_m is not None and result.final_fidelity > 0:
        tts = (float(T_f_out) + float(tau_m)) / result.final_fidelity
    payload = {
        "kind": kind,
        "T_f": float(T_f_out),
        "final_fidelity": result.final_fidelity,
        "final_cost": float(result.cost_history[-1]) if len(result.cost_history) else None,
        "cost_history": result.cost_history,
        "gradient_norm_history": result.gradient_norm_history,
        "converged": result.converged,
        "iterations_used": result.iterations_used,
        "tf_residual": result.tf_residual,
        "t_star": t_star,
        "tts": tts,
    }
    _write_json(outdir / "optimize_result.json", payload)
    outputs.append("optimize_result.json")
    summary = {
        "kind": kind,
        "T_f": float(T_f_out),
        "final_fidelity": result.final_fidelity,
        "converged": result.converged,
        "iterations_used": result.iterations_used,
        "tf_residual": result.tf_residual,
        "t_star": t_star,
        "tts": tts,
    }
    if dist_rows is not None:
        summary["dbar_initial"] = float(dist_rows[0][1])
        summary["dbar_final"] = float(dist_rows[-1][1])
    return outputs, summary


def _cmd_ensemble(params: dict, outdir: Path):
    instance = _load_instance(params)
    schedule = _resolve_schedule(params)
    tau = float(params["tau"])
    config = MeasurementConfig(dt=float(params["dt"]), tau=tau)
    shots = int(params["shots"])
    if shots < 1:
        raise ValueError(f"need at least one shot, got {shots}")
    cutoff = params.get("cutoff")
    cutoff = None if cutoff is None else float(cutoff)
    ens = simulate_ensemble(
        instance, schedule, config, shots, int(params["seed"]), chunk=int(params["chunk"])
    )
    rows = [[s, f] for s, f in enumerate(ens.final_fidelities)]
    _write_csv(
        outdir / "ensemble_shots.csv", ["shot", "final_fidelity"], rows, ["%d", "%.17g"]
    )
    stats = ensemble_statistics(ens.final_fidelities, cutoff)
    summary = {
        "n_shots": stats.n_shots,
        "mean_fidelity": stats.mean_fidelity,
        "var_fidelity": stats.var_fidelity,
        "se_mean": stats.se_mean,
        "cutoff": stats.cutoff,
        "post_selected_mean": stats.post_selected_mean,
        "post_selected_fraction": stats.post_selected_fraction,
        "post_selected_se": stats.post_selected_se,
    }
    if bool(params["compare_lindblad"]):
        lr = evolve_lindblad(instance, schedule, MeasurementConfig(dt=0.0, tau=tau))
        diff = ens.mean_final_state - lr.final_state
        num = np.concatenate([np.abs(diff.real).ravel(), np.abs(diff.imag).ravel()])
        den = np.concatenate(
            [ens.se_final_state.real.ravel(), ens.se_final_state.imag.ravel()]
        )
        mask = den > 0
        summary["lindblad_fidelity"] = float(lr.fidelities[-1])
        summary["max_se_ratio"] = float((num[mask] / den[mask]).max()) if mask.any() else 0.0
        summary["max_abs_residual_zero_se"] = (
            float(num[~mask].max()) if (~mask).any() else 0.0
        )
    _write_json(outdir / "ensemble_summary.json", summary)
    return ["ensemble_shots.csv", "ensemble_summary.json"], summary


def _cmd_qubit_analytic(params: dict, outdir: Path):
    tau = float(params["tau"])
    gamma = params.get("gamma")
    gamma = gamma_from_tau(tau) if gamma is None else float(gamma)
    spec = QubitDragSpec(
        phi_i=float(params["phi_i"]),
        phi_f=float(params["phi_f"]),
        gamma_rate=gamma,
        T_f=float(params["T_f"]),
    )
    points = int(params["points"])
    if points < 2:
        raise ValueError(f"need at least 2 time points, got {points}")
    ts = np.linspace(0.0, spec.T_f, points)
    rows = list(zip(ts, mlp_schedule(spec, ts), lindblad_schedule(spec, ts)))
    _write_csv(outdir / "qubit_analytic.csv", ["t", "theta_mlp", "theta_lindblad"], rows)
    payload = {
        "phi_i": spec.phi_i,
        "phi_f": spec.phi_f,
        "gamma_rate": spec.gamma_rate,
        "T_f": spec.T_f,
        "phi_Tf": solve_phi_tf(spec),
        "J_star": optimal_cost(spec),
    }
    _write_json(outdir / "qubit_analytic.json", payload)
    summary = {"phi_Tf": payload["phi_Tf"], "J_star": payload["J_star"]}
    return ["qubit_analytic.csv", "qubit_analytic.json"], summary


def _speedup_rows(
    ns: list[int],
    family: str,
    seed: int,
    tau_m: float,
    grid_size: int,
    bracket: tuple[float, float],
    tf_tol: float,
    learning_rate: float,
    max_iters: int,
    mlp_max_iters: int,
    grad_tol: float,
):
    """Horizon-optimized TTS of both schedule families against the linear drag."""
    rows = []
    detail: dict = {}
    t_mid = 0.5 * (bracket[0] + bracket[1])
    for n in ns:
        instance = _make_family(family, n, seed)
        base = ControlProblem(
            kind="lindblad_ot", instance=instance, T_f=t_mid,
            grid_size=grid_size, tau_m=tau_m,
        )
        cfg = GrapeConfig(
            learning_rate=learning_rate, max_iters=max_iters, grad_tol=grad_tol
        )
        cfg_mlp = replace(cfg, max_iters=mlp_max_iters)

        t_lin, res_lin = optimize_tf(base, bracket, linear_baseline=True, tf_tol=tf_tol)
        tts_lin = (t_lin + tau_m) / res_lin.final_fidelity
        t_avg, res_avg = optimize_tf(base, bracket, cfg, tf_tol=tf_tol)
        tts_avg = (t_avg + tau_m) / res_avg.final_fidelity
        t_mlp, res_mlp = optimize_tf(
            replace(base, kind="mlp_ot"), bracket, cfg_mlp, tf_tol=tf_tol
        )
        tts_mlp = (t_mlp + tau_m) / res_mlp.final_fidelity

        rows.append(
            [
                n,
                tts_lin,
                tts_avg,
                tts_mlp,
                relative_speedup(tts_avg, tts_lin),
                relative_speedup(tts_mlp, tts_lin),
            ]
        )
        detail[n] = {
            "t_star_linear": t_lin,
            "t_star_lindblad": t_avg,
            "t_star_mlp": t_mlp,
            "fid_linear": res_lin.final_fidelity,
            "fid_lindblad": res_avg.final_fidelity,
            "fid_mlp": res_mlp.final_fidelity,
            "tf_residual_lindblad": res_avg.tf_residual,
            "tf_residual_mlp": res_mlp.tf_residual,
        }
    return rows, detail


SPEEDUP_COLS = ["n", "tts_linear", "tts_lindblad_opt", "tts_mlp_opt", "G_lindblad", "G_mlp"]
SPEEDUP_FMTS = ["%d"] + ["%.17g"] * 5


def _cmd_speedup(params: dict, outdir: Path):
    ns = _parse_n_range(params["n"])
    bracket = _parse_pair(params["bracket"], "--bracket")
    kwargs = dict(
        seed=int(params["seed"]),
        grid_size=int(params["grid_size"]),
        bracket=bracket,
        tf_tol=float(params["tf_tol"]),
        learning_rate=float(params["learning_rate"]),
        max_iters=int(params["max_iters"]),
        mlp_max_iters=int(params["mlp_max_iters"]),
        grad_tol=float(params["grad_tol"]),
    )
    rows, detail = _speedup_rows(
        ns, str(params["family"]), tau_m=float(params["tau_m"]), **kwargs
    )
    _write_csv(outdir / "speedup.csv", SPEEDUP_COLS, rows, SPEEDUP_FMTS)
    outputs = ["speedup.csv"]
    summary: dict = {"detail": detail}
    summary["G_lindblad"] = {r[0]: r[4] for r in rows}
    summary["G_mlp"] = {r[0]: r[5] for r in rows}
    if bool(params["inset_3sat"]):
        rows3, detail3 = _speedup_rows(
            [3], "random3sat", tau_m=float(params["inset_tau_m"]), **kwargs
        )
        _write_csv(outdir / "speedup_3sat.csv", SPEEDUP_COLS, rows3, SPEEDUP_FMTS)
        outputs.append("speedup_3sat.csv")
        summary["detail_3sat"] = detail3
    return outputs, summary


# ---------------------------------------------------------------------------
# figure reproduction pipelines


def _repro_fig3(params: dict, outdir: Path):
    grid = int(params["grid_size"] or 41)
    iters = int(params["max_iters"] or 600)
    instance = single_solution_ring(2)
    sched_rows: list = []
    fid_rows: list = []
    summary: dict = {}
    cfg = GrapeConfig(learning_rate=0.3, max_iters=iters, grad_tol=1e-6)
    for T in (1.0, 2.0, 5.0):
        lin = evolve_lindblad(
            instance, Schedule.linear(T, 201), MeasurementConfig(dt=0.0, tau=1.0)
        )
        fid_rows += [[T, "linear", t, f] for t, f in zip(lin.times, lin.fidelities)]
        finals = {"linear": float(lin.fidelities[-1])}
        for kind in ("lindblad_ofs", "mlp_ofs"):
            prob = ControlProblem(kind=kind, instance=instance, T_f=T, grid_size=grid)
            res = nesterov_grape(prob, cfg)
            sched = res.schedule
            sched_rows += [[T, kind, t, v] for t, v in zip(sched.times, sched.values)]
            replay = evolve_lindblad(
                instance, sched, MeasurementConfig(dt=0.0, tau=1.0)
            )
            fid_rows += [
                [T, kind, t, f] for t, f in zip(replay.times, replay.fidelities)
            ]
            finals[kind] = float(replay.fidelities[-1])
            if kind == "lindblad_ofs":
                finals["theta_start"] = float(sched.values[0])
                finals["theta_end"] = float(sched.values[-1])
        summary[f"tf_{T:g}"] = finals
    _write_csv(
        outdir / "fig3_schedules.csv",
        ["T_f", "kind", "t", "theta"],
        sched_rows,
        ["%.17g", "%s", "%.17g", "%.17g"],
    )
    _write_csv(
        outdir / "fig3_fidelities.csv",
        ["T_f", "kind", "t", "fidelity"],
        fid_rows,
        ["%.17g", "%s", "%.17g", "%.17g"],
    )
    _write_json(outdir / "fig3_summary.json", summary)
    return ["fig3_schedules.csv", "fig3_fidelities.csv", "fig3_summary.json"], summary


def _repro_fig4(params: dict, outdir: Path):
    seed = int(params["seed"])
    shots = int(params["shots"])
    grid = int(params["grid_size"] or 41)
    iters = int(params["max_iters"] or 600)
    dt = float(params["dt"])
    instance = single_solution_ring(2)
    T = 1.0
    cfg = GrapeConfig(learning_rate=0.3, max_iters=iters, grad_tol=1e-6)
    shot_rows: list = []
    summary: dict = {"T_f": T, "cutoff": 0.05, "ensemble_seeds": {}}
    config = MeasurementConfig(dt=dt, tau=1.0)
    for offset, kind in enumerate(("lindblad_ofs", "mlp_ofs")):
        prob = ControlProblem(kind=kind, instance=instance, T_f=T, grid_size=grid)
        res = nesterov_grape(prob, cfg)
        ens = simulate_ensemble(instance, res.schedule, config, shots, seed + offset)
        shot_rows += [[kind, s, f] for s, f in enumerate(ens.final_fidelities)]
        stats = ensemble_statistics(ens.final_fidelities, cutoff=0.05)
        summary["ensemble_seeds"][kind] = seed + offset
        summary[kind] = {
            "lindblad_final_fidelity": res.final_fidelity,
            "mean_fidelity": stats.mean_fidelity,
            "var_fidelity": stats.var_fidelity,
            "se_mean": stats.se_mean,
            "post_selected_mean": stats.post_selected_mean,
            "post_selected_fraction": stats.post_selected_fraction,
            "post_selected_se": stats.post_selected_se,
        }
    a, b = summary["mlp_ofs"], summary["lindblad_ofs"]
    summary["post_selection_z"] = (a["post_selected_mean"] - b["post_selected_mean"]) / math.sqrt(
        a["post_selected_se"] ** 2 + b["post_selected_se"] ** 2
    )
    _write_csv(
        outdir / "fig4_shots.csv",
        ["kind", "shot", "final_fidelity"],
        shot_rows,
        ["%s", "%d", "%.17g"],
    )
    _write_json(outdir / "fig4_summary.json", summary)
    return ["fig4_shots.csv", "fig4_summary.json"], summary


def _repro_fig5(params: dict, outdir: Path):
    seed = int(params["seed"])
    grid = int(params["grid_size"] or 33)
    iters = int(params["max_iters"] or 300)
    kwargs = dict(
        seed=seed,
        grid_size=grid,
        bracket=(0.4, 6.0),
        tf_tol=0.02,
        learning_rate=0.3,
        max_iters=iters,
        mlp_max_iters=max(1, iters // 2),
        grad_tol=1e-5,
    )
    rows, detail = _speedup_rows([2, 3, 4], "single_solution_ring", tau_m=5.0, **kwargs)
    rows3, detail3 = _speedup_rows([3], "random3sat", tau_m=2.0, **kwargs)
    _write_csv(outdir / "fig5_speedup.csv", SPEEDUP_COLS, rows, SPEEDUP_FMTS)
    _write_csv(outdir / "fig5_speedup_3sat.csv", SPEEDUP_COLS, rows3, SPEEDUP_FMTS)
    summary = {
        "detail": detail,
        "detail_3sat": detail3,
        "G_lindblad": {r[0]: r[4] for r in rows},
        "G_mlp": {r[0]: r[5] for r in rows},
    }
    _write_json(outdir / "fig5_summary.json", summary)
    return ["fig5_speedup.csv", "fig5_speedup_3sat.csv", "fig5_summary.json"], summary


def _repro_fig6(params: dict, outdir: Path):
    seed = int(params["seed"])
    grid = int(params["grid_size"] or 33)
    iters = int(params["max_iters"] or 600)
    every = int(params["track_every"] or 25)
    T = 2.0
    cfg = GrapeConfig(learning_rate=0.3, max_iters=iters, grad_tol=1e-7)
    dist_rows: list = []
    sched_rows: list = []
    fid_rows: list = []
    summary: dict = {}
    for idx, instance in ((1, STUDY_INSTANCE_1), (2, STUDY_INSTANCE_2)):
        run_params = {
            "kind": "lindblad_ofs",
            "T_f": T,
            "grid_size": grid,
            "tau_m": None,
            "per_qubit": True,
            "init_perturb": 0.05,
            "seed": seed,
            "clamp": "default",
        }
        prob = _control_problem(run_params, instance, rng_tag=60 + idx)
        res, rows = _tracked_grape(prob, cfg, every)
        dist_rows += [[idx, it, d] for it, d in rows]
        for q, sub in enumerate(split_per_qubit(res.schedule), start=1):
            sched_rows += [[idx, q, t, v] for t, v in zip(sub.times, sub.values)]

        single = nesterov_grape(
            ControlProblem(kind="lindblad_ofs", instance=instance, T_f=T, grid_size=grid),
            cfg,
        )
        traces = {
            "linear": evolve_lindblad(
                instance, Schedule.linear(T, 201), MeasurementConfig(dt=0.0, tau=1.0)
            ),
            "single_theta": evolve_lindblad(
                instance, single.schedule, MeasurementConfig(dt=0.0, tau=1.0)
            ),
            "per_qubit": evolve_lindblad(
                instance, res.schedule, MeasurementConfig(dt=0.0, tau=1.0)
            ),
        }
        for kind, tr in traces.items():
            fid_rows += [[idx, kind, t, f] for t, f in zip(tr.times, tr.fidelities)]
        summary[f"instance_{idx}"] = {
            "dbar_initial": float(rows[0][1]),
            "dbar_final": float(rows[-1][1]),
            "dbar_ratio": float(rows[-1][1] / rows[0][1]),
            "fid_linear": float(traces["linear"].fidelities[-1]),
            "fid_single_theta": float(traces["single_theta"].fidelities[-1]),
            "fid_per_qubit": float(traces["per_qubit"].fidelities[-1]),
            "iterations_used": res.iterations_used,
        }
    _write_csv(
        outdir / "fig6_distance.csv",
        ["instance", "iteration", "dbar"],
        dist_rows,
        ["%d", "%d", "%.17g"],
    )
    _write_csv(
        outdir / "fig6_schedules.csv",
        ["instance", "qubit", "t", "theta"],
        sched_rows,
        ["%d", "%d", "%.17g", "%.17g"],
    )
    _write_csv(
        outdir / "fig6_fidelities.csv",
        ["instance", "kind", "t", "fidelity"],
        fid_rows,
        ["%d", "%s", "%.17g", "%.17g"],
    )
    _write_json(outdir / "fig6_summary.json", summary)
    return [
        "fig6_distance.csv",
        "fig6_schedules.csv",
        "fig6_fidelities.csv",
        "fig6_summary.json",
    ], summary


def _cmd_reproduce(params: dict, outdir: Path):
    figure = str(params["figure"])
    handlers = {
        "fig3": _repro_fig3,
        "fig4": _repro_fig4,
        "fig5": _repro_fig5,
        "fig6": _repro_fig6,
    }
    if figure not in handlers:
        raise ValueError(f"unknown figure {figure!r}; pick one of {FIGURES}")
    return handlers[figure](params, outdir)


HANDLERS = {
    "gen": _cmd_gen,
    "spectrum": _cmd_spectrum,
    "drag": _cmd_drag,
    "plan": _cmd_plan,
    "optimize": _cmd_optimize,
    "ensemble": _cmd_ensemble,
    "qubit-analytic": _cmd_qubit_analytic,
    "speedup": _cmd_speedup,
    "reproduce": _cmd_reproduce,
}


# ---------------------------------------------------------------------------
# argument parsing and parameter resolution


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="zenodrag",
        description="Measurement-driven SAT solving: drag planning, dynamics, "
        "and schedule optimization with reproducible CSV/JSON outputs.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def new(name: str, help_text: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        sp.add_argument(
            "--config",
            metavar="JSON",
            help="flat key-value JSON config, or a previous run manifest; "
            "explicit flags win over config values",
        )
        return sp

    def instance_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--instance", metavar="CNF", help="DIMACS CNF file")
        sp.add_argument(
            "--family",
            choices=["ring2sat", "single_solution_ring", "random3sat"],
            help="built-in instance family (used when no --instance is given)",
        )
        sp.add_argument("--n", type=int, help="number of variables for --family")

    def seed_flag(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--seed", type=int, help="root seed for all randomness")

    def outdir_flag(sp: argparse.ArgumentParser) -> None:
        sp.add_argument(
            "--outdir",
            metavar="DIR",
            help=f"output directory (default '.', or ${OUTDIR_ENV} if set)",
        )

    sp = new("gen", "write a SAT instance as a DIMACS CNF file")
    sp.add_argument("--family", choices=["ring2sat", "single_solution_ring", "random3sat"])
    sp.add_argument("--n", type=int)
    seed_flag(sp)
    sp.add_argument("-o", "--output", metavar="CNF", help="path of the DIMACS file")

    sp = new("spectrum", "eigenvalues of the clause-violation operator over an angle sweep")
    instance_flags(sp)
    seed_flag(sp)
    sp.add_argument("--points", type=int)
    sp.add_argument("--theta-min", type=float)
    sp.add_argument("--theta-max", type=float)
    outdir_flag(sp)

    sp = new("drag", "evolve a measurement schedule (averaged, diffusive, or jump records)")
    instance_flags(sp)
    seed_flag(sp)
    sp.add_argument("--schedule", metavar="CSV|linear", help="'linear' or a schedule CSV")
    sp.add_argument("--tf", dest="T_f", type=float, help="duration of the linear schedule")
    sp.add_argument("--grid", type=int, help="points of the linear schedule")
    sp.add_argument("--mode", choices=["lindblad", "sme", "kraus"])
    sp.add_argument("--dt", type=float, help="finite measurement slice for sme/kraus")
    sp.add_argument("--tau", type=float, help="characteristic measurement time")
    sp.add_argument("--shots", type=int)
    sp.add_argument("--cutoff", type=float, help="post-selection fidelity cutoff")
    outdir_flag(sp)

    sp = new("plan", "sufficient step/repetition plan for a linear drag with error budgets")
    instance_flags(sp)
    seed_flag(sp)
    sp.add_argument("--theta-i", type=float)
    sp.add_argument("--theta-f", type=float)
    sp.add_argument("--eps1", type=float, help="rotation-loss budget")
    sp.add_argument("--eps2", type=float, help="mixing-loss budget")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--large-first-step", action=argparse.BooleanOptionalAction)
    sp.add_argument(
        "--execute",
        action=argparse.BooleanOptionalAction,
        help="also run the plan through the finite-slice channel",
    )
    outdir_flag(sp)

    sp = new("optimize", "gradient-optimize a measurement-angle schedule")
    instance_flags(sp)
    seed_flag(sp)
    sp.add_argument("--kind", choices=sorted(KINDS))
    sp.add_argument("--tf", dest="T_f", type=float)
    sp.add_argument("--grid-size", type=int)
    sp.add_argument("--tau-m", type=float, help="readout overhead used by TTS")
    sp.add_argument("--per-qubit", action=argparse.BooleanOptionalAction)
    sp.add_argument("--init-perturb", type=float, help="seeded start-angle noise amplitude")
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--momentum", type=float)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--grad-tol", type=float)
    sp.add_argument("--clamp", metavar="LO,HI|default|none")
    sp.add_argument("--running-cost-weight", type=float)
    sp.add_argument("--max-step", type=float)
    sp.add_argument("--search-tf", action=argparse.BooleanOptionalAction)
    sp.add_argument("--bracket", metavar="LO,HI", help="horizon bracket for --search-tf")
    sp.add_argument("--tf-tol", type=float)
    sp.add_argument(
        "--track-distance-every",
        type=int,
        metavar="E",
        help="record the inter-qubit schedule distance every E iterations",
    )
    outdir_flag(sp)

    sp = new("ensemble", "diffusive-record ensemble vs the averaged dynamics")
    instance_flags(sp)
    seed_flag(sp)
    sp.add_argument("--schedule", metavar="CSV|linear")
    sp.add_argument("--tf", dest="T_f", type=float)
    sp.add_argument("--grid", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--shots", type=int)
    sp.add_argument("--cutoff", type=float)
    sp.add_argument("--chunk", type=int)
    sp.add_argument("--compare-lindblad", action=argparse.BooleanOptionalAction)
    outdir_flag(sp)

    sp = new("qubit-analytic", "closed-form single-qubit optimal schedules")
    sp.add_argument("--phi-i", type=float)
    sp.add_argument("--phi-f", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--gamma", type=float, help="override the rate 1/(4 tau)")
    sp.add_argument("--tf", dest="T_f", type=float)
    sp.add_argument("--points", type=int)
    seed_flag(sp)
    outdir_flag(sp)

    sp = new("speedup", "TTS of optimized schedules against the linear drag")
    sp.add_argument("--n", metavar="LO..HI", help="variable counts, e.g. 2..4 or 3")
    sp.add_argument("--family", choices=["ring2sat", "single_solution_ring", "random3sat"])
    seed_flag(sp)
    sp.add_argument("--tau-m", type=float)
    sp.add_argument("--grid-size", type=int)
    sp.add_argument("--bracket", metavar="LO,HI")
    sp.add_argument("--tf-tol", type=float)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--mlp-max-iters", type=int)
    sp.add_argument("--grad-tol", type=float)
    sp.add_argument("--inset-3sat", action=argparse.BooleanOptionalAction)
    sp.add_argument("--inset-tau-m", type=float)
    outdir_flag(sp)

    sp = new("reproduce", "run a complete figure pipeline")
    sp.add_argument("figure", choices=list(FIGURES))
    seed_flag(sp)
    sp.add_argument("--shots", type=int)
    sp.add_argument("--grid-size", type=int, help="override the figure's schedule grid")
    sp.add_argument("--max-iters", type=int, help="override the figure's iteration cap")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--track-every", type=int)
    outdir_flag(sp)

    return p


def _resolve_params(command: str, namespace: argparse.Namespace) -> tuple[dict, Path | None]:
    given = vars(namespace).copy()
    given.pop("command", None)
    config_path = given.pop("config", None)
    figure = given.pop("figure", None)
    defaults = dict(DEFAULTS[command])

    config_values: dict = {}
    if config_path:
        path = Path(str(config_path))
        try:
            raw = json.loads(path.read_text())
        except OSError as err:
            raise FileError(f"cannot read config file {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise FileError(f"cannot parse config file {path}: {err}") from err
        if isinstance(raw, dict) and "config" in raw and "subcommand" in raw:
            if raw["subcommand"] != command:
                raise ValueError(
                    f"manifest {path} records subcommand {raw['subcommand']!r}, "
                    f"not {command!r}"
                )
            raw = raw["config"]
        if not isinstance(raw, dict):
            raise FileError(f"config file {path} must hold a JSON object")
        unknown = sorted(set(raw) - set(defaults))
        if unknown:
            raise ValueError(f"unknown config keys for {command}: {', '.join(unknown)}")
        config_values = raw

    params = {**defaults, **config_values, **given}
    if figure is not None:
        params["figure"] = str(figure)

    if command == "gen":
        return params, None
    if "outdir" in given:
        outdir = str(given["outdir"])
    elif os.environ.get(OUTDIR_ENV):
        outdir = os.environ[OUTDIR_ENV]
    elif "outdir" in config_values:
        outdir = str(config_values["outdir"])
    else:
        outdir = str(defaults.get("outdir", "."))
    params["outdir"] = outdir
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise FileError(f"cannot create output directory {out}: {err}") from err
    return params, out


def _manifest_path(command: str, params: dict, outdir: Path | None) -> Path:
    if command == "gen":
        return Path(str(params["output"]) + ".manifest.json")
    name = params["figure"] if command == "reproduce" else command.replace("-", "_")
    return outdir / f"{name}_manifest.json"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        namespace = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse: 2 on usage errors, 0 on --help
        return int(exit_.code or 0)
    command = getattr(namespace, "command", None)
    if command is None:
        parser.print_help()
        return 2
    try:
        params, outdir = _resolve_params(command, namespace)
        started = time.perf_counter()
        outputs, summary = HANDLERS[command](params, outdir)
        elapsed = time.perf_counter() - started
        manifest = RunManifest(
            subcommand=command,
            config=ExperimentConfig(command, _jsonify(params)).as_manifest_dict(),
            outputs=list(outputs),
            summary=_jsonify(summary),
            timings={"total_s": round(elapsed, 6)},
        )
        manifest_file = _manifest_path(command, params, outdir)
        manifest.write(manifest_file)
        print(f"wrote {manifest_file}")
        for name in outputs:
            print(f"wrote {(manifest_file.parent / name)}")
        return 0
    except (FileError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except (FloatingPointError, RuntimeError, np.linalg.LinAlgError) as err:
        print(f"error: numerical failure: {err}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    raise SystemExit(main())
