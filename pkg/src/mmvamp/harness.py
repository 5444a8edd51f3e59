"""Experiment driver: seeded trials across solvers, metrics, and CSV/JSON
emission.

A declarative TOML document describes one experiment (model dimensions,
solvers, trial count, outputs); every CLI flag mirrors one config key and
overrides it. Outputs are plot-ready CSV files plus a JSON summary; nothing
here renders figures.
"""

import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .amp import AmpConfig, amp_solve
from .denoiser import PriorParams, scalar_shrinkage_rows
from .model import ModelConfig, dump_instance, gen_instance
from .rbp import RbpConfig, rbp_solve
from .results import NSE_FLOOR_DB, SolveResult
from .se import se_predict_trace

SOLVER_IDS = ("rbp_edge_dependent", "rbp_edge_independent", "amp", "amp_fast")
EMIT_KINDS = ("trace", "summary", "instance_dump", "shrinkage_curve", "se_overlay", "phase")
SUPPORT_THRESHOLD = 0.5

TRACE_COLUMNS = (
    "experiment_id",
    "solver",
    "trial_seed",
    "iteration",
    "nse_db",
    "sigma_trace",
    "gamma_trace",
)


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def nse_db(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Normalized squared error in dB: 10 log10(||e - x||_F^2 / ||x||_F^2).

    An exact match reports the floor (-200 dB); an identically zero truth has
    no scale and reports +inf.
    """
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    truth_power = float(np.sum(truth**2))
    if truth_power == 0.0:
        return math.inf
    err_power = float(np.sum((estimate - truth) ** 2))
    if err_power == 0.0:
        return NSE_FLOOR_DB
    return max(10.0 * math.log10(err_power / truth_power), NSE_FLOOR_DB)


def support_metrics(weights, truth_support, threshold: float = SUPPORT_THRESHOLD):
    """Precision and recall of {n : weight_n >= threshold} against the truth.

    Conventions: an empty detection set has precision 1; an empty true
    support has recall 1.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    detected = np.asarray(weights) >= threshold
    actual = np.asarray(truth_support).astype(bool)
    tp = int(np.sum(detected & actual))
    n_det = int(np.sum(detected))
    n_act = int(np.sum(actual))
    precision = tp / n_det if n_det else 1.0
    recall = tp / n_act if n_act else 1.0
    return precision, recall


def derive_trial_seed(base_seed: int, trial_index: int) -> int:
    """Stable 64-bit seed for one trial of one experiment."""
    ss = np.random.SeedSequence(entropy=(int(base_seed), int(trial_index)))
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShrinkageSpec:
    """Grid description for the shrinkage-curve emission."""

    c: float = 0.1
    epsilon: float = 0.1
    snapshots: tuple = (1, 3, 10, 100)
    grid_lo: float = 0.0
    grid_hi: float = 0.6
    grid_step: float = 0.005


@dataclass(frozen=True)
class SweepSpec:
    """(epsilon, delta) grid for the phase-transition sweep."""

    epsilon: tuple
    delta: tuple
    success_nse_db: float = -50.0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    model: ModelConfig | None
    solvers: tuple
    solver_cfgs: dict
    trials: int = 50
    base_seed: int = 1
    outputs: Path = Path("out")
    emit: frozenset = frozenset({"trace", "summary"})
    shrinkage: ShrinkageSpec | None = None
    sweep: SweepSpec | None = None
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        unknown = set(self.solvers) - set(SOLVER_IDS)
        if unknown:
            raise ConfigError(f"unknown solvers: {sorted(unknown)}")
        bad_emit = set(self.emit) - set(EMIT_KINDS)
        if bad_emit:
            raise ConfigError(f"unknown emit kinds: {sorted(bad_emit)}")
        needs_trials = set(self.emit) & {"trace", "summary", "se_overlay", "phase"}
        if not self.solvers and needs_trials:
            raise ConfigError("at least one solver is required")
        if needs_trials and self.model is None:
            raise ConfigError("a [model] table is required to run trials")
        if "shrinkage_curve" in self.emit and self.shrinkage is None:
            raise ConfigError("emit shrinkage_curve requires a [shrinkage] table")
        if "phase" in self.emit and self.sweep is None:
            raise ConfigError("emit phase requires a [sweep] table")


def _prior_from_table(table: dict) -> PriorParams:
    j = int(table["j"])
    epsilon = float(table["epsilon"])
    if "slab_cov" in table:
        slab = np.asarray(table["slab_cov"], dtype=float)
    elif "slab_diag" in table:
        slab = np.diag(np.asarray(table["slab_diag"], dtype=float))
    else:
        slab = np.eye(j)
    return PriorParams(epsilon=epsilon, slab_cov=slab)


def _model_from_table(table: dict) -> ModelConfig:
    prior = _prior_from_table(table)
    noise = {}
    if "sigma2" in table:
        noise["sigma2"] = float(table["sigma2"])
    if "snr_db" in table:
        noise["snr_db"] = float(table["snr_db"])
    return ModelConfig(
        N=int(table["n"]),
        M=int(table["m"]),
        J=int(table["j"]),
        d=int(table["d"]),
        prior=prior,
        seed=int(table.get("seed", 0)),
        **noise,
    )


def _solver_cfg_from_table(solver_id: str, table: dict):
    common = {
        "max_iter": int(table.get("max_iter", 200)),
        "tol": float(table.get("tol", 1e-8)),
        "damping": float(table.get("damping", 0.0)),
    }
    if solver_id.startswith("rbp"):
        variant = "edge_dependent" if solver_id.endswith("dependent") else "edge_independent"
        return RbpConfig(variant=variant, **common)
    return AmpConfig(fast_path=solver_id == "amp_fast", **common)


def default_solver_cfg(solver_id: str):
    return _solver_cfg_from_table(solver_id, {})


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        model = _model_from_table(data["model"]) if "model" in data else None
        solvers = tuple(data.get("solvers", ()))
        solver_tables = data.get("solver", {})
        solver_cfgs = {
            sid: _solver_cfg_from_table(sid, solver_tables.get(sid, {})) for sid in solvers
        }
        shrink = None
        if "shrinkage" in data:
            tab = data["shrinkage"]
            grid = tab.get("grid", "0.0:0.6:0.005")
            lo, hi, step = (float(tok) for tok in str(grid).split(":"))
            shrink = ShrinkageSpec(
                c=float(tab.get("c", 0.1)),
                epsilon=float(tab.get("epsilon", 0.1)),
                snapshots=tuple(int(v) for v in tab.get("snapshots", (1, 3, 10, 100))),
                grid_lo=lo,
                grid_hi=hi,
                grid_step=step,
            )
        sweep = None
        if "sweep" in data:
            tab = data["sweep"]
            sweep = SweepSpec(
                epsilon=tuple(float(v) for v in tab["epsilon"]),
                delta=tuple(float(v) for v in tab["delta"]),
                success_nse_db=float(tab.get("success_nse_db", -50.0)),
            )
        return ExperimentConfig(
            experiment_id=str(data.get("experiment_id", "experiment")),
            model=model,
            solvers=solvers,
            solver_cfgs=solver_cfgs,
            trials=int(data.get("trials", 50)),
            base_seed=int(data.get("base_seed", 1)),
            outputs=Path(data.get("outputs", "out")),
            emit=frozenset(data.get("emit", ("trace", "summary"))),
            shrinkage=shrink,
            sweep=sweep,
            workers=int(data.get("workers", 1)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment config: {exc}") from exc


def load_config(path_or_name: str) -> ExperimentConfig:
    """Load a TOML experiment config from a path or a bundled name."""
    path = Path(path_or_name)
    if not path.exists():
        from importlib import resources

        candidate = resources.files("mmvamp").joinpath("configs", f"{path_or_name}.toml")
        if not candidate.is_file():
            raise ConfigError(f"no config file or bundled config named {path_or_name!r}")
        data = tomllib.loads(candidate.read_text())
    else:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Trial execution
# ---------------------------------------------------------------------------


@dataclass
class TraceRow:
    experiment_id: str
    solver: str
    trial_seed: int
    iteration: int
    nse_db: float
    sigma_trace: float
    gamma_trace: float
    wallclock_us: int  # kept in memory; excluded from trace.csv for determinism

    def csv_values(self):
        return (
            self.experiment_id,
            self.solver,
            repr(int(self.trial_seed)),
            repr(int(self.iteration)),
            repr(float(self.nse_db)),
            repr(float(self.sigma_trace)),
            repr(float(self.gamma_trace)),
        )


@dataclass
class TrialResult:
    solver: str
    trial_index: int
    trial_seed: int
    terminal_nse_db: float
    iterations: int
    converged: bool
    failed: bool
    precision: float
    recall: float
    wallclock_us: int
    trace_rows: list = field(default_factory=list)
    mse_trace: list = field(default_factory=list)


def run_solver(
    solver_id: str, phi, meas, prior, solver_cfg=None, truth=None
) -> SolveResult:
    cfg = solver_cfg if solver_cfg is not None else default_solver_cfg(solver_id)
    if solver_id.startswith("rbp"):
        return rbp_solve(phi, meas, prior, cfg, truth=truth)
    return amp_solve(phi, meas, prior, cfg, truth=truth)


def run_trial(cfg: ExperimentConfig, solver_id: str, trial_index: int) -> TrialResult:
    """Generate the trial's instance from its derived seed and run one solver.

    Fully deterministic in (cfg, solver_id, trial_index); a failed (non-finite)
    solve is recorded, not raised.
    """
    trial_seed = derive_trial_seed(cfg.base_seed, trial_index)
    model_cfg = replace(cfg.model, seed=trial_seed)
    phi, signal, meas = gen_instance(model_cfg)
    start = time.perf_counter_ns()
    result = run_solver(
        solver_id,
        phi,
        meas,
        model_cfg.prior,
        cfg.solver_cfgs.get(solver_id),
        truth=signal.X,
    )
    elapsed_us = (time.perf_counter_ns() - start) // 1000
    precision, recall = support_metrics(result.weights, signal.support)
    terminal_nse = nse_db(result.estimate, signal.X)
    trace_rows = [
        TraceRow(
            experiment_id=cfg.experiment_id,
            solver=solver_id,
            trial_seed=trial_seed,
            iteration=rec.iteration,
            nse_db=rec.nse_db,
            sigma_trace=rec.sigma_trace,
            gamma_trace=rec.gamma_trace,
            wallclock_us=rec.wallclock_us,
        )
        for rec in result.iterations
    ]
    signal_power = float(np.sum(signal.X**2)) / signal.X.size
    mse_trace = [signal_power * 10.0 ** (rec.nse_db / 10.0) for rec in result.iterations]
    return TrialResult(
        solver=solver_id,
        trial_index=trial_index,
        trial_seed=trial_seed,
        terminal_nse_db=terminal_nse,
        iterations=result.n_iterations,
        converged=result.converged,
        failed=result.failed,
        precision=precision,
        recall=recall,
        wallclock_us=int(elapsed_us),
        trace_rows=trace_rows,
        mse_trace=mse_trace,
    )


def _run_cell(args):
    cfg, solver_id, trial_index = args
    return run_trial(cfg, solver_id, trial_index)


def _solver_summary(solver_id: str, outcomes: list) -> dict:
    ok = [o for o in outcomes if not o.failed]
    nses = sorted(o.terminal_nse_db for o in ok)
    if nses:
        q25, q50, q75 = np.percentile(nses, [25, 50, 75])
    else:
        q25 = q50 = q75 = math.nan
    return {
        "solver": solver_id,
        "trials": len(outcomes),
        "failed_trials": sum(o.failed for o in outcomes),
        "median_terminal_nse_db": float(q50),
        "nse_db_q25": float(q25),
        "nse_db_q75": float(q75),
        "mean_iterations": float(np.mean([o.iterations for o in ok])) if ok else math.nan,
        "support_precision": float(np.mean([o.precision for o in ok])) if ok else math.nan,
        "support_recall": float(np.mean([o.recall for o in ok])) if ok else math.nan,
        "mean_wallclock_us": float(np.mean([o.wallclock_us for o in ok])) if ok else math.nan,
    }


def write_trace_csv(rows, path) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_values())


def read_trace_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            out.append(
                TraceRow(
                    experiment_id=rec["experiment_id"],
                    solver=rec["solver"],
                    trial_seed=int(rec["trial_seed"]),
                    iteration=int(rec["iteration"]),
                    nse_db=float(rec["nse_db"]),
                    sigma_trace=float(rec["sigma_trace"]),
                    gamma_trace=float(rec["gamma_trace"]),
                    wallclock_us=0,
                )
            )
    return out


def shrinkage_curve_rows(spec: ShrinkageSpec):
    """(J, x, t) rows: weight of the scalar shrinkage vs per-snapshot energy x."""
    n_steps = int(round((spec.grid_hi - spec.grid_lo) / spec.grid_step))
    xs = spec.grid_lo + spec.grid_step * np.arange(n_steps + 1)
    rows = []
    for j in spec.snapshots:
        obs = np.zeros((xs.size, j))
        obs[:, 0] = np.sqrt(np.maximum(xs * j, 0.0))
        t, _ = scalar_shrinkage_rows(obs, spec.c, spec.epsilon)
        rows.extend((j, float(x), float(w)) for x, w in zip(xs, t))
    return rows


def write_shrinkage_csv(spec: ShrinkageSpec, path) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("J", "x", "t"))
        for j, x, t in shrinkage_curve_rows(spec):
            writer.writerow((repr(j), repr(x), repr(t)))


def emit_se_overlay(cfg: ExperimentConfig, se_trace, empirical_mse, path) -> list:
    """Join predicted noise levels with empirical per-entry MSE.

    ``empirical_mse[i]`` is the mean squared error per signal entry at
    iteration i+1; it is converted to the predictor's units through
    c_emp = sigma2 + mse / delta before the relative gap is taken. Traces are
    truncated to the shorter one; an empty empirical trace yields a
    header-only file.
    """
    sigma2 = cfg.model.noise_variance() if cfg.model is not None else 0.0
    delta = cfg.model.delta if cfg.model is not None else 1.0
    n = min(len(se_trace), len(empirical_mse))
    rows = []
    for i in range(n):
        c_pred = float(se_trace[i])
        mse = float(empirical_mse[i])
        c_emp = sigma2 + mse / delta
        gap = abs(c_pred - c_emp) / c_pred if c_pred > 0 else math.inf
        rows.append((i + 1, c_pred, mse, gap))
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("iteration", "c_predicted", "mse_empirical_mean", "relative_gap"))
        for row in rows:
            writer.writerow((repr(row[0]), repr(row[1]), repr(row[2]), repr(row[3])))
    return rows


def mean_mse_trace(outcomes: list) -> list:
    """Average per-iteration MSE over trials, extending converged runs with
    their final value so every trial contributes to every iteration."""
    if not outcomes:
        return []
    length = max(len(o.mse_trace) for o in outcomes)
    acc = np.zeros(length)
    for o in outcomes:
        trace = np.asarray(o.mse_trace)
        padded = np.concatenate([trace, np.full(length - trace.size, trace[-1])])
        acc += padded
    return list(acc / len(outcomes))


def run_phase_sweep(cfg: ExperimentConfig) -> list:
    """Noiseless success-rate grid over (epsilon, delta) for the first solver.

    Each cell reruns ``cfg.trials`` seeded trials with M = round(delta * N)
    and the cell's sparsity; success means terminal NSE below the sweep
    threshold. Returns (epsilon, delta, success_rate, median_nse_db) rows.
    """
    spec = cfg.sweep
    solver_id = cfg.solvers[0]
    base_model = cfg.model
    rows = []
    for eps in spec.epsilon:
        for delta in spec.delta:
            m = max(2, int(round(delta * base_model.N)))
            d = min(base_model.d, m - 1)
            prior = PriorParams(epsilon=eps, slab_cov=base_model.prior.slab_cov)
            model = ModelConfig(
                N=base_model.N, M=m, J=base_model.J, d=d, prior=prior, sigma2=0.0
            )
            cell = replace(
                cfg, model=model, solvers=(solver_id,), emit=frozenset({"summary"})
            )
            outcomes = [run_trial(cell, solver_id, k) for k in range(cfg.trials)]
            nses = np.array([o.terminal_nse_db for o in outcomes])
            rows.append(
                (
                    eps,
                    delta,
                    float(np.mean(nses < spec.success_nse_db)),
                    float(np.median(nses)),
                )
            )
    return rows


def write_phase_csv(rows, path) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("epsilon", "delta", "success_rate", "median_nse_db"))
        for row in rows:
            writer.writerow(tuple(repr(v) for v in row))


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute all (solver x trial) cells and write the requested artifacts.

    Returns a report dict with output paths, per-solver summaries, and the
    failed-trial count. Trials are a census: individual failures are recorded
    and the run continues.
    """
    out = Path(cfg.outputs)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc

    report = {"experiment_id": cfg.experiment_id, "outputs": {}, "failed_trials": 0}

    by_solver = {}
    if cfg.solvers and (set(cfg.emit) & {"trace", "summary", "se_overlay"}):
        cells = [(cfg, sid, k) for sid in cfg.solvers for k in range(cfg.trials)]
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                outcomes = list(pool.map(_run_cell, cells))
        else:
            outcomes = [_run_cell(cell) for cell in cells]
        for outcome in outcomes:
            by_solver.setdefault(outcome.solver, []).append(outcome)
        for sid in by_solver:
            by_solver[sid].sort(key=lambda o: o.trial_index)

        if "trace" in cfg.emit:
            rows = [
                row
                for sid in cfg.solvers
                for outcome in by_solver[sid]
                for row in outcome.trace_rows
            ]
            trace_path = out / "trace.csv"
            write_trace_csv(rows, trace_path)
            report["outputs"]["trace"] = str(trace_path)

        summaries = [_solver_summary(sid, by_solver[sid]) for sid in cfg.solvers]
        report["failed_trials"] = int(sum(s["failed_trials"] for s in summaries))
        report["summary"] = summaries
        if "summary" in cfg.emit:
            summary_path = out / "summary.json"
            with open(summary_path, "w", newline="\n") as fh:
                json.dump(summaries, fh, indent=2, sort_keys=True)
                fh.write("\n")
            report["outputs"]["summary"] = str(summary_path)

        if "se_overlay" in cfg.emit:
            solver_id = cfg.solvers[0]
            mse = mean_mse_trace(by_solver[solver_id])
            model = cfg.model
            se_trace = se_predict_trace(
                model.prior.epsilon, model.delta, model.noise_variance(), len(mse)
            )
            overlay_path = out / "se_overlay.csv"
            emit_se_overlay(cfg, se_trace, mse, overlay_path)
            report["outputs"]["se_overlay"] = str(overlay_path)

    if "shrinkage_curve" in cfg.emit:
        curve_path = out / "shrinkage_curve.csv"
        write_shrinkage_csv(cfg.shrinkage, curve_path)
        report["outputs"]["shrinkage_curve"] = str(curve_path)

    if "phase" in cfg.emit:
        phase_path = out / "phase.csv"
        write_phase_csv(run_phase_sweep(cfg), phase_path)
        report["outputs"]["phase"] = str(phase_path)

    if "instance_dump" in cfg.emit:
        model_cfg = replace(cfg.model, seed=derive_trial_seed(cfg.base_seed, 0))
        paths = dump_instance(model_cfg, out / "instance")
        report["outputs"]["instance_dump"] = paths

    return report
