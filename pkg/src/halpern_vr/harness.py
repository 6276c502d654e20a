"""Benchmark harness: experiment configuration, the deterministic
extragradient baseline, per-seed trace collection, CSV and plot emission.

Budgets are expressed in epochs (one epoch = n component evaluations) so
methods with different per-iteration costs share an x-axis.  Reruns of the
same (config, seed) pair produce byte-identical CSV bodies except for the
elapsed_ms column.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import halpern_coco, inexact_halpern, problems, vr_forb
from .core import (
    Array,
    DivergenceError,
    ProblemInstance,
    RngStream,
    TraceRecord,
    residual_norm,
)

ALGORITHMS = ("vr-halpern", "inexact-halpern", "vr-forb", "eg")
PROBLEMS = ("matrix-game", "ouyang-xu", "synthetic-cocoercive")

CSV_HEADER = "run_id,algorithm,problem,seed,iter,oracle_epochs,residual,elapsed_ms"

_ITER_CAP = 10_000_000  # budget-driven runs still terminate


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    problem: str = "matrix-game"
    algorithm: str = "vr-halpern"
    m: int = 100
    n: int = 8
    d: int = 4
    theta: float = 0.8
    L: float = 1.0
    problem_seed: int = 0
    seeds: List[int] = field(default_factory=lambda: [0])
    epochs: float = 100.0
    eta: Optional[float] = None
    tau: Optional[float] = None
    sampling: str = "uniform"
    inner_schedule: str = "practical"
    c0: float = 0.05
    log_stride: int = 1
    out: Optional[str] = None

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"field 'problem': unknown value {self.problem!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"field 'algorithm': unknown value {self.algorithm!r}")
        if self.epochs <= 0:
            raise ConfigError("field 'epochs': budget must be positive")
        if not self.seeds:
            raise ConfigError("field 'seeds': at least one seed is required")
        if self.sampling not in ("uniform", "importance"):
            raise ConfigError(f"field 'sampling': unknown value {self.sampling!r}")
        if self.inner_schedule not in ("theoretical", "practical"):
            raise ConfigError(
                f"field 'inner_schedule': unknown value {self.inner_schedule!r}"
            )
        if self.eta is not None and self.eta <= 0:
            raise ConfigError("field 'eta': must be positive")
        if self.tau is not None and self.tau <= 0:
            raise ConfigError("field 'tau': must be positive")
        if self.c0 <= 0:
            raise ConfigError("field 'c0': must be positive")
        if self.log_stride < 1:
            raise ConfigError("field 'log_stride': must be >= 1")


_CONFIG_FIELDS = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}
_INT_FIELDS = {"m", "n", "d", "problem_seed", "log_stride"}
_FLOAT_FIELDS = {"theta", "L", "epochs", "eta", "tau", "c0"}


def parse_config_file(path: str) -> Dict[str, object]:
    """Flat key=value experiment file; '#' starts a comment line."""
    values: Dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def config_from_mapping(values: Dict[str, object]) -> ExperimentConfig:
    """Build a config from string-ish key/value pairs (file or CLI)."""
    cfg = ExperimentConfig()
    for key, value in values.items():
        if value is None:
            continue
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"field {key!r}: unknown configuration key")
        try:
            if key == "seeds":
                if isinstance(value, str):
                    parsed = [int(s) for s in value.replace(",", " ").split()]
                else:
                    parsed = [int(s) for s in value]
                setattr(cfg, key, parsed)
            elif key in _INT_FIELDS:
                setattr(cfg, key, int(value))
            elif key in _FLOAT_FIELDS:
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {key!r}: cannot parse {value!r} ({exc})")
    cfg.validate()
    return cfg


def build_problem(config: ExperimentConfig) -> ProblemInstance:
    if config.problem == "matrix-game":
        rng = RngStream(config.problem_seed)
        A = problems.policeman_burglar_matrix(config.m, config.theta, rng)
        return problems.matrix_game_problem(A, sampling=config.sampling)
    if config.problem == "ouyang-xu":
        return problems.ouyang_xu_problem(config.m)
    if config.problem == "synthetic-cocoercive":
        return problems.synthetic_cocoercive(
            config.n, config.d, config.L, seed=config.problem_seed
        )
    raise ConfigError(f"field 'problem': unknown value {config.problem!r}")


def default_start(problem: ProblemInstance, config: ExperimentConfig) -> Array:
    if config.problem == "matrix-game":
        m1 = config.m
        m2 = config.m
        return problems.feasible_start(m1, m2)
    return np.zeros(problem.d)


# ---------------------------------------------------------------------------
# Extragradient baseline
# ---------------------------------------------------------------------------


def eg_baseline(
    problem: ProblemInstance,
    u0: Array,
    tau: Optional[float] = None,
    epoch_budget: float = 100.0,
    log_stride: int = 1,
    divergence_factor: float = 1e6,
) -> Tuple[Array, List[TraceRecord]]:
    """Deterministic extragradient with projection/resolvent steps:

        u_{k+1/2} = J_{tau G}(u_k - tau F(u_k))
        u_{k+1}   = J_{tau G}(u_k - tau F(u_{k+1/2}))

    Charges two full evaluations and two resolvent calls per iteration.
    Default step 1/(2 L_F).  Logs the problem metric; without one it logs
    the certified residual at the half point (available from the same
    oracle values the iteration already computes).
    """
    if tau is None:
        tau = 1.0 / (2.0 * problem.L_F)
    if tau <= 0:
        raise ConfigError("field 'tau': must be positive")
    start = time.perf_counter()
    u = np.asarray(u0, dtype=np.float64).copy()
    counter = problem.counter()
    trace: List[TraceRecord] = []

    def log(it: int, res: float) -> None:
        trace.append(
            TraceRecord(
                iteration=it,
                oracle_epochs=counter.epochs,
                residual=res,
                elapsed_ms=(time.perf_counter() - start) * 1e3,
            )
        )

    def metric_at(point: Array, fallback: Optional[float]) -> float:
        if problem.metric is not None:
            return problem.metric(point)
        return fallback if fallback is not None else float("nan")

    initial = metric_at(u, None)
    if math.isnan(initial):
        # no metric defined: uncounted half-step probe at u0
        z = u - tau * problem.eval_full(u)
        uh = problem.resolvent(tau, z)
        initial = residual_norm(problem.eval_full(uh), (z - uh) / tau)
    log(0, initial)
    guard = divergence_factor * max(initial, 1e-30)

    k = 0
    while counter.epochs < epoch_budget and k < _ITER_CAP:
        counter.add_full()
        f_u = problem.eval_full(u)
        z = u - tau * f_u
        counter.add_resolvent()
        u_half = problem.resolvent(tau, z)
        g_half = (z - u_half) / tau
        counter.add_full()
        f_half = problem.eval_full(u_half)
        counter.add_resolvent()
        u = problem.resolvent(tau, u - tau * f_half)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"non-finite extragradient iterate at k={k + 1}")
        k += 1
        last_half = (f_half, g_half)
        if k % log_stride == 0:
            res = metric_at(u, residual_norm(f_half, g_half))
            log(k, res)
            if not math.isfinite(res) or res > guard:
                raise DivergenceError(
                    f"residual {res:.3e} exceeded {divergence_factor:.1e} x "
                    f"initial ({initial:.3e}) at k={k}"
                )
    if trace[-1].iteration != k:
        log(k, metric_at(u, residual_norm(*last_half)))
    return u, trace


# ---------------------------------------------------------------------------
# Trace of the strongly monotone splitting method run standalone
# ---------------------------------------------------------------------------


def _forb_trace(
    problem: ProblemInstance,
    u0: Array,
    seed: int,
    tau: Optional[float],
    epoch_budget: float,
    log_stride: int,
) -> List[TraceRecord]:
    start = time.perf_counter()
    op = vr_forb.SplitOperator(
        n=problem.n,
        d=problem.d,
        full=problem.eval_full,
        component=problem.eval_component,
        resolvent=problem.resolvent,
        L_A=problem.L,
        mu=1.0,
        sampling=problem.sampling,
        weighted_component=problem.eval_weighted_component,
        component_units=problem.component_units,
        refresh_probability=problem.component_cost,
    )
    rng = RngStream(seed)
    counter = problem.counter()
    state = vr_forb.init_state(u0, op, counter)
    if tau is not None:
        state.tau = tau

    trace: List[TraceRecord] = []

    def log(it: int, point: Array) -> None:
        res = (
            problem.metric(point)
            if problem.metric is not None
            else float(np.linalg.norm(problem.eval_full(point)))
        )
        trace.append(
            TraceRecord(
                iteration=it,
                oracle_epochs=counter.epochs,
                residual=res,
                elapsed_ms=(time.perf_counter() - start) * 1e3,
            )
        )

    log(0, state.v)
    k = 0
    while counter.epochs < epoch_budget and k < _ITER_CAP:
        vr_forb.forb_step(state, op, op.sampling, rng)
        k += 1
        if k % log_stride == 0:
            log(k, state.v)
    if trace[-1].iteration != k:
        log(k, state.v)
    return trace


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


def build_id() -> str:
    """Short source identifier recorded in run metadata."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unversioned"


def run_id_for(config: ExperimentConfig, seed: int) -> str:
    """Deterministic run identifier: hash of the effective config and seed."""
    payload = json.dumps(
        {**asdict(config), "seed": seed, "out": None}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _run_single_seed(
    config: ExperimentConfig, problem: ProblemInstance, seed: int
) -> List[TraceRecord]:
    u0 = default_start(problem, config)
    if config.algorithm == "vr-halpern":
        solver_config = halpern_coco.CocoHalpernConfig(
            L=problem.L if config.problem != "synthetic-cocoercive" else config.L,
            max_iters=_ITER_CAP,
            seed=seed,
            eta_override=config.eta,
            log_stride=config.log_stride,
            epoch_budget=config.epochs,
        )
        _, trace = halpern_coco.run(problem, u0, solver_config)
        return trace
    if config.algorithm == "inexact-halpern":
        solver_config = inexact_halpern.MonotoneHalpernConfig(
            L=problem.L,
            eta=config.eta,
            max_outer=_ITER_CAP,
            seed=seed,
            inner_schedule=config.inner_schedule,
            c0=config.c0,
            inner_tau=config.tau,
            log_stride=config.log_stride,
            epoch_budget=config.epochs,
        )
        _, trace = inexact_halpern.run(problem, u0, solver_config)
        return trace
    if config.algorithm == "vr-forb":
        return _forb_trace(
            problem, u0, seed, config.tau, config.epochs, config.log_stride
        )
    if config.algorithm == "eg":
        _, trace = eg_baseline(
            problem,
            u0,
            tau=config.tau,
            epoch_budget=config.epochs,
            log_stride=config.log_stride,
        )
        return trace
    raise ConfigError(f"field 'algorithm': unknown value {config.algorithm!r}")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metadata: Dict[str, object]
    runs: List[Tuple[int, List[TraceRecord]]]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run the configured solver for every seed until the epoch budget is
    exhausted.  HALPERN_VR_THREADS caps how many seeds run concurrently
    (runs share no mutable state; output order follows the seed list)."""
    config.validate()
    problem = build_problem(config)
    workers = max(1, int(os.environ.get("HALPERN_VR_THREADS", "1")))
    workers = min(workers, len(config.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(
                pool.map(lambda s: _run_single_seed(config, problem, s), config.seeds)
            )
    else:
        traces = [_run_single_seed(config, problem, s) for s in config.seeds]
    metadata: Dict[str, object] = {
        **asdict(config),
        "build_id": build_id(),
        "effective_eta": _effective_eta(config, problem),
        "effective_tau": _effective_tau(config, problem),
        "problem_n": problem.n,
        "problem_d": problem.d,
        "problem_L": problem.L,
        "problem_L_F": problem.L_F,
    }
    return ExperimentResult(
        config=config,
        metadata=metadata,
        runs=list(zip(config.seeds, traces)),
    )


def _effective_eta(config: ExperimentConfig, problem: ProblemInstance) -> float:
    if config.eta is not None:
        return config.eta
    if config.algorithm == "vr-halpern":
        return 1.0 / (4.0 * problem.L)
    if config.algorithm == "inexact-halpern":
        return math.sqrt(problem.effective_n) / problem.L
    return float("nan")


def _effective_tau(config: ExperimentConfig, problem: ProblemInstance) -> float:
    if config.tau is not None:
        return config.tau
    if config.algorithm == "eg":
        return 1.0 / (2.0 * problem.L_F)
    if config.algorithm == "vr-forb":
        return vr_forb.step_sizes(problem.n, problem.L, problem.component_cost)[2]
    if config.algorithm == "inexact-halpern":
        eta = _effective_eta(config, problem)
        return vr_forb.step_sizes(
            problem.n, eta * problem.L + 1.0, problem.component_cost
        )[2]
    return float("nan")


# ---------------------------------------------------------------------------
# CSV / metadata emission
# ---------------------------------------------------------------------------


def emit_csv(result: ExperimentResult, path: str) -> None:
    """Write one row per trace record.

    Numbers use shortest round-trip decimal representation (up to 17
    significant digits), '.' decimal point, LF line endings, UTF-8.
    """
    if not result.runs or all(not t for _, t in result.runs):
        raise ValueError("refusing to write an empty trace list")
    config = result.config
    lines = [CSV_HEADER]
    for seed, trace in result.runs:
        rid = run_id_for(config, seed)
        for rec in trace:
            lines.append(
                f"{rid},{config.algorithm},{config.problem},{seed},{rec.iteration},"
                f"{rec.oracle_epochs!r},{rec.residual!r},{rec.elapsed_ms!r}"
            )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trace CSV to {path!r}: {exc}") from exc


def emit_metadata(result: ExperimentResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_result(result: ExperimentResult, out_path: str) -> Tuple[str, str]:
    """Write `<out>` CSV plus `<out>.meta.json`; returns both paths."""
    emit_csv(result, out_path)
    meta_path = out_path + ".meta.json"
    emit_metadata(result, meta_path)
    return out_path, meta_path


def read_csv_rows(path: str) -> List[Dict[str, object]]:
    rows: List[Dict[str, object]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = CSV_HEADER.split(",")
        if reader.fieldnames != expected:
            raise ValueError(f"{path}: header {reader.fieldnames} != {expected}")
        for lineno, raw in enumerate(reader, start=2):
            try:
                rows.append(
                    {
                        "run_id": raw["run_id"],
                        "algorithm": raw["algorithm"],
                        "problem": raw["problem"],
                        "seed": int(raw["seed"]),
                        "iter": int(raw["iter"]),
                        "oracle_epochs": float(raw["oracle_epochs"]),
                        "residual": float(raw["residual"]),
                        "elapsed_ms": float(raw["elapsed_ms"]),
                    }
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row {lineno}: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# Plotting
# ---------------------------------------------------------------------------


def emit_plot(csv_paths: Sequence[str], out_path: str) -> None:
    """Residual vs. epochs, log-scale y; one series per (algorithm, problem)
    with the mean over seeds and a shaded min-max band.  The output format
    follows the file extension (.svg/.pdf vector by default)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not csv_paths:
        raise ValueError("at least one CSV path is required")
    series: Dict[Tuple[str, str], Dict[int, List[Tuple[float, float]]]] = {}
    for path in csv_paths:
        for row in read_csv_rows(path):
            key = (row["algorithm"], row["problem"])
            series.setdefault(key, {}).setdefault(row["seed"], []).append(
                (row["oracle_epochs"], row["residual"])
            )

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for (algorithm, problem), by_seed in sorted(series.items()):
        per_seed = []
        for seed in sorted(by_seed):
            pts = sorted(by_seed[seed])
            per_seed.append(
                (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
            )
        hi = min(float(e.max()) for e, _ in per_seed)
        lo = max(float(e.min()) for e, _ in per_seed)
        grid = np.unique(
            np.clip(np.concatenate([e for e, _ in per_seed]), lo, hi)
        )
        values = np.stack([np.interp(grid, e, r) for e, r in per_seed])
        label = f"{algorithm} ({problem})"
        marker = "o" if grid.size <= 2 else None
        ax.plot(grid, values.mean(axis=0), label=label, marker=marker)
        if len(per_seed) > 1:
            ax.fill_between(
                grid, values.min(axis=0), values.max(axis=0), alpha=0.2
            )
    ax.set_yscale("log")
    ax.set_xlabel("epochs (full-operator equivalents)")
    ax.set_ylabel("residual metric")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
