"""Experiment runner: seeded replications of the four benchmark setups,
with summary tables, per-run histories, and plot-ready field dumps.

Replication seeds are master_seed + replication_index; inside one
replication the streams for network init, velocity init, sampling, and
noise are the four words of SeedSequence(replication_seed).generate_state(4).
Every reported metric is a pure function of the configuration; wall times
are returned in memory and written to run CSVs but kept out of summary.json
so equal configs produce byte-identical summaries.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, problems
from .autodiff import Tape
from .characteristics import (
    AdvectionCINN,
    AdvectionHead,
    ModelSpec,
    PlainNet,
    SystemCINN,
    SystemHead,
    acoustics_decomposition,
    predict,
)
from .network import glorot_init, mse_loss
from .problems import ProblemSpec, evaluation_grid, latin_hypercube, oracle_for
from .training import TrainConfig, TrainHistory, lp_error, train

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "SummaryTable",
    "run_experiment",
    "run_experiment_group",
    "builtin_experiments",
    "build_experiment",
    "emit_outputs",
]

SOLVERS = ("cinn", "pinn", "nn")

FIELD_NAMES = {1: ("u",), 2: ("p", "v")}


@dataclass(frozen=True)
class ExperimentConfig:
    """One (problem, solver, model, train) case run over N replications."""

    label: str
    problem: ProblemSpec
    solver: str
    model: ModelSpec
    train: TrainConfig
    replications: int = 10
    master_seed: int = 0
    output_dir: str | None = None
    workers: int = 0  # 0: one per core, capped by replications
    field_grid: tuple[int, int] = (256, 100)
    penalty_time_mode: str = "even"

    def validate(self) -> None:
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        kind = self.problem.kind
        dims = self.model.body_dims
        if kind == "acoustics":
            if self.solver == "cinn":
                if self.model.head != "system-branches":
                    raise ValueError("acoustics CINN requires the system-branches head")
                if dims[0] != 1 or dims[-1] != 1:
                    raise ValueError("system branches map one characteristic to one field")
            elif dims[0] != 2 or dims[-1] != 2:
                raise ValueError("acoustics PINN/NN needs a 2-input, 2-output body")
        else:
            if self.solver == "cinn":
                if self.model.head != "advection":
                    raise ValueError("advection CINN requires the advection head")
                if dims[0] != 1 or dims[-1] != 1:
                    raise ValueError("advection CINN body maps xi to u")
                if kind == "inverse_advection" and not self.model.trainable_velocity:
                    raise ValueError("inverse advection CINN needs a trainable velocity")
            else:
                if dims[0] != 2 or dims[-1] != 1:
                    raise ValueError("advection PINN/NN needs a 2-input, 1-output body")
        if kind == "acoustics" and self.model.trainable_velocity:
            raise ValueError("trainable velocity applies to advection problems only")


@dataclass
class RunResult:
    replication: int
    seed: int
    metrics: dict[str, float]
    velocity_estimate: float | None
    wall_seconds: float
    history: TrainHistory
    field_dump: np.ndarray | None
    field_columns: list[str]
    aborted: bool = False
    abort_reason: str = ""


@dataclass
class SummaryTable:
    """Per-case mean +- std rows; std uses the (n-1) divisor."""

    rows: list[dict] = field(default_factory=list)

    def row_for(self, label: str) -> dict:
        for row in self.rows:
            if row["label"] == label:
                return row
        raise KeyError(label)


def replication_streams(master_seed: int, k: int) -> dict[str, int]:
    # Collocation gets its own stream so all solvers see identical data
    # points for the same replication seed.
    words = np.random.SeedSequence(master_seed + k).generate_state(5)
    return {
        "init": int(words[0]),
        "velocity": int(words[1]),
        "sampling": int(words[2]),
        "noise": int(words[3]),
        "collocation": int(words[4]),
    }


def _build_model(config: ExperimentConfig, streams: dict[str, int]):
    spec = config.model
    problem = config.problem
    if spec.head == "advection":
        body = glorot_init(spec.body_dims, streams["init"])
        if spec.trainable_velocity:
            v0 = float(np.random.default_rng(streams["velocity"]).uniform(0.0, 2.0))
            return AdvectionCINN(AdvectionHead(np.array([v0]), trainable=True), body)
        return AdvectionCINN(AdvectionHead(np.array([problem.v])), body)
    if spec.head == "system-branches":
        lam, r, _ = acoustics_decomposition(problem.K0, problem.c0)
        branches = [glorot_init(spec.body_dims, streams["init"] + i) for i in range(2)]
        return SystemCINN(SystemHead(lam, r, branches))
    body = glorot_init(spec.body_dims, streams["init"])
    if config.solver == "pinn" and problem.kind == "inverse_advection":
        v0 = float(np.random.default_rng(streams["velocity"]).uniform(0.0, 2.0))
        return PlainNet(body, velocity_param=v0)
    return PlainNet(body)


def _build_loss(config: ExperimentConfig, streams: dict[str, int]):
    """Assemble the training data and return a loss-builder closure."""
    problem = config.problem
    solver = config.solver
    kind = problem.kind

    collocation = None
    if solver == "pinn":
        collocation = baselines.CollocationSet(
            latin_hypercube(problem.sampling.collocation, problem.bounds, streams["collocation"]),
            bounds=problem.bounds,
        )

    if kind in ("riemann_advection", "periodic_advection"):
        data = problems.sample_initial_boundary(problem)
        if kind == "riemann_advection":
            lateral = problems.sample_lateral_boundaries(problem)
            inputs = np.concatenate([data.inputs, lateral.inputs])
            targets = np.concatenate([data.targets, lateral.targets])
        else:
            inputs, targets = data.inputs, data.targets
        times = problems.penalty_times(problem, mode=config.penalty_time_mode,
                                       seed=streams["sampling"]) if kind == "periodic_advection" else None

        def builder(tape, staged):
            from . import autodiff as ad

            x = ad.record_const(tape, inputs[:, 0])
            t = ad.record_const(tape, inputs[:, 1])
            out = staged.outputs(x, t)[0]
            parts = {"data": mse_loss(tape, out, targets[:, 0])}
            if times is not None:
                parts["periodic"] = baselines.periodic_penalty(
                    staged, tape, times, problem.x_bounds[0], problem.x_bounds[1]
                )
            if collocation is not None:
                r = baselines.advection_residual(
                    staged, tape, collocation.points[:, 0], collocation.points[:, 1], problem.v
                )
                parts["residual"] = baselines.residual_loss(tape, r)
            return parts

        return builder

    if kind == "inverse_advection":
        clean = problems.sample_interior_data(problem, streams["sampling"])
        noisy = problems.add_noise(clean, problem.sigma_noise, streams["noise"])
        inputs, targets = noisy.inputs, noisy.targets

        def builder(tape, staged):
            from . import autodiff as ad

            x = ad.record_const(tape, inputs[:, 0])
            t = ad.record_const(tape, inputs[:, 1])
            out = staged.outputs(x, t)[0]
            parts = {"data": mse_loss(tape, out, targets[:, 0])}
            if collocation is not None:
                r = baselines.advection_residual(
                    staged, tape, collocation.points[:, 0], collocation.points[:, 1],
                    staged.velocity_id,
                )
                parts["residual"] = baselines.residual_loss(tape, r)
            return parts

        return builder

    # acoustics: scattered data on the velocity field only
    data = problems.sample_interior_data(problem, streams["sampling"])
    inputs, velocity_targets = data.inputs, data.targets[:, 1]

    def builder(tape, staged):
        from . import autodiff as ad

        x = ad.record_const(tape, inputs[:, 0])
        t = ad.record_const(tape, inputs[:, 1])
        outs = staged.outputs(x, t)
        parts = {"data": mse_loss(tape, outs[1], velocity_targets)}
        if collocation is not None:
            r1, r2 = baselines.acoustics_residuals(
                staged, tape, collocation.points[:, 0], collocation.points[:, 1],
                problem.K0, problem.c0,
            )
            parts["residual"] = baselines.residual_loss(tape, [r1, r2])
        return parts

    return builder


def run_replication(config: ExperimentConfig, k: int) -> RunResult:
    """Train one seeded replication and measure it against the oracle."""
    seed = config.master_seed + k
    streams = replication_streams(config.master_seed, k)
    oracle = oracle_for(config.problem)
    names = FIELD_NAMES[oracle.n_fields]
    try:
        model = _build_model(config, streams)
        builder = _build_loss(config, streams)
        model, history = train(model, builder, config.train)
        if history.aborted:
            return RunResult(k, seed, {}, None, history.wall_seconds, history, None, [],
                             aborted=True, abort_reason=history.abort_reason)
        grid = evaluation_grid(config.problem, *config.field_grid)
        pred = predict(model, grid)
        exact = oracle(grid)
        metrics = {}
        for j, name in enumerate(names):
            for p in (1, 2):
                num = np.sum(np.abs(pred[:, j] - exact[:, j]) ** p) ** (1.0 / p)
                den = np.sum(np.abs(exact[:, j]) ** p) ** (1.0 / p)
                metrics[f"l{p}_{name}"] = float(num / den)
        velocity = history.velocity[-1] if history.velocity else None
        if velocity is not None:
            metrics["velocity_estimate"] = velocity
        dump = np.column_stack([grid] + [c for j in range(len(names)) for c in (pred[:, j], exact[:, j])])
        columns = ["x", "t"] + [f"{kind}_{n}" for n in names for kind in ("pred", "exact")]
        return RunResult(k, seed, metrics, velocity, history.wall_seconds, history, dump, columns)
    except Exception as exc:  # per-run failures are recorded, not fatal
        return RunResult(k, seed, {}, None, 0.0, TrainHistory(), None, [],
                         aborted=True, abort_reason=f"{type(exc).__name__}: {exc}")


def _worker(args):
    return run_replication(*args)


def _mean_std(values) -> dict[str, float]:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "std": std}


def summarize(config: ExperimentConfig, results: list[RunResult]) -> SummaryTable:
    ok = [r for r in results if not r.aborted]
    row = {
        "label": config.label,
        "solver": config.solver,
        "problem": config.problem.kind,
        "replications": config.replications,
        "iterations": config.train.iterations,
        "metrics": {},
        "aborted": [r.replication for r in results if r.aborted],
    }
    if ok:
        for name in ok[0].metrics:
            row["metrics"][name] = _mean_std([r.metrics[name] for r in ok])
    table = SummaryTable([row])
    table.rows[0]["timing_seconds"] = _mean_std([r.wall_seconds for r in ok]) if ok else None
    return table


def run_experiment(config: ExperimentConfig):
    """Execute all replications of one case; returns (SummaryTable, results).

    Replications run in parallel worker processes when config.workers allows;
    results are deterministic per (config, master_seed) regardless of
    scheduling. Outputs are written when config.output_dir is set.
    """
    config.validate()
    tasks = [(config, k) for k in range(config.replications)]
    workers = config.workers or min(os.cpu_count() or 1, config.replications)
    if workers <= 1 or config.replications == 1:
        results = [run_replication(config, k) for k in range(config.replications)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, tasks))
    summary = summarize(config, results)
    if config.output_dir is not None:
        emit_outputs(results, config.output_dir, config=config, summary=summary)
    return summary, results


def _config_echo(config: ExperimentConfig) -> dict:
    echo = dataclasses.asdict(config)
    echo.pop("output_dir")
    echo.pop("workers")
    return echo


def emit_outputs(results: list[RunResult], output_dir, *, config: ExperimentConfig,
                 summary: SummaryTable | None = None) -> None:
    """Write summary.json plus run_<k>.csv and field_<k>.csv per replication.

    Numbers are written with full round-trip precision. summary.json holds
    only seed-determined quantities; timings live in the run CSVs.
    """
    if not results:
        raise ValueError("no replication results to write")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if summary is None:
        summary = summarize(config, results)

    payload = {
        "config": _config_echo(config),
        "rows": [
            {k: v for k, v in row.items() if k != "timing_seconds"} for row in summary.rows
        ],
    }
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")

    for r in results:
        with open(out / f"run_{r.replication}.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            for row in r.history.csv_rows():
                writer.writerow(row)
        with open(out / f"field_{r.replication}.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            if r.field_dump is None:
                writer.writerow(["aborted", r.abort_reason])
                continue
            writer.writerow(r.field_columns)
            for vals in r.field_dump:
                writer.writerow([repr(v) for v in vals])


def run_experiment_group(configs: list[ExperimentConfig], output_dir=None):
    """Run several cases; per-case outputs land in <output_dir>/<label>/ and a
    combined summary.json at the top level."""
    combined = SummaryTable()
    all_results = {}
    for config in configs:
        if output_dir is not None:
            config = dataclasses.replace(config, output_dir=str(Path(output_dir) / config.label))
        summary, results = run_experiment(config)
        combined.rows.extend(summary.rows)
        all_results[config.label] = results
    if output_dir is not None:
        payload = {"rows": [
            {k: v for k, v in row.items() if k != "timing_seconds"} for row in combined.rows
        ]}
        with open(Path(output_dir) / "summary.json", "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    return combined, all_results


# ---------------------------------------------------------------------------
# Built-in experiment definitions at their published scales.

ADVECTION_BODY = (20,) * 8
PERIODIC_BODY = (50,) * 4
ACOUSTICS_BRANCH = (20,) * 8
ACOUSTICS_PINN_BODY = (40,) * 8

EXPERIMENT_NAMES = ("forward-advection", "inverse-advection", "periodic-advection", "acoustics")


def build_experiment(
    name: str,
    *,
    seed: int = 0,
    reps: int | None = None,
    iterations: int | None = None,
    solver: str | None = None,
    velocities=None,
    noises=None,
    reduced: bool = False,
    workers: int = 0,
    log_every: int = 100,
) -> list[ExperimentConfig]:
    """Instantiate the named experiment's cases, optionally overridden."""

    def tc(default_iters, **kw):
        return TrainConfig(
            iterations=iterations if iterations is not None else default_iters,
            seed=seed, log_every=log_every, **kw,
        )

    def case(label, problem, solver_name, model, train, default_reps):
        return ExperimentConfig(
            label=label, problem=problem, solver=solver_name, model=model, train=train,
            replications=reps if reps is not None else default_reps,
            master_seed=seed, workers=workers,
        )

    cases: list[ExperimentConfig] = []
    if name == "forward-advection":
        problem = problems.riemann_problem(seed=seed)
        cinn_model = ModelSpec((1, *ADVECTION_BODY, 1), head="advection")
        flat_model = ModelSpec((2, *ADVECTION_BODY, 1), head="none")
        cases = [
            case("cinn", problem, "cinn", cinn_model, tc(1000), 10),
            case("pinn", problem, "pinn", flat_model, tc(1000), 10),
            case("nn", problem, "nn", flat_model, tc(1000), 10),
        ]
    elif name == "inverse-advection":
        cinn_model = ModelSpec((1, *ADVECTION_BODY, 1), head="advection", trainable_velocity=True)
        pinn_model = ModelSpec((2, *ADVECTION_BODY, 1), head="none", trainable_velocity=True)
        for tag, sigma in (("low-noise", 0.01), ("high-noise", 0.05)):
            problem = problems.inverse_problem(sigma, seed=seed)
            cases.append(case(f"cinn-{tag}", problem, "cinn", cinn_model, tc(2000), 100))
            cases.append(case(f"pinn-{tag}", problem, "pinn", pinn_model, tc(2000), 100))
        if noises is not None:
            keep = {0.01: "low-noise", 0.05: "high-noise"}
            wanted = {keep[s] for s in noises}
            cases = [c for c in cases if c.label.split("-", 1)[1] in wanted]
    elif name == "periodic-advection":
        vs = velocities if velocities is not None else (20.0, 30.0, 40.0, 50.0)
        collocation = 5_000 if reduced else 10_000
        pinn_iters = 10_000 if reduced else 20_000
        cinn_model = ModelSpec((1, *PERIODIC_BODY, 1), head="advection")
        pinn_model = ModelSpec((2, *PERIODIC_BODY, 1), head="none")
        for v in vs:
            problem = problems.periodic_problem(v=v, seed=seed, collocation=collocation)
            cases.append(case(f"cinn-v{v:g}", problem, "cinn", cinn_model, tc(20_000), 10))
            cases.append(
                case(f"pinn-v{v:g}", problem, "pinn", pinn_model,
                     tc(pinn_iters if iterations is None else iterations), 10)
            )
    elif name == "acoustics":
        problem = problems.acoustics_problem(seed=seed)
        cinn_model = ModelSpec((1, *ACOUSTICS_BRANCH, 1), head="system-branches")
        pinn_model = ModelSpec((2, *ACOUSTICS_PINN_BODY, 2), head="none")
        cases = [case("cinn-1000", problem, "cinn", cinn_model, tc(1000), 10)]
        for iters in (1000, 3000, 5000):
            cases.append(
                case(f"pinn-{iters}", problem, "pinn", pinn_model,
                     tc(iters if iterations is None else iterations), 10)
            )
    else:
        raise ValueError(f"unknown experiment {name!r}; expected one of {EXPERIMENT_NAMES}")

    if solver is not None:
        cases = [c for c in cases if c.solver == solver]
        if not cases:
            raise ValueError(f"experiment {name!r} has no {solver!r} case")
    return cases


def builtin_experiments(seed: int = 0) -> dict[str, list[ExperimentConfig]]:
    """The four built-in experiments at their published defaults."""
    return {name: build_experiment(name, seed=seed) for name in EXPERIMENT_NAMES}
