"""Experiment orchestration: specs in, reports out.

An experiment runs the full pipeline (ingest, preprocess, optional
hyperparameter search, train, evaluate on the held-out test windows) and
writes its results under the spec's output directory:

    reports/run_report.json   deterministic payload; byte-identical for
                              identical specs and seeds
    reports/timing.json       wall-clock measurements (volatile by nature)
    checkpoints/model.ckpt    final parameters
    histories/pso_history.csv swarm search trace, when a search ran

Suite runners (ablations, optimizer comparison, swarm study) fan out over
independent experiments and emit comparison tables as CSV. The LTPNET_THREADS
environment variable caps suite-level parallelism.
"""

import concurrent.futures
import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import pso as P
from . import training as TR
from .checkpoint import save_checkpoint
from .metrics import EfficiencyReport, EvalReport, count_parameters, estimate_flops, time_run
from .model import forward_batch
from .preprocessing import (
    SplitSpec,
    SyntheticSpec,
    WindowedDataset,
    build_dataset,
    load_csv,
    synthesize_series,
)
from .rng import SeededRng

VARIANTS = ("full", "no-lstm", "no-transformer", "no-pso")
HP_SOURCES = ("fixed", "pso-search", "grid-search")

ABLATION_ROWS = (
    ("Transformer+PSO", "no-lstm"),
    ("LSTM+PSO", "no-transformer"),
    ("LSTM+Transformer", "no-pso"),
    ("ALL", "full"),
)
ABLATION_CSV_HEADER = ["model", "mae", "mape", "rmse", "mse"]
OPTIMIZER_CSV_HEADER = [
    "optimizer", "parameter_count", "flops_per_forward",
    "inference_ms_per_window", "training_time_s", "mae", "mape", "rmse", "mse",
]


def suite_thread_count(n_jobs: int) -> int:
    raw = os.environ.get("LTPNET_THREADS", "")
    try:
        cap = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        cap = 1
    return max(1, min(cap, n_jobs))


@dataclass
class Seeds:
    data: int = 1
    init: int = 2
    shuffle: int = 3
    swarm: int = 4


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment."""

    dataset: dict  # {"synthetic": {...}} or {"csv": {...}}, exactly one
    variant: str = "full"
    optimizer: str = "sgd"
    hyperparameter_source: str = "fixed"
    hyperparams: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    swarm: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    search_space: dict = field(default_factory=dict)
    lookback: int = 24
    horizon: int = 1
    train_ratio: float = 0.7
    impute_strategy: str = "mean"
    seeds: Seeds = field(default_factory=Seeds)
    output_dir: str = "out"

    def __post_init__(self):
        if isinstance(self.seeds, dict):
            self.seeds = Seeds(**self.seeds)
        sources = [k for k in ("synthetic", "csv") if k in self.dataset]
        if len(sources) != 1:
            raise ValueError(
                f"spec must name exactly one dataset source, got {sources}"
            )
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; known: {VARIANTS}")
        if self.hyperparameter_source not in HP_SOURCES:
            raise ValueError(
                f"unknown hyperparameter source {self.hyperparameter_source!r}"
            )

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> "ExperimentSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RunReport:
    spec: dict
    resolved_hyperparams: dict
    train_config: dict
    swarm_config: dict
    eval: EvalReport
    efficiency: EfficiencyReport
    training: dict
    audit: dict
    version: str
    train_report: TR.TrainReport
    split: SplitSpec
    dataset: WindowedDataset

    def deterministic_payload(self) -> dict:
        return {
            "spec": self.spec,
            "resolved_hyperparams": self.resolved_hyperparams,
            "train_config": self.train_config,
            "swarm_config": self.swarm_config,
            "eval": self.eval.as_dict(),
            "efficiency": {
                "parameter_count": self.efficiency.parameter_count,
                "flops_per_forward": self.efficiency.flops_per_forward,
            },
            "training": self.training,
            "audit": self.audit,
            "version": self.version,
        }

    def timing_payload(self) -> dict:
        return {
            "inference_ms_per_window": self.efficiency.inference_ms_per_window,
            "training_time_s": self.efficiency.training_time_s,
            "version": self.version,
        }


RUN_REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "spec", "resolved_hyperparams", "train_config", "swarm_config",
        "eval", "efficiency", "training", "audit", "version",
    ],
    "properties": {
        "spec": {"type": "object"},
        "resolved_hyperparams": {
            "type": "object",
            "required": [
                "lstm_hidden", "lstm_lr", "transformer_layers",
                "attention_heads", "d_model", "transformer_lr",
            ],
        },
        "train_config": {
            "type": "object",
            "required": ["optimizer", "batch_size", "epochs", "patience"],
        },
        "swarm_config": {
            "type": "object",
            "required": ["n_particles", "iterations", "omega", "c1", "c2"],
        },
        "eval": {
            "type": "object",
            "required": ["mae", "mape", "rmse", "mse", "n", "skipped_mape_points"],
            "properties": {
                "mae": {"type": "number", "minimum": 0},
                "mape": {"type": ["number", "null"], "minimum": 0},
                "rmse": {"type": "number", "minimum": 0},
                "mse": {"type": "number", "minimum": 0},
                "n": {"type": "integer", "minimum": 1},
            },
        },
        "efficiency": {
            "type": "object",
            "required": ["parameter_count", "flops_per_forward"],
            "properties": {
                "parameter_count": {"type": "integer", "minimum": 0},
                "flops_per_forward": {"type": "integer", "minimum": 0},
            },
        },
        "training": {"type": "object", "required": ["stopped_epoch", "best_epoch"]},
        "audit": {
            "type": "object",
            "required": ["train_batch_index_count", "test_overlap_count"],
        },
        "version": {"type": "string", "pattern": "^[0-9a-f]{12}$"},
    },
}

TIMING_SCHEMA = {
    "type": "object",
    "required": ["inference_ms_per_window", "training_time_s", "version"],
}


def validate_run_report(payload: dict) -> None:
    jsonschema.validate(payload, RUN_REPORT_SCHEMA)


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2)


def _version_string(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def load_table(spec: ExperimentSpec):
    if "synthetic" in spec.dataset:
        return synthesize_series(SyntheticSpec(**spec.dataset["synthetic"]))
    manifest = spec.dataset["csv"]
    return load_csv(manifest["path"], manifest.get("schema"))


def _feature_columns(spec: ExperimentSpec):
    if "csv" in spec.dataset:
        return spec.dataset["csv"].get("feature_columns")
    return None


def _target_column(spec: ExperimentSpec):
    if "csv" in spec.dataset:
        return spec.dataset["csv"].get("target_column", "target")
    return "target"


def resolve_hyperparams(spec, dataset, split, cfg, swarm_cfg, out_dir):
    """Fixed defaults, a swarm search, or a grid search, per the spec."""
    search_history = None
    if spec.variant == "no-pso" or spec.hyperparameter_source == "fixed":
        overrides = {} if spec.variant == "no-pso" else dict(spec.hyperparams)
        hp = P.HyperparamPoint(**overrides)
    elif spec.hyperparameter_source == "pso-search":
        space = P.SearchSpace(**{
            k: tuple(v) for k, v in spec.search_space.items()
        })
        budget = TR.SearchBudget(**spec.budget)
        hp, _, search_history = TR.pso_hyperparameter_search(
            dataset, split, space, swarm_cfg, budget, cfg
        )
        P.write_history_csv(
            out_dir / "histories" / "pso_history.csv",
            {swarm_cfg.seed: search_history},
        )
    else:  # grid-search
        rows = TR.grid_search(dataset, split, None, P.HyperparamPoint(**spec.hyperparams), cfg)
        best = rows[0]
        hp = replace(
            P.HyperparamPoint(**spec.hyperparams),
            lstm_lr=best["lr"],
            transformer_layers=best["transformer_layers"],
        )
        cfg.batch_size = best["batch_size"]
    return hp, search_history


def run_experiment(spec: ExperimentSpec) -> RunReport:
    out_dir = Path(spec.output_dir)
    for sub in ("reports", "checkpoints", "histories"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    table = load_table(spec)
    dataset, split, _prep = build_dataset(
        table,
        target_column=_target_column(spec),
        feature_columns=_feature_columns(spec),
        lookback=spec.lookback,
        horizon=spec.horizon,
        train_ratio=spec.train_ratio,
        impute_strategy=spec.impute_strategy,
        rng=SeededRng(spec.seeds.data),
    )

    cfg = TR.TrainConfig(**{**spec.train, "optimizer": spec.optimizer})
    cfg.validate()
    swarm_cfg = P.SwarmConfig(**{"seed": spec.seeds.swarm, **spec.swarm})
    hp, _search_history = resolve_hyperparams(
        spec, dataset, split, cfg, swarm_cfg, out_dir
    )

    flags = {
        "lstm_enabled": spec.variant != "no-lstm",
        "transformer_enabled": spec.variant != "no-transformer",
    }
    result = TR.train(
        dataset, split, hp, cfg,
        init_rng=SeededRng(spec.seeds.init),
        shuffle_rng=SeededRng(spec.seeds.shuffle),
        **flags,
    )

    overlap = np.intersect1d(result.used_train_indices, split.test)
    if overlap.size:
        raise RuntimeError(
            f"training touched {overlap.size} test windows; split is corrupt"
        )
    audit = {
        "train_batch_index_count": int(result.used_train_indices.size),
        "test_overlap_count": int(overlap.size),
        "test_index_count": int(split.test.size),
    }

    eval_report = TR.evaluate_on_indices(dataset, split.test, result.params)

    sample = dataset.features[split.test[: min(32, len(split.test))]]
    mean_ms, _ = time_run(lambda: forward_batch(sample, result.params), repetitions=3, warmup=1)
    efficiency = EfficiencyReport(
        parameter_count=count_parameters(result.params),
        flops_per_forward=estimate_flops(
            result.params, (dataset.lookback, dataset.n_features)
        ),
        inference_ms_per_window=mean_ms / max(1, sample.shape[0]),
        training_time_s=result.wall_time_s,
    )

    payload_core = {
        "spec": spec.as_dict(),
        "resolved_hyperparams": asdict(hp),
        "train_config": asdict(cfg),
        "swarm_config": {
            "n_particles": swarm_cfg.n_particles,
            "iterations": swarm_cfg.iterations,
            "omega": swarm_cfg.omega,
            "c1": swarm_cfg.c1,
            "c2": swarm_cfg.c2,
            "inertia_schedule": swarm_cfg.inertia_schedule,
        },
        "eval": eval_report.as_dict(),
        "efficiency": {
            "parameter_count": efficiency.parameter_count,
            "flops_per_forward": efficiency.flops_per_forward,
        },
        "training": result.summary(),
        "audit": audit,
    }
    version = _version_string(payload_core)

    report = RunReport(
        spec=payload_core["spec"],
        resolved_hyperparams=payload_core["resolved_hyperparams"],
        train_config=payload_core["train_config"],
        swarm_config=payload_core["swarm_config"],
        eval=eval_report,
        efficiency=efficiency,
        training=payload_core["training"],
        audit=audit,
        version=version,
        train_report=result,
        split=split,
        dataset=dataset,
    )
    payload = report.deterministic_payload()
    validate_run_report(payload)
    (out_dir / "reports" / "run_report.json").write_text(canonical_json(payload))
    (out_dir / "reports" / "timing.json").write_text(
        canonical_json(report.timing_payload())
    )
    save_checkpoint(
        result.params,
        out_dir / "checkpoints" / "model.ckpt",
        metadata={"seeds": asdict(spec.seeds), "report_version": version},
    )
    return report


def _run_suite(specs: dict) -> dict:
    """Run named experiments, possibly in parallel; deterministic outputs."""
    threads = suite_thread_count(len(specs))
    if threads == 1:
        return {name: run_experiment(s) for name, s in specs.items()}
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {name: pool.submit(run_experiment, s) for name, s in specs.items()}
        return {name: f.result() for name, f in futures.items()}


def _metric_cell(value):
    return "" if value is None else repr(float(value))


def run_ablation_suite(base: ExperimentSpec) -> dict:
    """Run all four variants with shared data and seeds; emit the 4x4 table."""
    out_dir = Path(base.output_dir)
    specs = {}
    for label, variant in ABLATION_ROWS:
        specs[label] = replace(
            base,
            variant=variant,
            output_dir=str(out_dir / variant),
            dataset=dict(base.dataset),
        )
    reports = _run_suite(specs)

    test_sets = {
        label: tuple(int(i) for i in r.split.test) for label, r in reports.items()
    }
    if len(set(test_sets.values())) != 1:
        raise RuntimeError(f"ablation rows disagree on test indices: {test_sets}")

    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "ablation_table.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ABLATION_CSV_HEADER)
        for label, _ in ABLATION_ROWS:
            e = reports[label].eval
            writer.writerow(
                [label] + [_metric_cell(v) for v in (e.mae, e.mape, e.rmse, e.mse)]
            )

    full_mse = reports["ALL"].eval.mse
    summary = {
        "rows": [label for label, _ in ABLATION_ROWS],
        "table": str(table_path),
        "shared_test_indices": True,
        "full_model_mse": full_mse,
        "full_model_best": all(
            full_mse <= reports[label].eval.mse for label, _ in ABLATION_ROWS[:-1]
        ),
        "versions": {label: r.version for label, r in reports.items()},
    }
    (out_dir / "ablation_summary.json").write_text(canonical_json(summary))
    return {"reports": reports, "summary": summary}


OPTIMIZER_ROWS = ("adam", "adaptive-momentum", "sgd+pso")


def run_optimizer_comparison(base: ExperimentSpec) -> dict:
    """Compare update rules on the full model; emit efficiency + accuracy."""
    out_dir = Path(base.output_dir)
    specs = {}
    for row in OPTIMIZER_ROWS:
        spec = replace(
            base,
            variant="full",
            output_dir=str(out_dir / row.replace("+", "-")),
            dataset=dict(base.dataset),
            train=dict(base.train),
        )
        if row == "adam":
            spec.optimizer = "adam"
            spec.hyperparameter_source = "fixed"
            spec.train.update({"adam_lr": 1e-3, "batch_size": 64})
        elif row == "adaptive-momentum":
            spec.optimizer = "adaptive-momentum"
            spec.hyperparameter_source = "fixed"
            spec.train.update(
                {
                    "momentum_lr": 1e-3,
                    "momentum_init": 0.9,
                    "momentum_update_rate": 0.1,
                    "batch_size": 64,
                }
            )
        else:
            spec.optimizer = "sgd"
            spec.hyperparameter_source = "pso-search"
        specs[row] = spec
    reports = _run_suite(specs)

    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "optimizer_table.csv"
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(OPTIMIZER_CSV_HEADER)
        for row in OPTIMIZER_ROWS:
            r = reports[row]
            writer.writerow(
                [
                    row,
                    r.efficiency.parameter_count,
                    r.efficiency.flops_per_forward,
                    repr(r.efficiency.inference_ms_per_window),
                    repr(r.efficiency.training_time_s),
                ]
                + [
                    _metric_cell(v)
                    for v in (r.eval.mae, r.eval.mape, r.eval.rmse, r.eval.mse)
                ]
            )
    summary = {
        "rows": list(OPTIMIZER_ROWS),
        "table": str(table_path),
        "versions": {row: reports[row].version for row in OPTIMIZER_ROWS},
    }
    (out_dir / "optimizer_summary.json").write_text(canonical_json(summary))
    return {"reports": reports, "summary": summary}


def run_pso_distribution_study(
    objective_name: str,
    run_count: int = 10,
    out_dir="out",
    dim: int = 5,
    configs=("static", "dynamic"),
    base_seed: int = 0,
    swarm_overrides: dict | None = None,
) -> dict:
    """Repeated independent swarm runs per inertia configuration.

    Writes one history CSV per configuration plus a summary with per-run
    bests and their mean/median/std.
    """
    objective = P.make_objective(objective_name, dim)
    out_dir = Path(out_dir)
    (out_dir / "histories").mkdir(parents=True, exist_ok=True)
    summary = {"objective": objective_name, "dim": dim, "configs": {}}
    for config in configs:
        overrides = dict(swarm_overrides or {})
        if config == "dynamic":
            overrides.update(
                {"inertia_schedule": "linear", "omega_start": 0.9, "omega_end": 0.4}
            )
        elif config != "static":
            raise ValueError(f"unknown swarm configuration {config!r}")
        histories = {}
        bests = []
        for i in range(run_count):
            seed = base_seed + i
            cfg = P.SwarmConfig(
                bounds=[(-5.0, 5.0)] * dim, seed=seed, **overrides
            )
            _, best, history = P.run(cfg, objective)
            histories[seed] = history
            bests.append(best)
        path = out_dir / "histories" / f"pso_{objective_name}_{config}.csv"
        P.write_history_csv(path, histories)
        arr = np.array(bests)
        summary["configs"][config] = {
            "per_run_best": [float(b) for b in bests],
            "mean": float(arr.mean()),
            "median": float(np.median(arr)),
            "std": float(arr.std()),
            "history_csv": str(path),
        }
    (out_dir / "pso_study_summary.json").write_text(canonical_json(summary))
    return summary
