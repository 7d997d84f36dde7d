"""Experiment orchestration.

Ties the library together: parse a flat key-value config, build the dataset,
train the original model, run each unlearning method under data-access
accounting, evaluate everything, and emit the artifact set

    config.cfg          resolved config echo (canonical form)
    checkpoints/*.ckpt  original + one per method, with provenance
    results.json        full metric report, deterministic bytes for a seed
    table1.csv          accuracy grid, fixed row order
    asr.csv             membership-attack success rates
    entropy.csv         per-sample output entropies by method and split
    timing.csv          wall clocks and speedups vs retrain
    rasters/*.pgm       decision-region images (2-feature runs only)

results.json carries no wall-clock numbers, so two runs with the same config
produce byte-identical files; timings live in timing.csv and in checkpoint
provenance, which is what lets `report` re-emit every table.
"""

import contextlib
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import CountingSplit, forget_split, load_csv, make_blobs
from .metrics import MIAConfig, compare_methods
from .network import DenseClassifier, SGDConfig
from .unlearn import (
    METHODS,
    ShrinkConfig,
    UnlearnResult,
    boundary_expanding,
    boundary_shrink,
    finetune_baseline,
    negative_gradient_baseline,
    random_labels_baseline,
    retrain,
)

__all__ = [
    "ExperimentConfig",
    "StageError",
    "parse_config_text",
    "load_config",
    "run_experiment",
    "evaluate_run",
    "report_run",
    "TABLE1_ROWS",
]

# Fixed row order for table1.csv.
TABLE1_ROWS = (
    "original",
    "retrain",
    "finetune",
    "negative_gradient",
    "random_labels",
    "boundary_shrink",
    "boundary_expanding",
)

# Which dataset partitions each method may touch. Boundary and label-noise
# methods see only the forget samples; retrain-family methods see only the
# retained samples. Violations abort the run.
_ALLOWED_READS = {
    "retrain": {"X_retain", "y_retain"},
    "finetune": {"X_retain", "y_retain"},
    "negative_gradient": {"X_forget", "y_forget"},
    "random_labels": {"X_forget", "y_forget"},
    "boundary_shrink": {"X_forget", "y_forget"},
    "boundary_expanding": {"X_forget", "y_forget"},
}


@dataclass
class ExperimentConfig:
    """Resolved experiment settings; every field has a config-file key."""

    seed: int = 0
    dataset_kind: str = "blobs"
    n_classes: int = 10
    per_class: int = 200
    n_features: int = 2
    spread: float = 0.45
    csv_path: str = ""
    csv_header: bool = False
    hidden_layers: tuple = (64, 64)
    train_lr: float = 0.05
    train_momentum: float = 0.9
    train_batch: int = 64
    train_epochs: int = 60
    forget_class: int = 0
    epsilon: float = 0.5
    unlearn_lr: float = 3e-4
    unlearn_momentum: float = 0.9
    unlearn_batch: int = 64
    unlearn_epochs: int = 10
    refresh_labels: bool = False
    finetune_lr: float = 0.0  # 0 means 10x unlearn_lr
    finetune_epochs: int = 5
    neg_grad_lr: float = 0.0  # 0 means unlearn_lr
    neg_grad_epochs: int = 5
    mia_feature: str = "entropy"
    raster_resolution: int = 512
    methods: tuple = METHODS

    def __post_init__(self):
        if self.dataset_kind not in ("blobs", "csv"):
            raise ValueError(f"dataset.kind must be blobs or csv, got {self.dataset_kind!r}")
        if self.dataset_kind == "csv" and not self.csv_path:
            raise ValueError("missing required config key: dataset.csv (dataset.kind = csv)")
        if not 0 <= self.forget_class < self.n_classes:
            raise ValueError(
                f"forget.class must be in [0, {self.n_classes}), got {self.forget_class}"
            )
        if self.epsilon <= 0:
            raise ValueError(f"unlearn.epsilon must be positive, got {self.epsilon}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(
                f"unknown methods {unknown}; valid methods are {', '.join(METHODS)}"
            )

    def resolved_finetune_lr(self):
        return self.finetune_lr if self.finetune_lr > 0 else 10.0 * self.unlearn_lr

    def resolved_neg_grad_lr(self):
        return self.neg_grad_lr if self.neg_grad_lr > 0 else self.unlearn_lr


# config-file key -> (attribute, parser)
def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int_tuple(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of integers")
    return tuple(int(p) for p in parts)


def _parse_methods(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


_CONFIG_KEYS = {
    "seed": ("seed", int),
    "dataset.kind": ("dataset_kind", str.strip),
    "dataset.classes": ("n_classes", int),
    "dataset.per_class": ("per_class", int),
    "dataset.features": ("n_features", int),
    "dataset.spread": ("spread", float),
    "dataset.csv": ("csv_path", str.strip),
    "dataset.header": ("csv_header", _parse_bool),
    "model.hidden": ("hidden_layers", _parse_int_tuple),
    "train.learning_rate": ("train_lr", float),
    "train.momentum": ("train_momentum", float),
    "train.batch_size": ("train_batch", int),
    "train.epochs": ("train_epochs", int),
    "forget.class": ("forget_class", int),
    "unlearn.epsilon": ("epsilon", float),
    "unlearn.learning_rate": ("unlearn_lr", float),
    "unlearn.momentum": ("unlearn_momentum", float),
    "unlearn.batch_size": ("unlearn_batch", int),
    "unlearn.epochs": ("unlearn_epochs", int),
    "unlearn.refresh_labels": ("refresh_labels", _parse_bool),
    "finetune.learning_rate": ("finetune_lr", float),
    "finetune.epochs": ("finetune_epochs", int),
    "negative_gradient.learning_rate": ("neg_grad_lr", float),
    "negative_gradient.epochs": ("neg_grad_epochs", int),
    "mia.feature": ("mia_feature", str.strip),
    "raster.resolution": ("raster_resolution", int),
    "methods": ("methods", _parse_methods),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in _CONFIG_KEYS.items()}


def parse_config_text(text, origin="<config>"):
    """Parse ``key = value`` lines into an ExperimentConfig.

    Blank lines and lines starting with # are ignored. Unknown or duplicate
    keys and unparseable values are errors that name the offending line.
    """
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{origin}:{lineno}: unknown config key {key!r}")
        if key in seen:
            raise ValueError(
                f"{origin}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})"
            )
        seen[key] = lineno
        attr, parser = _CONFIG_KEYS[key]
        try:
            values[attr] = parser(value.strip())
        except ValueError as exc:
            raise ValueError(f"{origin}:{lineno}: bad value for {key!r}: {exc}") from None
    return ExperimentConfig(**values)


def load_config(path):
    path = Path(path)
    return parse_config_text(path.read_text(), origin=str(path))


def config_text(cfg):
    """Serialize a config back to canonical flat form (sorted keys)."""
    lines = []
    for key in sorted(_CONFIG_KEYS):
        attr, _ = _CONFIG_KEYS[key]
        value = getattr(cfg, attr)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_digest(cfg):
    return hashlib.sha256(config_text(cfg).encode()).hexdigest()


def derive_seed(root_seed, name):
    """Stable named seed stream: hash the name into SeedSequence entropy."""
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")
    return int(np.random.SeedSequence([root_seed, tag]).generate_state(1, np.uint64)[0])


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def build_dataset(cfg):
    if cfg.dataset_kind == "csv":
        return load_csv(
            cfg.csv_path,
            n_classes=cfg.n_classes,
            n_features=cfg.n_features,
            header=cfg.csv_header,
        )
    return make_blobs(
        n_classes=cfg.n_classes,
        per_class=cfg.per_class,
        n_features=cfg.n_features,
        spread=cfg.spread,
        seed=derive_seed(cfg.seed, "data"),
    )


def make_template(cfg, stream):
    return DenseClassifier(
        hidden_layers=cfg.hidden_layers,
        n_classes=cfg.n_classes,
        learning_rate=cfg.train_lr,
        momentum=cfg.train_momentum,
        batch_size=cfg.train_batch,
        epochs=cfg.train_epochs,
        seed=derive_seed(cfg.seed, stream),
    )


def train_original(cfg, split):
    """Train the original model on the full training set (retain + forget)."""
    start = time.perf_counter()
    model = make_template(cfg, "train")
    X = np.concatenate([split.X_retain, split.X_forget])
    y = np.concatenate([split.y_retain, split.y_forget])
    model.fit(X, y)
    wall = time.perf_counter() - start
    return UnlearnResult(model=model, method="original",
                         wall_clock_seconds=wall, per_epoch_loss=model.loss_curve_)


def _unlearn_sgd(cfg, stream):
    return SGDConfig(
        learning_rate=cfg.unlearn_lr,
        momentum=cfg.unlearn_momentum,
        batch_size=cfg.unlearn_batch,
        epochs=cfg.unlearn_epochs,
        seed=derive_seed(cfg.seed, stream),
    )


def run_method(name, cfg, original, split):
    """Run one unlearning method with data-access accounting."""
    if name not in METHODS:
        raise ValueError(f"unknown method {name!r}; valid methods are {', '.join(METHODS)}")
    counted = CountingSplit(split)
    if name == "retrain":
        result = retrain(counted, make_template(cfg, "retrain"))
    elif name == "finetune":
        sgd = SGDConfig(
            learning_rate=cfg.resolved_finetune_lr(),
            momentum=cfg.unlearn_momentum,
            batch_size=cfg.unlearn_batch,
            epochs=cfg.finetune_epochs,
            seed=derive_seed(cfg.seed, "unlearn.finetune"),
        )
        result = finetune_baseline(original, counted, sgd)
    elif name == "negative_gradient":
        sgd = SGDConfig(
            learning_rate=cfg.resolved_neg_grad_lr(),
            momentum=cfg.unlearn_momentum,
            batch_size=cfg.unlearn_batch,
            epochs=cfg.neg_grad_epochs,
            seed=derive_seed(cfg.seed, "unlearn.negative_gradient"),
        )
        result = negative_gradient_baseline(original, counted, sgd)
    elif name == "random_labels":
        result = random_labels_baseline(
            original, counted, _unlearn_sgd(cfg, "unlearn.random_labels"),
            seed=derive_seed(cfg.seed, "relabel"),
        )
    elif name == "boundary_shrink":
        shrink_cfg = ShrinkConfig(
            epsilon=cfg.epsilon,
            finetune=_unlearn_sgd(cfg, "unlearn.boundary_shrink"),
            refresh_labels_each_epoch=cfg.refresh_labels,
        )
        result = boundary_shrink(original, counted, shrink_cfg)
    else:
        result = boundary_expanding(
            original, counted, _unlearn_sgd(cfg, "unlearn.boundary_expanding")
        )
    counted.assert_only_read(_ALLOWED_READS[name])
    return result


@dataclass
class RunOutput:
    out_dir: Path
    reports: list
    results: dict
    wall_clocks: dict


@contextlib.contextmanager
def _stage(name, holder):
    holder[0] = name
    yield


def run_experiment(cfg, out_dir):
    """Full pipeline. On failure, removes partial artifacts and raises
    StageError naming the stage that broke."""
    out_dir = Path(out_dir)
    written = []
    current = [None]
    try:
        with _stage("config", current):
            (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
            (out_dir / "rasters").mkdir(parents=True, exist_ok=True)
            digest = config_digest(cfg)
            _write_text(out_dir / "config.cfg", config_text(cfg), written)

        with _stage("data", current):
            ds = build_dataset(cfg)
            split = forget_split(ds, cfg.forget_class)

        with _stage("train", current):
            results = {"original": train_original(cfg, split)}
            _save_result(out_dir, results["original"], cfg, digest, written)

        with _stage("unlearn", current):
            for name in cfg.methods:
                results[name] = run_method(name, cfg, results["original"].model, split)
                _save_result(out_dir, results[name], cfg, digest, written)

        with _stage("eval", current):
            doc, reports = _evaluate(cfg, results, split)

        with _stage("report", current):
            _write_text(out_dir / "results.json", _results_json(doc), written)
            _write_tables(out_dir, doc, written)
            _write_rasters(out_dir, reports, written)
    except Exception as exc:
        for path in written:
            with contextlib.suppress(OSError):
                os.unlink(path)
        raise StageError(current[0], exc) from exc
    walls = {name: res.wall_clock_seconds for name, res in results.items()}
    return RunOutput(out_dir=out_dir, reports=reports, results=doc, wall_clocks=walls)


def _evaluate(cfg, results, split):
    """Score every trained model and assemble the results document."""
    if "retrain" not in results:
        raise ValueError("evaluation requires a retrain checkpoint as reference")
    ordered = [results["original"]]
    ordered += [results[m] for m in TABLE1_ROWS[1:] if m in results]
    reports = compare_methods(
        ordered,
        retrain_ref=results["retrain"],
        split=split,
        mia_config=MIAConfig(feature=cfg.mia_feature),
        raster_resolution=cfg.raster_resolution,
    )
    doc = {
        "schema": "unlearnkit.results.v1",
        "seed": cfg.seed,
        "forget_class": cfg.forget_class,
        "n_classes": cfg.n_classes,
        "config_digest": config_digest(cfg),
        "methods": [r.method for r in reports],
        "reports": {r.method: _report_doc(r) for r in reports},
    }
    return doc, reports


def _report_doc(report):
    doc = {
        "acc_retain_train": report.acc_retain,
        "acc_forget_train": report.acc_forget,
        "acc_retain_test": report.acc_retain_test,
        "acc_forget_test": report.acc_forget_test,
        "asr": report.asr,
        "asr_threshold": report.asr_threshold,
        "asr_degenerate": report.asr_degenerate,
        "entropy": {split: list(map(float, values))
                    for split, values in report.entropy.items()},
    }
    if report.raster is not None:
        doc["region_area"] = list(map(float, report.raster.area_fractions))
        doc["raster_bounds"] = list(map(float, report.raster.bounds))
        doc["raster_resolution"] = report.raster.resolution
    return doc


def _results_json(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _save_result(out_dir, result, cfg, digest, written):
    provenance = {
        "method": result.method,
        "seed": cfg.seed,
        "forget_class": cfg.forget_class,
        "config_digest": digest,
        "wall_clock_seconds": result.wall_clock_seconds,
    }
    path = out_dir / "checkpoints" / f"{result.method}.ckpt"
    save_checkpoint(result.model, provenance, path)
    written.append(path)


def _write_text(path, text, written=None):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    if written is not None:
        written.append(path)


# --- tables ---------------------------------------------------------------

def _table1_csv(doc):
    lines = ["method,acc_retain_train,acc_forget_train,acc_retain_test,acc_forget_test"]
    for method in TABLE1_ROWS:
        if method not in doc["reports"]:
            continue
        r = doc["reports"][method]
        lines.append(
            f"{method},{r['acc_retain_train']!r},{r['acc_forget_train']!r},"
            f"{r['acc_retain_test']!r},{r['acc_forget_test']!r}"
        )
    return "\n".join(lines) + "\n"


def _asr_csv(doc):
    lines = ["method,asr,threshold,degenerate"]
    for method in TABLE1_ROWS:
        if method not in doc["reports"]:
            continue
        r = doc["reports"][method]
        flag = "true" if r["asr_degenerate"] else "false"
        lines.append(f"{method},{r['asr']!r},{r['asr_threshold']!r},{flag}")
    return "\n".join(lines) + "\n"


def _entropy_csv(doc):
    lines = ["method,split,entropy"]
    for method in TABLE1_ROWS:
        if method not in doc["reports"]:
            continue
        entropy = doc["reports"][method]["entropy"]
        for split in ("retain_train", "forget_train", "retain_test", "forget_test"):
            for value in entropy[split]:
                lines.append(f"{method},{split},{value!r}")
    return "\n".join(lines) + "\n"


def _timing_csv(walls):
    lines = ["method,wall_clock_seconds,speedup_vs_retrain"]
    retrain_wall = walls.get("retrain")
    for method in TABLE1_ROWS:
        if method not in walls:
            continue
        wall = walls[method]
        if retrain_wall is None:
            speedup = ""
        else:
            speedup = repr(retrain_wall / max(wall, 1e-12))
        lines.append(f"{method},{wall!r},{speedup}")
    return "\n".join(lines) + "\n"


def _write_tables(out_dir, doc, written, walls=None):
    _write_text(out_dir / "table1.csv", _table1_csv(doc), written)
    _write_text(out_dir / "asr.csv", _asr_csv(doc), written)
    _write_text(out_dir / "entropy.csv", _entropy_csv(doc), written)
    if walls is None:
        walls = _provenance_walls(out_dir)
    _write_text(out_dir / "timing.csv", _timing_csv(walls), written)


def _provenance_walls(out_dir):
    walls = {}
    ckpt_dir = Path(out_dir) / "checkpoints"
    for method in TABLE1_ROWS:
        path = ckpt_dir / f"{method}.ckpt"
        if path.exists():
            _, prov = load_checkpoint(path)
            walls[method] = float(prov["wall_clock_seconds"])
    return walls


def _write_rasters(out_dir, reports, written):
    raster_dir = out_dir / "rasters"
    raster_dir.mkdir(parents=True, exist_ok=True)
    for report in reports:
        if report.raster is None:
            continue
        base = raster_dir / report.method
        _write_text(Path(f"{base}.pgm"), _pgm_text(report.raster), written)
        sidecar = {
            "bounds": list(map(float, report.raster.bounds)),
            "resolution": report.raster.resolution,
            "area_fractions": list(map(float, report.raster.area_fractions)),
            "row_zero": "y_max",
        }
        _write_text(Path(f"{base}.json"),
                    json.dumps(sidecar, sort_keys=True, indent=2) + "\n", written)


def _pgm_text(raster):
    grid = raster.class_grid
    maxval = max(1, int(grid.max()))
    lines = ["P2", f"{grid.shape[1]} {grid.shape[0]}", str(maxval)]
    for row in grid:
        lines.append(" ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


# --- partial-pipeline entry points used by the CLI -------------------------

def train_to_dir(cfg, out_dir):
    """`train` subcommand body: dataset + original model + checkpoint."""
    out_dir = Path(out_dir)
    (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    digest = config_digest(cfg)
    _write_text(out_dir / "config.cfg", config_text(cfg))
    ds = build_dataset(cfg)
    split = forget_split(ds, cfg.forget_class)
    result = train_original(cfg, split)
    _save_result(out_dir, result, cfg, digest, [])
    return result, split


def unlearn_to_dir(cfg, out_dir, method):
    """`unlearn` subcommand body: load original, run one method, checkpoint."""
    out_dir = Path(out_dir)
    original_path = out_dir / "checkpoints" / "original.ckpt"
    if not original_path.exists():
        raise FileNotFoundError(
            f"{original_path}: no original checkpoint; run the train command first"
        )
    original, _ = load_checkpoint(original_path)
    ds = build_dataset(cfg)
    split = forget_split(ds, cfg.forget_class)
    result = run_method(method, cfg, original, split)
    _save_result(out_dir, result, cfg, config_digest(cfg), [])
    return result


def evaluate_run(cfg, out_dir):
    """`eval` subcommand body: recompute all metrics from checkpoints."""
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    results = {}
    walls = {}
    for method in TABLE1_ROWS:
        path = ckpt_dir / f"{method}.ckpt"
        if not path.exists():
            continue
        model, prov = load_checkpoint(path)
        wall = float(prov["wall_clock_seconds"])
        results[method] = UnlearnResult(model=model, method=method,
                                        wall_clock_seconds=wall, per_epoch_loss=[])
        walls[method] = wall
    if "original" not in results:
        raise FileNotFoundError(f"{ckpt_dir}/original.ckpt: missing; run train first")
    ds = build_dataset(cfg)
    split = forget_split(ds, cfg.forget_class)
    doc, reports = _evaluate(cfg, results, split)
    _write_text(out_dir / "results.json", _results_json(doc))
    _write_tables(out_dir, doc, [], walls=walls)
    _write_rasters(out_dir, reports, [])
    return RunOutput(out_dir=out_dir, reports=reports, results=doc, wall_clocks=walls)


def report_run(out_dir):
    """`report` subcommand body: re-emit every table from stored artifacts.

    Pure re-emission: reads results.json and checkpoint provenance, writes
    the CSV tables bit-identically to what the original run produced.
    """
    out_dir = Path(out_dir)
    results_path = out_dir / "results.json"
    if not results_path.exists():
        raise FileNotFoundError(f"{results_path}: no results; run the pipeline first")
    doc = json.loads(results_path.read_text())
    _write_tables(out_dir, doc, [])
    return doc
