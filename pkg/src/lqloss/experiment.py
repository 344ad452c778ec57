"""Experiment orchestration: configs, seeded repetitions, sweeps, outputs.

A single JSON document describes an experiment: dataset source (synthetic
blobs or a CSV file), noise model, training recipe, optional prune-train
schedule, and repetition count. Every random draw flows from the declared
base seed through named derivation, so reruns of the same config are
byte-identical; test-split labels are never corrupted anywhere. Output
files are written atomically (temp file + rename).
"""

import hashlib
import json
import os
import zlib
from dataclasses import dataclass, asdict, field, replace

import numpy as np

from .data import Dataset, ExperimentData, NoisyDataset, load_csv, split_indices, synth_blobs
from .errors import ConfigError, DataError
from .losses import LossConfig
from .noise import (NoiseModel, OutlierSpec, build_transition_matrix, inject_noise,
                    inject_open_set, preset_circular_flip, preset_pair_flip)
from .pruning import AcsConfig, acs_train
from .train import TrainConfig, train

METRICS_SCHEMA_VERSION = 1


def derive_rng(base_seed: int, *tags) -> np.random.Generator:
    """Generator seeded from (base_seed, tags...); string tags are crc32-hashed.

    Adding new stages never perturbs the streams of existing ones since
    each (base, tags) tuple owns an independent stream.
    """
    return np.random.default_rng(_seed_key(base_seed, *tags))


def derive_seed(base_seed: int, *tags) -> int:
    """Stable integer sub-seed for APIs that take a plain seed."""
    return int(np.random.SeedSequence(_seed_key(base_seed, *tags)).generate_state(1)[0])


def _seed_key(base_seed, *tags):
    key = [int(base_seed)]
    for t in tags:
        key.append(zlib.crc32(t.encode()) if isinstance(t, str) else int(t))
    return key


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def atomic_write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _require_keys(d: dict, where: str, required: set, optional: set = frozenset()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    missing = required - d.keys()
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")
    unknown = d.keys() - required - optional
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class BlobSpec:
    n: int
    d: int
    c: int
    separation: float
    seed: int


@dataclass(frozen=True)
class NoiseSpec:
    """Raw noise description; resolved to a NoiseModel once c is known."""

    kind: str
    eta: float = 0.0
    preset: str | None = None
    pairs: tuple = ()
    transition: np.ndarray | None = None
    fraction: float = 0.0
    outlier: OutlierSpec | None = None

    def resolve(self, c: int) -> NoiseModel:
        if self.kind == "uniform":
            return NoiseModel.uniform(self.eta)
        if self.kind == "open_set":
            return NoiseModel.open_set(self.fraction, self.outlier)
        if self.preset == "circular":
            return preset_circular_flip(self.eta, c)
        if self.pairs:
            return preset_pair_flip(self.pairs, self.eta, c)
        return NoiseModel.class_dependent(self.transition)


@dataclass(frozen=True)
class LossSpec:
    """Raw loss description; ``confusion="noise"`` borrows the true transition."""

    kind: str
    q: float | None = None
    k: float | None = None
    confusion: object = None

    def resolve(self, c: int, noise: NoiseModel | None = None) -> LossConfig:
        confusion = self.confusion
        if confusion == "noise":
            if noise is None:
                raise ConfigError("forward_cce with confusion='noise' needs a noise model")
            confusion = build_transition_matrix(noise, c)
        elif confusion is not None:
            confusion = np.asarray(confusion, dtype=np.float64)
        return LossConfig(kind=self.kind, q=self.q, k=self.k, confusion=confusion)

    def describe(self) -> str:
        if self.kind == "lq":
            return f"lq(q={self.q:g})"
        if self.kind == "trunc_lq":
            return f"trunc_lq(q={self.q:g},k={self.k:g})"
        return self.kind


@dataclass(frozen=True)
class TrainParams:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_schedule: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: object  # BlobSpec or CSV path string
    noise: NoiseSpec
    train: TrainParams
    loss: LossSpec
    arch: tuple = ()
    acs: AcsConfig | None = None
    validation_fraction: float = 0.10
    test_fraction: float = 0.20
    repetitions: int = 1
    base_seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        if not 0.0 < self.validation_fraction <= 0.5:
            raise ConfigError("validation_fraction must be in (0, 0.5]")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in [0, 1)")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")


def parse_config(doc: dict) -> ExperimentConfig:
    """Parse and validate a config document; unknown keys are rejected."""
    _require_keys(doc, "config", {"dataset", "noise", "train"},
                  {"acs", "arch", "validation_fraction", "test_fraction",
                   "repetitions", "base_seed", "output_dir"})
    ds = doc["dataset"]
    _require_keys(ds, "dataset", {"kind"},
                  {"n", "d", "c", "separation", "seed", "path"})
    if ds["kind"] == "blobs":
        _require_keys(ds, "dataset", {"kind", "n", "d", "c", "separation", "seed"})
        dataset = BlobSpec(n=int(ds["n"]), d=int(ds["d"]), c=int(ds["c"]),
                           separation=float(ds["separation"]), seed=int(ds["seed"]))
    elif ds["kind"] == "csv":
        _require_keys(ds, "dataset", {"kind", "path"})
        dataset = str(ds["path"])
    else:
        raise ConfigError(f"dataset.kind must be 'blobs' or 'csv', got {ds['kind']!r}")

    noise = _parse_noise(doc["noise"])
    tr = dict(doc["train"])
    _require_keys(tr, "train", {"loss"},
                  {"epochs", "batch_size", "learning_rate", "momentum",
                   "weight_decay", "lr_schedule"})
    loss = _parse_loss(tr.pop("loss"))
    if "lr_schedule" in tr:
        tr["lr_schedule"] = tuple((int(e), float(v)) for e, v in tr["lr_schedule"])
    train_params = TrainParams(**tr)

    acs = None
    if "acs" in doc:
        ac = doc["acs"]
        _require_keys(ac, "acs", {"total_epochs", "warmup_epochs", "prune_interval", "q", "k"},
                      {"snapshot_policy"})
        acs = AcsConfig(total_epochs=int(ac["total_epochs"]),
                        warmup_epochs=int(ac["warmup_epochs"]),
                        prune_interval=int(ac["prune_interval"]),
                        q=float(ac["q"]), k=float(ac["k"]),
                        snapshot_policy=ac.get("snapshot_policy", "best-validation"))

    return ExperimentConfig(
        dataset=dataset, noise=noise, train=train_params, loss=loss,
        arch=tuple(int(w) for w in doc.get("arch", [])), acs=acs,
        validation_fraction=float(doc.get("validation_fraction", 0.10)),
        test_fraction=float(doc.get("test_fraction", 0.20)),
        repetitions=int(doc.get("repetitions", 1)),
        base_seed=int(doc.get("base_seed", 0)),
        output_dir=doc.get("output_dir"),
    )


def _parse_noise(d: dict) -> NoiseSpec:
    _require_keys(d, "noise", {"kind"},
                  {"eta", "preset", "pairs", "transition", "fraction", "outlier"})
    kind = d["kind"]
    if kind == "uniform":
        _require_keys(d, "noise", {"kind"}, {"eta"})
        return NoiseSpec(kind="uniform", eta=float(d.get("eta", 0.0)))
    if kind == "class_dependent":
        _require_keys(d, "noise", {"kind"}, {"eta", "preset", "pairs", "transition"})
        preset = d.get("preset")
        pairs = tuple(tuple(p) for p in d.get("pairs", ()))
        transition = d.get("transition")
        given = sum(x is not None and x != () for x in (preset, pairs, transition))
        if given != 1:
            raise ConfigError("class_dependent noise needs exactly one of preset/pairs/transition")
        if preset is not None and preset != "circular":
            raise ConfigError(f"unknown noise preset {preset!r}")
        t = None if transition is None else np.asarray(transition, dtype=np.float64)
        return NoiseSpec(kind="class_dependent", eta=float(d.get("eta", 0.0)),
                         preset=preset, pairs=pairs, transition=t)
    if kind == "open_set":
        _require_keys(d, "noise", {"kind", "fraction"}, {"outlier"})
        outlier = None
        if "outlier" in d:
            _require_keys(d["outlier"], "noise.outlier", set(), {"margin", "components", "scale"})
            outlier = OutlierSpec(**{k: v for k, v in d["outlier"].items()})
        return NoiseSpec(kind="open_set", fraction=float(d["fraction"]), outlier=outlier)
    raise ConfigError(f"noise.kind must be uniform/class_dependent/open_set, got {kind!r}")


def _parse_loss(d: dict) -> LossSpec:
    _require_keys(d, "train.loss", {"kind"}, {"q", "k", "confusion"})
    return LossSpec(kind=d["kind"], q=d.get("q"), k=d.get("k"), confusion=d.get("confusion"))


def config_hash(doc_or_config) -> str:
    """Stable hash of the canonical JSON form of a config."""
    if isinstance(doc_or_config, ExperimentConfig):
        doc = _config_to_doc(doc_or_config)
    else:
        doc = doc_or_config
    blob = json.dumps(doc, sort_keys=True, default=_json_default).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if hasattr(obj, "__dict__") or hasattr(obj, "__dataclass_fields__"):
        return asdict(obj) if hasattr(obj, "__dataclass_fields__") else vars(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def _config_to_doc(config: ExperimentConfig) -> dict:
    doc = asdict(config)
    doc["dataset"] = asdict(config.dataset) if isinstance(config.dataset, BlobSpec) \
        else {"path": config.dataset}
    doc.pop("output_dir", None)  # where results land does not define the experiment
    return json.loads(json.dumps(doc, sort_keys=True, default=_json_default))


@dataclass
class RunRecord:
    """Outcome of one repetition."""

    repetition: int
    init_seed: int
    noise_seed: int
    config_hash: str
    best_val_epoch: int
    best_val_test_accuracy: float
    last_epoch_test_accuracy: float
    final_val_accuracy: float
    metrics: list = field(default_factory=list)
    prune_events: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["metrics"] = [m if isinstance(m, dict) else m.to_dict() for m in self.metrics]
        d["prune_events"] = [e if isinstance(e, dict) else e.to_dict() for e in self.prune_events]
        return d


def _load_source(config: ExperimentConfig) -> Dataset:
    if isinstance(config.dataset, BlobSpec):
        s = config.dataset
        return synth_blobs(s.n, s.d, s.c, s.separation, s.seed)
    ds = load_csv(config.dataset)
    if isinstance(ds, NoisyDataset):
        raise DataError("experiment input must be a clean dataset; run injection separately")
    return ds


def prepare_data(config: ExperimentConfig, repetition: int) -> ExperimentData:
    """Split the source and corrupt train+val labels for one repetition.

    The split is fixed across repetitions; the noise draw (and the
    open-set feature replacements) use a per-repetition derived seed. The
    test split keeps its pristine labels and features.
    """
    source = _load_source(config)
    train_idx, val_idx, test_idx = split_indices(
        source.n, config.test_fraction, config.validation_fraction,
        derive_seed(config.base_seed, "split"))
    pool_idx = np.concatenate([train_idx, val_idx])
    pool = source.subset(pool_idx)
    noise_seed = derive_seed(config.base_seed, repetition, "noise")
    if config.noise.kind == "open_set":
        noisy_pool = inject_open_set(pool, config.noise.fraction, config.noise.outlier,
                                     noise_seed)
    else:
        model = config.noise.resolve(source.num_classes)
        noisy_pool = inject_noise(pool, model, noise_seed)
    n_train = train_idx.size
    return ExperimentData(train=noisy_pool.subset(np.arange(n_train)),
                          val=noisy_pool.subset(np.arange(n_train, pool.n)),
                          test=source.subset(test_idx))


def run_one(config: ExperimentConfig, repetition: int) -> RunRecord:
    data = prepare_data(config, repetition)
    c = data.train.num_classes
    noise_model = None if config.noise.kind == "open_set" else config.noise.resolve(c)
    loss = config.loss.resolve(c, noise_model)
    init_seed = derive_seed(config.base_seed, repetition, "init")
    train_cfg = TrainConfig(loss=loss, seed=init_seed, **asdict(config.train))
    prune_events = []
    if config.acs is not None:
        _, history = acs_train(data, config.arch, train_cfg, config.acs)
        metrics = history.metrics
        prune_events = history.prune_events
    else:
        _, metrics = train(data, config.arch, train_cfg)
    val_curve = [m.val_accuracy for m in metrics]
    best_epoch = int(np.argmax(val_curve))
    return RunRecord(
        repetition=repetition,
        init_seed=init_seed,
        noise_seed=derive_seed(config.base_seed, repetition, "noise"),
        config_hash=config_hash(config),
        best_val_epoch=best_epoch,
        best_val_test_accuracy=metrics[best_epoch].test_accuracy,
        last_epoch_test_accuracy=metrics[-1].test_accuracy,
        final_val_accuracy=val_curve[-1],
        metrics=metrics,
        prune_events=prune_events,
    )


def summarize(records: list[RunRecord], failures: list[dict]) -> dict:
    def stats(values):
        if not values:
            return {"mean": None, "std": None, "values": []}
        arr = np.asarray(values, dtype=np.float64)
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        return {"mean": float(arr.mean()), "std": std, "values": [float(v) for v in values]}

    return {
        "config_hash": records[0].config_hash if records else None,
        "repetitions_requested": len(records) + len(failures),
        "repetitions_succeeded": len(records),
        "failures": failures,
        "best_val_epoch_test_accuracy": stats([r.best_val_test_accuracy for r in records]),
        "last_epoch_test_accuracy": stats([r.last_epoch_test_accuracy for r in records]),
    }


def run_experiment(config: ExperimentConfig) -> tuple[list[RunRecord], dict]:
    """Run every repetition, then write records, metrics, and the summary.

    A repetition that raises is recorded in the summary's failure list and
    the remaining repetitions still run.
    """
    records, failures = [], []
    for rep in range(config.repetitions):
        try:
            records.append(run_one(config, rep))
        except Exception as exc:  # noqa: BLE001 - per-repetition isolation is the contract
            failures.append({"repetition": rep, "error": f"{type(exc).__name__}: {exc}"})
    summary = summarize(records, failures)
    if config.output_dir:
        outdir = config.output_dir
        os.makedirs(outdir, exist_ok=True)
        for record in records:
            lines = [json.dumps({"v": METRICS_SCHEMA_VERSION, **m.to_dict()}, sort_keys=True)
                     for m in record.metrics]
            atomic_write_text(os.path.join(outdir, f"run_r{record.repetition}.metrics.jsonl"),
                              "\n".join(lines) + "\n")
            doc = record.to_dict()
            doc["v"] = METRICS_SCHEMA_VERSION
            atomic_write_json(os.path.join(outdir, f"run_r{record.repetition}.record.json"), doc)
        atomic_write_json(os.path.join(outdir, "summary.json"), summary)
    return records, summary


def _loss_variants(loss_kinds, q_grid, k: float):
    """Expand sweep loss kinds into concrete loss specs; q=0 dispatches to cce."""
    variants = []
    for kind in loss_kinds:
        if kind in ("cce", "mae"):
            variants.append(LossSpec(kind=kind))
        elif kind == "forward_cce":
            variants.append(LossSpec(kind="forward_cce", confusion="noise"))
        elif kind == "lq":
            for q in q_grid:
                variants.append(LossSpec(kind="cce") if q == 0 else LossSpec(kind="lq", q=q))
        elif kind == "trunc_lq":
            for q in q_grid:
                variants.append(LossSpec(kind="cce") if q == 0
                                else LossSpec(kind="trunc_lq", q=q, k=k))
        else:
            raise ConfigError(f"unknown sweep loss kind {kind!r}")
    return variants


def sweep(config: ExperimentConfig, q_grid, eta_grid, loss_kinds) -> dict:
    """Cross-product of noise rates and loss variants.

    Each cell reruns the base experiment with only the noise rate and the
    loss changed (seeds included), so comparisons down a column are
    paired. Returns a table dict; ``sweep_to_csv`` renders it.
    """
    if not q_grid and any(k in ("lq", "trunc_lq") for k in loss_kinds):
        raise ConfigError("q_grid must be non-empty for lq/trunc_lq sweeps")
    if not list(eta_grid):
        raise ConfigError("eta_grid must be non-empty")
    k = config.acs.k if config.acs is not None else (config.loss.k or 0.5)
    variants = _loss_variants(loss_kinds, q_grid, k)
    columns = [v.describe() for v in variants]
    rows = []
    for eta in eta_grid:
        row = {"eta": float(eta), "cells": {}}
        for variant, col in zip(variants, columns):
            cell_cfg = replace(config, loss=variant, output_dir=None,
                               noise=replace(config.noise, eta=float(eta)),
                               acs=config.acs if variant.kind == "trunc_lq" and config.acs
                               else None)
            if variant.kind == "trunc_lq" and config.acs is not None:
                cell_cfg = replace(cell_cfg, acs=replace(config.acs, q=variant.q, k=variant.k))
            try:
                _, summary = run_experiment(cell_cfg)
                if summary["repetitions_succeeded"] == 0:
                    raise RuntimeError(summary["failures"][0]["error"])
                row["cells"][col] = summary["best_val_epoch_test_accuracy"]
            except Exception as exc:  # noqa: BLE001 - per-cell isolation is the contract
                row["cells"][col] = {"failed": f"{type(exc).__name__}: {exc}"}
        rows.append(row)
    return {"columns": columns, "rows": rows}


def sweep_to_csv(table: dict) -> str:
    lines = [",".join(["eta"] + table["columns"])]
    for row in table["rows"]:
        cells = []
        for col in table["columns"]:
            cell = row["cells"][col]
            if "failed" in cell:
                cells.append("failed")
            else:
                cells.append(f"{cell['mean']:.4f}+-{cell['std']:.4f}")
        lines.append(",".join([f"{row['eta']:g}"] + cells))
    return "\n".join(lines) + "\n"
