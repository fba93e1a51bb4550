"""Experiment protocol: splits, fits, matching, cross-validation, tables.

``run_experiment`` reproduces the evaluation loop: split classes evenly
into disjoint train/test sets several times; optionally append
auxiliary datasets (naive augmentation gives every appended instance
weight one, the kliep_* modes fit importance weights against the
split's test data); fit the configured regressor on the possibly
weighted pool; nearest-neighbour match the test instances; aggregate
the metric as mean +/- sample standard deviation over splits.

Reports serialise canonically (sorted keys, no timing information), so
identical configs and seeds produce byte-identical files; wallclock per
stage is kept separately.
"""

import csv
import itertools
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .data import HyperParams, concat_datasets, load_manifest, make_splits
from .embedding import (
    ClassEmbeddingTable,
    build_class_table,
    instance_embeddings,
    load_attribute_table,
    load_word_vectors,
)
from .errors import ConfigError, DataError
from .kliep import kliep_fit
from .matching import accuracy, match, mean_average_precision
from .regressors import gomtl_fit, mte_fit, ridge_fit, rmtl_fit
from .synth import generate, generate_augmentation, load_synthetic_spec

MODELS = ("rr", "rmtl", "gomtl", "mte")
MATCHINGS = ("distributed", "latent")
WEIGHTINGS = ("none", "naive_da", "kliep_visual", "kliep_category", "kliep_full")
METRICS = ("accuracy", "map")
GRID_VALUES = (1e-3, 1e-2, 1e-1, 1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; field names double as config keys."""

    dataset: str = ""
    synthetic: str = ""
    embeddings: str = ""
    attributes: str = ""
    attribute_classes: str = ""
    augmentation: tuple = ()
    model: str = "rr"
    matching: str = "distributed"
    weighting: str = "none"
    metric: str = "accuracy"
    n_splits: int = 5
    seed: int = 0
    lambda_ridge: float = 0.1
    lambda_s: float = 0.01
    lambda_a: float = 0.01
    lambda_l: float = 0.01
    latent_t: int = 0  # 0 -> number of training classes in the split
    admm_rho: float = 1.0
    max_iters: int = 500
    rel_tol: float = 1e-8
    cv: bool = False
    grid: tuple = ()
    kliep_max_centers: int = 1000
    kliep_sigma: float = 0.0  # fixed bandwidth; 0 -> use kliep_sigma_policy
    kliep_sigma_policy: str = "median"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.matching not in MATCHINGS:
            raise ConfigError(f"matching must be one of {MATCHINGS}")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}")
        if self.matching == "latent" and self.model == "rr":
            raise ConfigError("latent matching requires a multi-task model")
        if bool(self.dataset) == bool(self.synthetic):
            raise ConfigError("set exactly one of 'dataset' and 'synthetic'")
        if self.dataset and not (
            self.embeddings or (self.attributes and self.attribute_classes)
        ):
            raise ConfigError(
                "manifest datasets need 'embeddings' or "
                "'attributes' + 'attribute_classes'"
            )
        if self.n_splits < 1:
            raise ConfigError("n_splits must be at least 1")
        if self.kliep_sigma_policy not in ("median", "lcv"):
            raise ConfigError("kliep_sigma_policy must be 'median' or 'lcv'")


def parse_config(path):
    """Read an ExperimentConfig from flat key=value text."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    spec = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in spec:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw, spec[key].default, path, lineno)
    return ExperimentConfig(**values)


def _coerce(key, raw, default, path, lineno):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = tuple(p.strip() for p in raw.split(",") if p.strip())
            if key == "grid":
                return tuple(float(p) for p in parts)
            return parts
        return raw
    except ValueError as exc:
        raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from None


def config_to_dict(config):
    out = {}
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregated metric over splits plus a config echo.

    ``stage_seconds`` holds wallclock per stage; it is excluded from
    the canonical serialisation so reports stay byte-reproducible.
    """

    config: dict
    metric: str
    per_split: tuple
    mean: float
    std: float
    converged: bool
    stage_seconds: dict

    def to_json(self):
        payload = {
            "config": self.config,
            "metric": self.metric,
            "per_split": list(self.per_split),
            "mean": self.mean,
            "std": self.std,
            "converged": self.converged,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text):
        payload = json.loads(text)
        return ExperimentReport(
            config=payload["config"],
            metric=payload["metric"],
            per_split=tuple(payload["per_split"]),
            mean=payload["mean"],
            std=payload["std"],
            converged=payload.get("converged", True),
            stage_seconds={},
        )


def _concat_tables(first, second):
    if first.kind != second.kind:
        raise DataError(
            f"cannot mix embedding kinds {first.kind!r} and {second.kind!r}"
        )
    overlap = set(first.class_names) & set(second.class_names)
    if overlap:
        raise DataError(f"class names present in both tables: {sorted(overlap)}")
    if first.dim != second.dim:
        raise DataError("embedding dimensions differ between tables")
    return ClassEmbeddingTable(
        V=np.hstack([first.V, second.V]),
        class_names=first.class_names + second.class_names,
        kind=first.kind,
    )


def _load_inputs(config):
    """Resolve the target dataset, its embedding table and the aux pools."""
    aux = []
    if config.synthetic:
        spec = load_synthetic_spec(config.synthetic)
        dataset, table, _ = generate(spec)
        if config.weighting != "none":
            aux.append(generate_augmentation(spec, dataset))
    else:
        dataset = load_manifest(config.dataset)
        if config.embeddings:
            vectors = load_word_vectors(config.embeddings)
            table = build_class_table(vectors, dataset.class_names)
        else:
            table = load_attribute_table(config.attributes, config.attribute_classes)
            if tuple(table.class_names) != tuple(dataset.class_names):
                raise DataError(
                    "attribute table class names do not match the dataset"
                )
        if config.weighting != "none":
            for manifest in config.augmentation:
                aux_ds = load_manifest(manifest)
                if config.embeddings:
                    aux_table = build_class_table(vectors, aux_ds.class_names)
                else:
                    raise ConfigError(
                        "augmentation with attribute embeddings is not supported; "
                        "provide a word-vector file covering the auxiliary classes"
                    )
                aux.append((aux_ds, aux_table))
    return dataset, table, aux


def _resolve_hyper(config, n_train_classes):
    latent_t = config.latent_t if config.latent_t > 0 else n_train_classes
    return HyperParams(
        lambda_ridge=config.lambda_ridge,
        lambda_s=config.lambda_s,
        lambda_a=config.lambda_a,
        lambda_l=config.lambda_l,
        latent_t=latent_t,
        admm_rho=config.admm_rho,
        max_iters=config.max_iters,
        rel_tol=config.rel_tol,
    )


def fit_model(name, X, Z, hyper, weights=None):
    if name == "rr":
        return ridge_fit(X, Z, hyper.lambda_ridge, weights=weights)
    if name == "rmtl":
        return rmtl_fit(X, Z, hyper, weights=weights)
    if name == "gomtl":
        return gomtl_fit(X, Z, hyper, weights=weights)
    if name == "mte":
        return mte_fit(X, Z, hyper, weights=weights)[0]
    raise ConfigError(f"unknown model {name!r}")


def _score(prediction, truth, metric):
    if metric == "accuracy":
        return accuracy(prediction, truth)
    return mean_average_precision(prediction.distances, truth)


def _run_split(config, dataset, table, aux, split):
    timers = {"data": 0.0, "weights": 0.0, "fit": 0.0, "match": 0.0}
    t0 = time.perf_counter()
    train_ds = dataset.subset_by_classes(split.train_classes)
    test_ds = dataset.subset_by_classes(split.test_classes)
    table_tr = table.subset(split.train_classes)
    table_te = table.subset(split.test_classes)

    pool_ds, pool_table = train_ds, table_tr
    if config.weighting != "none":
        for aux_ds, aux_table in aux:
            pool_ds = concat_datasets(pool_ds, aux_ds)
            pool_table = _concat_tables(pool_table, aux_table)
    Z_pool = instance_embeddings(pool_table, pool_ds)
    timers["data"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    weights = None
    kliep_converged = True
    if config.weighting.startswith("kliep_"):
        variant = config.weighting.removeprefix("kliep_")
        sigma = config.kliep_sigma if config.kliep_sigma > 0 else config.kliep_sigma_policy
        kliep_model, importance = kliep_fit(
            pool_ds.features,
            Z_pool,
            test_ds.features,
            table_te.V,
            variant=variant,
            sigma_policy=sigma,
            max_centers=config.kliep_max_centers,
            seed=split.seed,
        )
        weights = importance.omega
        kliep_converged = kliep_model.converged
    timers["weights"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    hyper = _resolve_hyper(config, train_ds.n_classes)
    if config.cv:
        grid = build_grid(config.model, hyper, config.grid)
        hyper = cross_validate(
            train_ds,
            table_tr,
            grid,
            config.model,
            split.seed,
            matching=config.matching,
            metric=config.metric,
        )
    model = fit_model(config.model, pool_ds.features, Z_pool, hyper, weights)
    fit_converged = getattr(getattr(model, "report", None), "converged", True)
    timers["fit"] += time.perf_counter() - t0

    t0 = time.perf_counter()
    prediction = match(model, test_ds.features, table_te, strategy=config.matching)
    value = _score(prediction, test_ds.labels, config.metric)
    timers["match"] += time.perf_counter() - t0
    return value, kliep_converged and fit_converged, timers


def run_experiment(config, threads=1):
    """Execute the configured experiment; see the module docstring."""
    timers = {"data": 0.0, "weights": 0.0, "fit": 0.0, "match": 0.0}
    t0 = time.perf_counter()
    dataset, table, aux = _load_inputs(config)
    splits = make_splits(dataset, config.n_splits, config.seed)
    timers["data"] += time.perf_counter() - t0

    def job(split):
        return _run_split(config, dataset, table, aux, split)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, splits))
    else:
        results = [job(split) for split in splits]
    for _, _, split_timers in results:
        for stage, seconds in split_timers.items():
            timers[stage] += seconds
    values = tuple(float(v) for v, _, _ in results)
    converged = all(ok for _, ok, _ in results)
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return ExperimentReport(
        config=config_to_dict(config),
        metric=config.metric,
        per_split=values,
        mean=mean,
        std=std,
        converged=converged,
        stage_seconds=dict(timers),
    )


def build_grid(model, base, lambda_values=()):
    """Hyper-parameter grid for cross-validation.

    One candidate list per regulariser the model uses; the explicit
    multi-task embedding shares a single lambda across its three
    penalties to keep the grid small.
    """
    values = tuple(lambda_values) or GRID_VALUES
    if model == "rr":
        return [replace(base, lambda_ridge=v) for v in values]
    if model == "rmtl":
        return [replace(base, lambda_a=v) for v in values]
    if model == "gomtl":
        return [
            replace(base, lambda_s=s, lambda_a=a)
            for s, a in itertools.product(values, values)
        ]
    if model == "mte":
        return [replace(base, lambda_s=v, lambda_a=v, lambda_l=v) for v in values]
    raise ConfigError(f"unknown model {model!r}")


def _regulariser_mass(hyper):
    return hyper.lambda_ridge + hyper.lambda_s + hyper.lambda_a + hyper.lambda_l


def cross_validate(
    train,
    table,
    grid,
    model,
    seed,
    matching="distributed",
    metric="accuracy",
    n_folds=3,
):
    """Zero-shot-aware cross-validation over the training classes.

    Training classes are split into ``n_folds`` disjoint groups; each
    fold holds one group out as validation classes, fits on the rest,
    and matches the held-out instances against the held-out class
    embeddings only.  Returns the grid point with the best mean
    validation metric, breaking ties toward stronger regularisation.
    """
    if not grid:
        raise ConfigError("empty hyper-parameter grid")
    if train.n_classes < 4:
        raise DataError("cross-validation needs at least 4 training classes")
    rng = np.random.default_rng(seed)
    order = rng.permutation(train.n_classes)
    groups = np.array_split(order, n_folds)
    folds = []
    for g in groups:
        val_classes = sorted(int(c) for c in g)
        fit_classes = sorted(set(range(train.n_classes)) - set(val_classes))
        folds.append(
            (
                train.subset_by_classes(fit_classes),
                table.subset(fit_classes),
                train.subset_by_classes(val_classes),
                table.subset(val_classes),
            )
        )
    best = None
    for hyper in grid:
        scores = []
        for fit_ds, fit_table, val_ds, val_table in folds:
            Z = instance_embeddings(fit_table, fit_ds)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                candidate = fit_model(model, fit_ds.features, Z, hyper)
                prediction = match(
                    candidate, val_ds.features, val_table, strategy=matching
                )
            scores.append(_score(prediction, val_ds.labels, metric))
        key = (float(np.mean(scores)), _regulariser_mass(hyper))
        if best is None or key > best[0]:
            best = (key, hyper)
    return best[1]


def emit_table(reports, format, path):
    """Render reports as a table file: text, csv, or json.

    Text mode prints percentages as "mean +/- std" to one decimal;
    csv/json keep full precision (csv floats round-trip via repr).
    """
    if not reports:
        raise ConfigError("no reports to tabulate")
    path = Path(path)
    if format == "text":
        lines = [f"{'configuration':<40}  {'score':>14}"]
        for rep in reports:
            lines.append(
                f"{_row_label(rep):<40}  "
                f"{100 * rep.mean:>6.1f} ± {100 * rep.std:.1f}"
            )
        path.write_text("\n".join(lines) + "\n")
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["model", "weighting", "matching", "metric", "mean", "std", "per_split"]
            )
            for rep in reports:
                writer.writerow(
                    [
                        rep.config.get("model", ""),
                        rep.config.get("weighting", ""),
                        rep.config.get("matching", ""),
                        rep.metric,
                        repr(rep.mean),
                        repr(rep.std),
                        ";".join(repr(v) for v in rep.per_split),
                    ]
                )
    elif format == "json":
        payload = [
            {
                "config": rep.config,
                "metric": rep.metric,
                "per_split": list(rep.per_split),
                "mean": rep.mean,
                "std": rep.std,
            }
            for rep in reports
        ]
        path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        raise ConfigError(f"unknown table format {format!r}")
    return path


def read_table_csv(path):
    """Load the csv table back; the full-precision inverse of emit_table."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for record in reader:
            rows.append(
                {
                    "model": record["model"],
                    "weighting": record["weighting"],
                    "matching": record["matching"],
                    "metric": record["metric"],
                    "mean": float(record["mean"]),
                    "std": float(record["std"]),
                    "per_split": tuple(
                        float(v) for v in record["per_split"].split(";") if v
                    ),
                }
            )
    return rows


def _row_label(report):
    cfg = report.config
    return f"{cfg.get('model', '?')}/{cfg.get('weighting', '?')}/{cfg.get('matching', '?')}"
