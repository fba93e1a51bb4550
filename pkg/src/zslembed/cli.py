"""Command-line harness.

Subcommands:

* ``run``   -- execute an experiment config, write report.json (+ timings)
* ``gen``   -- materialise a synthetic problem as dataset files
* ``cv``    -- cross-validate hyper-parameters on the first split
* ``table`` -- render a directory of reports as text/csv/json

Exit codes: 0 success, 2 config error, 3 data error, 4 solver
non-convergence (only under --strict).
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .data import make_splits, save_manifest
from .errors import ConfigError, ConvergenceError, DataError
from .experiment import (
    ExperimentReport,
    build_grid,
    cross_validate,
    emit_table,
    parse_config,
    run_experiment,
    _resolve_hyper,
)
from .matrix_io import save_matrix
from .synth import generate, generate_augmentation, load_synthetic_spec


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zslembed",
        description="Zero-shot embedding regression experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, default=None, help="override config seed")
    run_p.add_argument("--threads", type=int, default=1)
    run_p.add_argument("--out-dir", default=None)
    run_p.add_argument(
        "--strict",
        action="store_true",
        help="exit 4 if any solver failed to converge",
    )

    gen_p = sub.add_parser("gen", help="generate a synthetic dataset")
    gen_p.add_argument("--spec", required=True)
    gen_p.add_argument("--seed", type=int, default=None, help="override spec seed")
    gen_p.add_argument("--out-dir", required=True)
    gen_p.add_argument(
        "--with-augmentation",
        action="store_true",
        help="also emit the auxiliary pool",
    )

    cv_p = sub.add_parser("cv", help="cross-validate hyper-parameters")
    cv_p.add_argument("--config", required=True)
    cv_p.add_argument("--seed", type=int, default=None)
    cv_p.add_argument("--out-dir", default=None)

    table_p = sub.add_parser("table", help="tabulate report files")
    table_p.add_argument("--in", dest="in_dir", required=True)
    table_p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    table_p.add_argument("--out-dir", default=None)

    return parser


def _cmd_run(args):
    config = parse_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    report = run_experiment(config, threads=args.threads)
    print(
        f"{config.model}/{config.weighting}/{config.matching} "
        f"{config.metric}: {100 * report.mean:.1f} ± {100 * report.std:.1f}"
    )
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        timing_lines = [
            f"{stage}={seconds:.3f}s"
            for stage, seconds in sorted(report.stage_seconds.items())
        ]
        (out / "timings.txt").write_text("\n".join(timing_lines) + "\n")
    if args.strict and not report.converged:
        raise ConvergenceError("a solver failed to converge (--strict)")
    return 0


def _cmd_gen(args):
    spec = load_synthetic_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, table, truth = generate(spec)
    manifest = save_manifest(dataset, out, stem="data")
    save_matrix(table.V.T, out / "attributes.dmat")
    (out / "attribute_classes.txt").write_text(
        "\n".join(table.class_names) + "\n"
    )
    save_matrix(truth.W, out / "truth_map.dmat")
    print(f"wrote {manifest}")
    if args.with_augmentation:
        aux_ds, aux_table = generate_augmentation(spec, dataset)
        aux_manifest = save_manifest(aux_ds, out, stem="aux")
        save_matrix(aux_table.V.T, out / "aux_attributes.dmat")
        (out / "aux_attribute_classes.txt").write_text(
            "\n".join(aux_table.class_names) + "\n"
        )
        print(f"wrote {aux_manifest}")
    return 0


def _cmd_cv(args):
    config = parse_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    from .experiment import _load_inputs  # shares the run pipeline

    dataset, table, _ = _load_inputs(config)
    split = make_splits(dataset, 1, config.seed)[0]
    train_ds = dataset.subset_by_classes(split.train_classes)
    table_tr = table.subset(split.train_classes)
    hyper = _resolve_hyper(config, train_ds.n_classes)
    grid = build_grid(config.model, hyper, config.grid)
    chosen = cross_validate(
        train_ds,
        table_tr,
        grid,
        config.model,
        config.seed,
        matching=config.matching,
        metric=config.metric,
    )
    lines = [
        f"lambda_ridge={chosen.lambda_ridge!r}",
        f"lambda_s={chosen.lambda_s!r}",
        f"lambda_a={chosen.lambda_a!r}",
        f"lambda_l={chosen.lambda_l!r}",
        f"latent_t={chosen.latent_t}",
    ]
    print("\n".join(lines))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cv.txt").write_text("\n".join(lines) + "\n")
    return 0


def _cmd_table(args):
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise DataError(f"report directory not found: {in_dir}")
    reports = []
    for report_path in sorted(in_dir.glob("*.json")):
        reports.append(ExperimentReport.from_json(report_path.read_text()))
    if not reports:
        raise DataError(f"no report .json files in {in_dir}")
    out_dir = Path(args.out_dir) if args.out_dir else in_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = {"text": "txt", "csv": "csv", "json": "json"}[args.format]
    path = emit_table(reports, args.format, out_dir / f"table.{suffix}")
    print(path.read_text(), end="")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "gen": _cmd_gen,
        "cv": _cmd_cv,
        "table": _cmd_table,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
