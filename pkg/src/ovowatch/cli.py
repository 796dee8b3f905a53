"""Command-line entry point: ``ovowatch <command> [options]``.

Exit status: 0 success, 1 usage error, 2 data or I/O error, 3 an SVM that
did not converge.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import config as cfgmod
from .evaluation import (
    DEFAULT_LEVELS,
    FACTORS,
    METRICS,
    cross_validate,
    format_sweep_metric_csv,
    format_sweep_raw_csv,
    level_label,
    sweep_factor,
)
from .features import build_patterns, fit_scaler, format_features_csv, patterns_to_arrays, scoring_matrix
from .flockdata import (
    DataError,
    build_reference_curve,
    format_reference_csv,
    load_flock_dir,
    parse_flock_csv,
    read_reference_csv,
    validate_series,
    write_flock_csv,
)
from .io_utils import atomic_write_text
from .simgen import format_ground_truth, generate_dataset
from .svm import ModelFormatError, decision_values, load_model, save_model, train_smo

log = logging.getLogger("ovowatch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


# flag name -> RunConfig key, for options shared by several commands
_COMMON = {
    "seed": ("--seed", int, "master random seed"),
    "out": ("--out", str, "output directory"),
    "data": ("--data", str, "directory of flock CSV files"),
    "flocks": ("--flocks", int, "number of synthetic flocks"),
    "window": ("--window", int, "feature window size in days (multiple of 7)"),
    "horizon": ("--horizon", int, "forecast interval in days (0-5)"),
    "kernel": ("--kernel", str, "linear, polynomial, quadratic or rbf"),
    "sigma": ("--sigma", float, "RBF kernel width"),
    "c": ("--c", float, "box constraint C"),
    "reps": ("--reps", int, "cross-validation repetitions"),
    "folds": ("--folds", int, "cross-validation folds"),
    "n_jobs": ("--n-jobs", int, "worker processes for repetitions"),
}


def _add(p: argparse.ArgumentParser, *keys: str) -> None:
    for key in keys:
        flag, kind, help_text = _COMMON[key]
        p.add_argument(flag, dest=key, type=kind, default=None, help=help_text)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ovowatch", description="Early warning of egg-production problems with SVMs.")
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    parser.add_argument("-v", "--verbose", action="count", default=0, dest="verbosity")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic flock corpus with ground truth")
    _add(p, "out", "flocks", "seed")

    p = sub.add_parser("featurize", help="write the feature patterns of a corpus")
    _add(p, "data", "out", "window", "horizon")

    p = sub.add_parser("train", help="train one SVM on every flock in a corpus")
    _add(p, "data", "out", "window", "horizon", "kernel", "sigma", "c", "seed")

    p = sub.add_parser("crossval", help="repeated flock-stratified cross-validation")
    _add(p, "data", "out", "window", "horizon", "kernel", "sigma", "c", "seed", "reps", "folds", "n_jobs")

    p = sub.add_parser("sweep", help="cross-validate each level of one factor with Tukey letters")
    p.add_argument("--factor", required=True, help=f"one of {', '.join(FACTORS)}")
    p.add_argument("--levels", help="comma-separated levels (default: the standard grid)")
    _add(p, "data", "out", "window", "horizon", "kernel", "sigma", "c", "seed", "reps", "folds", "n_jobs")

    p = sub.add_parser("alert", help="per-day alerts for one flock, as CSV on stdout")
    p.add_argument("--model", required=True, help="model file written by 'train'")
    p.add_argument("--flock", required=True, help="flock CSV file")
    p.add_argument("--reference", help="reference curve CSV (default: next to the model)")

    p = sub.add_parser("report", help="corpus summary table")
    _add(p, "data", "out")
    p.add_argument("--emit-plot-data", action="store_true", help="also dump per-day series for plotting")
    return parser


def _flag_values(args: argparse.Namespace) -> dict:
    values = {key: getattr(args, key) for key in _COMMON if getattr(args, key, None) is not None}
    values["verbosity"] = args.verbosity or None
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = value
    return values


def resolve_config(args: argparse.Namespace, file_layer: Optional[dict] = None) -> cfgmod.RunConfig:
    layer = dict(file_layer or {})
    if args.config:
        layer.update(cfgmod.read_config_file(args.config))
    return cfgmod.resolve(layer, _flag_values(args))


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(headers, *rows)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _fmt(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def _write_provenance(out: Path, cfg: cfgmod.RunConfig) -> None:
    atomic_write_text(out / cfgmod.PROVENANCE_FILE, cfgmod.format_run_config(cfg))


def _load_corpus(cfg: cfgmod.RunConfig):
    flocks = load_flock_dir(cfg.data)
    for s in flocks:
        report = validate_series(s)
        if not report.ok:
            idx, msg = report.errors[0]
            raise DataError(f"flock {s.flock_id}, record {idx}: {msg}")
        for idx, msg in report.warnings:
            log.warning("flock %s, record %d: %s", s.flock_id, idx, msg)
    return flocks


def cmd_generate(cfg: cfgmod.RunConfig) -> int:
    out = Path(cfg.out)
    flocks = generate_dataset(cfg.generator())
    for f in flocks:
        write_flock_csv(f.series, out / f"{f.series.flock_id}.csv")
    atomic_write_text(out / "ground_truth.csv", format_ground_truth(flocks))
    _write_provenance(out, cfg)
    positives = sum(int(f.series.labels.sum()) for f in flocks)
    days = sum(len(f.series) for f in flocks)
    print(f"wrote {len(flocks)} flocks ({days} days, {positives} positive) to {out}")
    return EXIT_OK


def cmd_featurize(cfg: cfgmod.RunConfig) -> int:
    flocks = _load_corpus(cfg)
    patterns = build_patterns(flocks, cfg.feature())
    out = Path(cfg.out)
    atomic_write_text(out / "features.csv", format_features_csv(patterns))
    atomic_write_text(out / "reference.csv", format_reference_csv(build_reference_curve(flocks)))
    _write_provenance(out, cfg)
    print(f"wrote {len(patterns)} patterns to {out / 'features.csv'}")
    return EXIT_OK


def cmd_train(cfg: cfgmod.RunConfig) -> int:
    flocks = _load_corpus(cfg)
    X, y = patterns_to_arrays(build_patterns(flocks, cfg.feature()))
    scaler = fit_scaler(X)
    model = train_smo(scaler.transform(X), y, cfg.kernel_spec(), cfg.train(), scaler=scaler)
    out = Path(cfg.out)
    save_model(model, out / "model.txt")
    atomic_write_text(out / "reference.csv", format_reference_csv(build_reference_curve(flocks)))
    _write_provenance(out, cfg)
    print(f"trained {model.kernel.describe()} on {len(y)} patterns: "
          f"{len(model.dual_coeffs)} support vectors, converged={model.converged}")
    return EXIT_OK if model.converged else EXIT_NONCONVERGED


def _cv_summary_csv(cv) -> str:
    lines = ["metric,mean,sd"]
    for m in METRICS:
        vals = [s.get(m) for s in cv.repetitions if s.get(m) is not None]
        mean = repr(float(np.mean(vals))) if vals else ""
        sd = repr(float(np.std(vals, ddof=1))) if len(vals) > 1 else ""
        lines.append(f"{m},{mean},{sd}")
    return "\n".join(lines) + "\n"


def _cv_folds_csv(cv) -> str:
    lines = ["repetition,fold,tp,fp,tn,fn," + ",".join(METRICS) + ",converged,kkt_violation"]
    for f in cv.folds:
        vals = ",".join("" if f.metrics.get(m) is None else repr(f.metrics.get(m)) for m in METRICS)
        lines.append(f"{f.repetition},{f.fold},{f.cm.tp},{f.cm.fp},{f.cm.tn},{f.cm.fn},{vals},{int(f.converged)},{f.kkt!r}")
    return "\n".join(lines) + "\n"


def cmd_crossval(cfg: cfgmod.RunConfig) -> int:
    flocks = _load_corpus(cfg)
    base = cfg.base()
    cv = cross_validate(flocks, base.feature, base.kernel, base.train, base.cv, n_jobs=cfg.n_jobs)
    out = Path(cfg.out)
    summary = _cv_summary_csv(cv)
    atomic_write_text(out / "crossval_summary.csv", summary)
    atomic_write_text(out / "crossval_folds.csv", _cv_folds_csv(cv))
    _write_provenance(out, cfg)
    rows = []
    for line in summary.splitlines()[1:]:
        name, mean, sd = line.split(",")
        rows.append([name, _fmt(float(mean)) if mean else "n/a", _fmt(float(sd)) if sd else "n/a"])
    print(f"{base.kernel.describe()}, C={cfg.c:g}, W={cfg.window}, FI={cfg.horizon}: "
          f"{cfg.folds}-fold x {cfg.reps} repetitions")
    print(format_table(["metric", "mean", "sd"], rows), end="")
    return EXIT_OK if cv.all_converged else EXIT_NONCONVERGED


def _parse_levels(factor: str, text: Optional[str]) -> list:
    if not text:
        return list(DEFAULT_LEVELS[factor])
    parts = [t.strip() for t in text.split(",") if t.strip()]
    if factor == "kernel":
        return parts
    kind = int if factor in ("window", "horizon") else float
    try:
        return [kind(t) for t in parts]
    except ValueError:
        raise UsageError(f"bad level list {text!r} for factor {factor}") from None


def cmd_sweep(cfg: cfgmod.RunConfig, factor: str, levels_text: Optional[str]) -> int:
    if factor not in FACTORS:
        raise UsageError(f"unknown factor {factor!r}; valid factors: {', '.join(FACTORS)}")
    levels = _parse_levels(factor, levels_text)
    base = cfg.base()
    from .evaluation import apply_level

    try:
        for lv in levels:
            apply_level(base, factor, lv)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    flocks = _load_corpus(cfg)
    result = sweep_factor(flocks, base, factor, levels, alpha=cfg.alpha, n_jobs=cfg.n_jobs,
                          progress=lambda msg: log.info("running %s", msg))
    out = Path(cfg.out)
    for m in METRICS:
        atomic_write_text(out / f"sweep_{factor}_{m}.csv", format_sweep_metric_csv(result, m))
    atomic_write_text(out / f"sweep_{factor}_raw.csv", format_sweep_raw_csv(result))
    headers = ["metric"] + [level_label(factor, lv) for lv in levels]
    rows = []
    for m in METRICS:
        grouping = result.tukey.get(m)
        cells = [f"{_fmt(v)} {grouping.letters[i] if grouping else ''}".rstrip()
                 for i, v in enumerate(result.level_means(m))]
        rows.append([m] + cells)
    table = format_table(headers, rows)
    atomic_write_text(out / f"sweep_{factor}_table.txt", table)
    _write_provenance(out, cfg)
    print(f"multiple comparison of {factor} (Tukey HSD, p < {cfg.alpha:g}; shared letter = no difference)")
    print(table, end="")
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_alert(args: argparse.Namespace) -> int:
    model_path = Path(args.model)
    provenance = model_path.parent / cfgmod.PROVENANCE_FILE
    file_layer = cfgmod.read_config_file(provenance) if provenance.exists() else {}
    cfg = resolve_config(args, file_layer)
    model = load_model(model_path)
    reference = read_reference_csv(args.reference or model_path.parent / "reference.csv")
    series = parse_flock_csv(args.flock)
    days, X = scoring_matrix(series, reference, cfg.feature())
    scores = decision_values(model, X)
    buf = io.StringIO()
    buf.write("flock_id,day_index,age_week,decision_value,alert,forecast_interval\n")
    for d, v in zip(days.tolist(), scores.tolist()):
        buf.write(f"{series.flock_id},{d},{series.records[d].age_week},{v!r},{int(v > 0)},{cfg.horizon}\n")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_report(cfg: cfgmod.RunConfig, emit_plot_data: bool) -> int:
    flocks = _load_corpus(cfg)
    reference = build_reference_curve(flocks)
    rows = []
    csv_lines = ["flock_id,housed,days,peak_weekly_rate,positive_labels"]
    for s in flocks:
        peak = max(s.weekly_means.values())
        positives = int(s.labels.sum()) if s.has_labels else 0
        rows.append([s.flock_id, str(int(s.hens[0])), str(len(s)), f"{peak:.4f}", str(positives)])
        csv_lines.append(f"{s.flock_id},{int(s.hens[0])},{len(s)},{peak!r},{positives}")
    out = Path(cfg.out)
    atomic_write_text(out / "corpus_summary.csv", "\n".join(csv_lines) + "\n")
    if emit_plot_data:
        lines = ["flock_id,day_index,age_days,age_week,rate,reference_rate,label"]
        for s in flocks:
            ref = reference.lookup(s.age_days // 7)
            for d, rec in enumerate(s.records):
                label = "" if rec.label is None else str(int(rec.label))
                lines.append(f"{s.flock_id},{d},{rec.age_days},{rec.age_week},{s.rates[d]!r},{ref[d]!r},{label}")
        atomic_write_text(out / "plot_data.csv", "\n".join(lines) + "\n")
        atomic_write_text(out / "reference.csv", format_reference_csv(reference))
    _write_provenance(out, cfg)
    print(format_table(["flock", "housed", "days", "peak", "positives"], rows), end="")
    return EXIT_OK


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage().strip())
    if args.command == "alert":
        return cmd_alert(args)
    cfg = resolve_config(args)
    logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbosity, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "generate":
        return cmd_generate(cfg)
    if args.command == "featurize":
        return cmd_featurize(cfg)
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "crossval":
        return cmd_crossval(cfg)
    if args.command == "sweep":
        return cmd_sweep(cfg, args.factor, args.levels)
    return cmd_report(cfg, args.emit_plot_data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        return run(argv)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
