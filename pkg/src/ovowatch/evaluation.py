"""Confusion-matrix metrics, flock-stratified cross-validation and factor sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .features import FeatureConfig, fit_scaler, flock_matrix
from .flockdata import ProductionSeries, ReferenceCurve, build_reference_curve
from .stats import GroupSample, TukeyGrouping, tukey_hsd
from .svm import KernelSpec, SvmModel, TrainConfig, predict_many, solver_kkt_violation, train_smo

log = logging.getLogger(__name__)

METRICS = ("accuracy", "specificity", "sensitivity", "ppv")
FACTORS = ("kernel", "sigma", "c", "window", "horizon")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp


@dataclass(frozen=True)
class MetricSet:
    """Four ratios; ``None`` marks a metric whose denominator is zero."""

    accuracy: Optional[float]
    specificity: Optional[float]
    sensitivity: Optional[float]
    ppv: Optional[float]

    def get(self, name: str) -> Optional[float]:
        return getattr(self, name)


def confusion(predictions, truths) -> ConfusionMatrix:
    pred = np.asarray(predictions).astype(bool)
    truth = np.asarray(truths).astype(bool)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} predictions vs {truth.shape} truths")
    if pred.size == 0:
        raise ValueError("confusion matrix of an empty evaluation set")
    return ConfusionMatrix(
        tp=int(np.sum(pred & truth)),
        fp=int(np.sum(pred & ~truth)),
        tn=int(np.sum(~pred & ~truth)),
        fn=int(np.sum(~pred & truth)),
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def metrics(cm: ConfusionMatrix) -> MetricSet:
    if cm.total <= 0:
        raise ValueError("metrics need at least one evaluated pattern")
    ms = MetricSet(
        accuracy=(cm.tp + cm.tn) / cm.total,
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
        sensitivity=_ratio(cm.tp, cm.tp + cm.fn),
        ppv=_ratio(cm.tp, cm.tp + cm.fp),
    )
    # accuracy is the class-weighted mix of sensitivity and specificity
    mix = (cm.tp + cm.tn) / cm.total
    if ms.sensitivity is not None and ms.specificity is not None:
        mix = (ms.sensitivity * cm.positives + ms.specificity * cm.negatives) / cm.total
    assert abs(mix - ms.accuracy) <= 1e-12, "accuracy identity violated"
    return ms


def mean_metrics(sets: Sequence[MetricSet], context: str = "") -> MetricSet:
    """Per-metric mean over folds, skipping undefined values."""
    out = {}
    for name in METRICS:
        vals = [s.get(name) for s in sets if s.get(name) is not None]
        if len(vals) < len(sets):
            log.warning("%s: %s undefined in %d of %d folds; excluded from the mean",
                        context or "cross-validation", name, len(sets) - len(vals), len(sets))
        out[name] = float(np.mean(vals)) if vals else None
    return MetricSet(**out)


def stratified_folds(flocks: Sequence[ProductionSeries], k: int, seed: int) -> list[list[str]]:
    """Split flock ids into ``k`` folds, spreading problem and clean flocks evenly.

    Each stratum is shuffled and dealt round-robin; the clean stratum starts
    dealing where the problem stratum stopped, so fold sizes also differ by at
    most one.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(flocks):
        raise ValueError(f"k={k} exceeds the number of flocks ({len(flocks)})")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    ids = sorted(s.flock_id for s in flocks)
    by_id = {s.flock_id: s for s in flocks}
    problem = [f for f in ids if by_id[f].labels.any()]
    clean = [f for f in ids if not by_id[f].labels.any()]
    folds: list[list[str]] = [[] for _ in range(k)]
    start = 0
    fold_order = rng.permutation(k)
    for stratum in (problem, clean):
        shuffled = [stratum[i] for i in rng.permutation(len(stratum))]
        for n, fid in enumerate(shuffled):
            folds[fold_order[(start + n) % k]].append(fid)
        start = (start + len(shuffled)) % k
    return [sorted(f) for f in folds]


@dataclass(frozen=True)
class CvConfig:
    k: int = 5
    repetitions: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class FoldResult:
    repetition: int
    fold: int
    cm: ConfusionMatrix
    metrics: MetricSet
    converged: bool
    kkt: float = 0.0


@dataclass
class CvResult:
    repetitions: list[MetricSet]
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(f.converged for f in self.folds)


def fit_fold(
    train: Sequence[ProductionSeries], feature_cfg: FeatureConfig
) -> tuple[dict, np.ndarray, np.ndarray]:
    """Training matrix for one fold, each flock against a leave-it-out reference."""
    refs = {s.flock_id: build_reference_curve(train, exclude=s.flock_id) for s in train}
    Xs, ys = [], []
    for s in sorted(train, key=lambda s: s.flock_id):
        _, X, y = flock_matrix(s, refs[s.flock_id], feature_cfg)
        Xs.append(X)
        ys.append(y)
    return refs, np.vstack(Xs), np.concatenate(ys)


@dataclass(frozen=True, eq=False)
class FoldFit:
    cm: ConfusionMatrix
    model: SvmModel
    reference: ReferenceCurve  # the curve test flocks were featurised against
    kkt: float  # largest KKT violation on the fold's training patterns


def evaluate_fold(
    train: Sequence[ProductionSeries],
    test: Sequence[ProductionSeries],
    feature_cfg: FeatureConfig,
    kernel: KernelSpec,
    train_cfg: TrainConfig,
) -> FoldFit:
    """Train on ``train`` flocks and score ``test``. Nothing from ``test`` reaches the fit."""
    _, X, y = fit_fold(train, feature_cfg)
    scaler = fit_scaler(X)
    model = train_smo(scaler.transform(X), y, kernel, train_cfg, scaler=scaler)
    reference = build_reference_curve(train)
    Xt, yt = [], []
    for s in sorted(test, key=lambda s: s.flock_id):
        _, Xf, yf = flock_matrix(s, reference, feature_cfg)
        Xt.append(Xf)
        yt.append(yf)
    pred = predict_many(model, np.vstack(Xt))
    cm = confusion(pred, np.concatenate(yt))
    return FoldFit(cm, model, reference, solver_kkt_violation(model, y))


def _rep_seed(master: int, rep: int) -> int:
    return int(np.random.SeedSequence([master, rep]).generate_state(1)[0])


def _run_repetition(flocks, feature_cfg, kernel, train_cfg, cv_cfg, rep) -> list[FoldResult]:
    seed = _rep_seed(cv_cfg.seed, rep)
    by_id = {s.flock_id: s for s in flocks}
    out = []
    for f, fold_ids in enumerate(stratified_folds(flocks, cv_cfg.k, seed)):
        test = [by_id[i] for i in fold_ids]
        train = [s for s in flocks if s.flock_id not in set(fold_ids)]
        cfg = replace(train_cfg, seed=_rep_seed(seed, f))
        fit = evaluate_fold(train, test, feature_cfg, kernel, cfg)
        out.append(FoldResult(rep, f, fit.cm, metrics(fit.cm), fit.model.converged, fit.kkt))
    return out


def cross_validate(
    flocks: Sequence[ProductionSeries],
    feature_cfg: FeatureConfig,
    kernel: KernelSpec,
    train_cfg: TrainConfig,
    cv_cfg: CvConfig,
    n_jobs: int = 1,
) -> CvResult:
    """Repeated k-fold CV by whole flock; one fold-mean MetricSet per repetition.

    Repetition seeds derive from ``(cv_cfg.seed, repetition)`` so results do not
    depend on ``n_jobs``.
    """
    flocks = sorted(flocks, key=lambda s: s.flock_id)
    reps = range(cv_cfg.repetitions)
    if n_jobs == 1:
        per_rep = [_run_repetition(flocks, feature_cfg, kernel, train_cfg, cv_cfg, r) for r in reps]
    else:
        from joblib import Parallel, delayed

        per_rep = Parallel(n_jobs=n_jobs)(
            delayed(_run_repetition)(flocks, feature_cfg, kernel, train_cfg, cv_cfg, r) for r in reps
        )
    result = CvResult(repetitions=[], folds=[])
    for r, folds in zip(reps, per_rep):
        result.folds.extend(folds)
        result.repetitions.append(mean_metrics([f.metrics for f in folds], f"repetition {r}"))
    return result


@dataclass(frozen=True)
class BaseConfig:
    feature: FeatureConfig = FeatureConfig()
    kernel: KernelSpec = KernelSpec()
    train: TrainConfig = TrainConfig()
    cv: CvConfig = CvConfig()


def apply_level(base: BaseConfig, factor: str, level) -> BaseConfig:
    if factor == "kernel":
        return replace(base, kernel=replace(base.kernel, kind=str(level), degree=2 if level == "quadratic" else 3))
    if factor == "sigma":
        return replace(base, kernel=replace(base.kernel, sigma=float(level)))
    if factor == "c":
        return replace(base, train=replace(base.train, c=float(level)))
    if factor == "window":
        return replace(base, feature=replace(base.feature, window_size=int(level)))
    if factor == "horizon":
        return replace(base, feature=replace(base.feature, forecast_interval=int(level)))
    raise ValueError(f"unknown factor {factor!r}; valid factors: {', '.join(FACTORS)}")


DEFAULT_LEVELS = {
    "kernel": ["polynomial", "rbf", "quadratic", "linear"],
    "sigma": [1, 2, 3, 4, 5, 6],
    "c": [0.01, 0.1, 0.15, 0.2, 0.25],
    "window": [7, 14, 21, 28],
    "horizon": [0, 1, 2, 3, 4, 5],
}


@dataclass
class SweepResult:
    factor: str
    levels: list
    per_level: list[list[MetricSet]]
    tukey: dict[str, Optional[TukeyGrouping]]
    converged: bool = True

    def level_means(self, metric: str) -> list[Optional[float]]:
        out = []
        for sets in self.per_level:
            vals = [s.get(metric) for s in sets if s.get(metric) is not None]
            out.append(float(np.mean(vals)) if vals else None)
        return out

    def level_sds(self, metric: str) -> list[Optional[float]]:
        out = []
        for sets in self.per_level:
            vals = [s.get(metric) for s in sets if s.get(metric) is not None]
            out.append(float(np.std(vals, ddof=1)) if len(vals) > 1 else None)
        return out


def level_label(factor: str, level) -> str:
    return str(level)


def sweep_factor(
    flocks: Sequence[ProductionSeries],
    base: BaseConfig,
    factor: str,
    levels: Optional[Sequence] = None,
    alpha: float = 0.01,
    n_jobs: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> SweepResult:
    """Cross-validate each level of one factor, others held at ``base``; Tukey letters per metric."""
    if factor not in FACTORS:
        raise ValueError(f"unknown factor {factor!r}; valid factors: {', '.join(FACTORS)}")
    levels = list(DEFAULT_LEVELS[factor] if levels is None else levels)
    if not levels:
        raise ValueError("a sweep needs at least one level")
    configs = [apply_level(base, factor, lv) for lv in levels]
    per_level = []
    converged = True
    for lv, cfg in zip(levels, configs):
        if progress:
            progress(f"{factor}={lv}")
        res = cross_validate(flocks, cfg.feature, cfg.kernel, cfg.train, cfg.cv, n_jobs=n_jobs)
        per_level.append(res.repetitions)
        converged &= res.all_converged
    tukey: dict[str, Optional[TukeyGrouping]] = {}
    for metric in METRICS:
        groups = []
        for lv, sets in zip(levels, per_level):
            vals = [s.get(metric) for s in sets if s.get(metric) is not None]
            groups.append(GroupSample(level_label(factor, lv), vals))
        if any(len(g.observations) < 2 for g in groups):
            tukey[metric] = None
            log.warning("sweep %s: too few defined %s values for Tukey HSD", factor, metric)
            continue
        tukey[metric] = tukey_hsd(groups, alpha)
    return SweepResult(factor, levels, per_level, tukey, converged)


def format_sweep_metric_csv(result: SweepResult, metric: str) -> str:
    lines = ["level,mean,sd,tukey_letters"]
    grouping = result.tukey.get(metric)
    for i, (lv, mean, sd) in enumerate(
        zip(result.levels, result.level_means(metric), result.level_sds(metric))
    ):
        letters = grouping.letters[i] if grouping else ""
        lines.append(f"{lv},{_num(mean)},{_num(sd)},{letters}")
    return "\n".join(lines) + "\n"


def format_sweep_raw_csv(result: SweepResult) -> str:
    lines = ["level,repetition," + ",".join(METRICS)]
    for lv, sets in zip(result.levels, result.per_level):
        for r, s in enumerate(sets):
            lines.append(f"{lv},{r}," + ",".join(_num(s.get(m)) for m in METRICS))
    return "\n".join(lines) + "\n"


def _num(v: Optional[float]) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))
