"""Leave-one-subject-out evaluation: label binarization, metrics, fold
construction, per-fold search/train/score, and paired comparison.

Every fold holds one subject out for testing; hyperparameter search, early
stopping, and training only ever see the remaining subjects. An optional
audit object records exactly which row ids each stage consumed so leakage
can be asserted, not assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .entropy import FEATURE_NAMES, FeatureVector
from .errors import (
    DegenerateComparisonError,
    DegenerateLabelsError,
    InvalidArgumentError,
)
from .gbdt import (
    SearchSpace,
    TrainConfig,
    inner_holdout_split,
    predict_margin,
    random_search,
    train,
)

TARGETS = ("valence", "arousal", "liking")


def binarize_label(rating: float, threshold: float = 5.0) -> int:
    """Map a 9-point rating to a binary label: 1 iff strictly above threshold."""
    if not (1.0 <= rating <= 9.0):
        raise InvalidArgumentError(f"rating {rating} outside [1, 9]")
    return 1 if rating > threshold else 0


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float


def compute_metrics(y_true, y_pred) -> Metrics:
    """Accuracy and positive-class f1. f1 is 0 when precision+recall is 0."""
    yt = np.asarray(y_true, dtype=np.int64)
    yp = np.asarray(y_pred, dtype=np.int64)
    if yt.size == 0 or yt.size != yp.size:
        raise InvalidArgumentError("y_true and y_pred must be equal-length and non-empty")
    accuracy = float((yt == yp).mean())
    tp = int(((yt == 1) & (yp == 1)).sum())
    fp = int(((yt == 0) & (yp == 1)).sum())
    fn = int(((yt == 1) & (yp == 0)).sum())
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return Metrics(accuracy, float(f1))


@dataclass(frozen=True)
class MetricSummary:
    """Mean and standard error of both metrics over folds."""

    accuracy: float
    accuracy_se: float
    f1: float
    f1_se: float


@dataclass(frozen=True, eq=False)
class DatasetRow:
    row_id: int
    subject_id: int
    trial_id: int
    features: FeatureVector
    ratings: Mapping[str, float]


@dataclass(eq=False)
class Dataset:
    """Feature rows of many subjects sharing the canonical feature schema."""

    rows: list[DatasetRow]

    def __post_init__(self):
        if len({r.subject_id for r in self.rows}) < 2:
            raise InvalidArgumentError("dataset needs at least 2 subjects")
        ids = [r.row_id for r in self.rows]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("row ids must be unique")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def subjects(self) -> list[int]:
        return sorted({r.subject_id for r in self.rows})

    def matrix(self, feature_subset: Sequence[str] | None = None) -> np.ndarray:
        names = tuple(feature_subset) if feature_subset is not None else FEATURE_NAMES
        unknown = [n for n in names if n not in FEATURE_NAMES]
        if unknown:
            raise InvalidArgumentError(f"unknown features requested: {unknown}")
        return np.array([[r.features[n] for n in names] for r in self.rows])

    def labels(self, target: str, threshold: float = 5.0) -> np.ndarray:
        if target not in TARGETS:
            raise InvalidArgumentError(f"unknown target {target!r}")
        return np.array([binarize_label(r.ratings[target], threshold) for r in self.rows])

    def groups(self) -> np.ndarray:
        return np.array([r.subject_id for r in self.rows])


@dataclass(frozen=True)
class LosoFold:
    subject_id: int
    train_idx: np.ndarray
    test_idx: np.ndarray


def loso_split(dataset: Dataset) -> list[LosoFold]:
    """One fold per subject: that subject's rows test, all others train."""
    groups = dataset.groups()
    subjects = dataset.subjects
    if len(subjects) < 2:
        raise InvalidArgumentError("leave-one-subject-out needs at least 2 subjects")
    folds = []
    for s in subjects:
        test = np.flatnonzero(groups == s)
        trn = np.flatnonzero(groups != s)
        folds.append(LosoFold(s, trn, test))
    return folds


class RunAudit:
    """Records which dataset row ids each stage of each fold touched."""

    def __init__(self):
        self.stages: dict[tuple[int, str], set[int]] = {}

    def record(self, subject_id: int, stage: str, row_ids) -> None:
        self.stages.setdefault((subject_id, stage), set()).update(int(i) for i in row_ids)

    def touched(self, subject_id: int, stage: str) -> set[int]:
        return self.stages.get((subject_id, stage), set())


@dataclass(frozen=True)
class FoldResult:
    subject_id: int
    n_test: int
    accuracy: float
    f1: float
    config: TrainConfig | None
    best_iteration: int
    failed: bool = False
    reason: str = ""


@dataclass(frozen=True)
class CvReport:
    target: str
    folds: tuple[FoldResult, ...]
    summary: MetricSummary
    failed_subjects: tuple[int, ...]

    def per_fold(self, metric: str) -> np.ndarray:
        return np.array([getattr(f, metric) for f in self.folds if not f.failed])


def _standard_error(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def summarize_folds(folds: Sequence[FoldResult]) -> MetricSummary:
    ok = [f for f in folds if not f.failed]
    if not ok:
        raise DegenerateLabelsError("every fold failed; nothing to aggregate")
    acc = np.array([f.accuracy for f in ok])
    f1 = np.array([f.f1 for f in ok])
    return MetricSummary(
        accuracy=float(acc.mean()),
        accuracy_se=_standard_error(acc),
        f1=float(f1.mean()),
        f1_se=_standard_error(f1),
    )


def _fold_seed(seed: int, subject_id: int) -> int:
    return int(np.random.SeedSequence([seed, int(subject_id)]).generate_state(1)[0])


def run_fold(
    dataset: Dataset,
    fold: LosoFold,
    target: str,
    search_budget: int,
    seed: int,
    space: SearchSpace | None = None,
    fixed_config: TrainConfig | None = None,
    feature_subset: Sequence[str] | None = None,
    audit: RunAudit | None = None,
    return_model: bool = False,
):
    """Search (train subjects only), train, and score one fold."""
    fold_seed = _fold_seed(seed, fold.subject_id)
    X = dataset.matrix(feature_subset)
    y = dataset.labels(target)
    groups = dataset.groups()
    row_ids = np.array([r.row_id for r in dataset.rows])
    tr, te = fold.train_idx, fold.test_idx
    try:
        if fixed_config is not None or search_budget < 1:
            cfg = fixed_config or TrainConfig(seed=fold_seed)
        else:
            if audit is not None:
                audit.record(fold.subject_id, "search", row_ids[tr])
            cfg = random_search(
                X[tr], y[tr], groups[tr], space=space,
                iterations=search_budget, seed=fold_seed,
            )
        if audit is not None:
            audit.record(fold.subject_id, "train", row_ids[tr])
        inner_train, inner_valid = inner_holdout_split(groups[tr], fold_seed)
        model = train(
            X[tr][inner_train], y[tr][inner_train],
            (X[tr][inner_valid], y[tr][inner_valid]),
            cfg,
            feature_names=tuple(feature_subset) if feature_subset else FEATURE_NAMES,
        )
    except DegenerateLabelsError as exc:
        result = FoldResult(fold.subject_id, te.size, math.nan, math.nan, None, 0, True, str(exc))
        return (result, None) if return_model else result
    margins = predict_margin(model, X[te])
    pred = (margins > 0).astype(int)
    m = compute_metrics(y[te], pred)
    result = FoldResult(fold.subject_id, te.size, m.accuracy, m.f1, cfg, model.best_iteration)
    return (result, model) if return_model else result


def run_loso(
    dataset: Dataset,
    target: str,
    search_budget: int,
    seed: int,
    space: SearchSpace | None = None,
    fixed_config: TrainConfig | None = None,
    search_mode: str = "per-fold",
    feature_subset: Sequence[str] | None = None,
    audit: RunAudit | None = None,
) -> CvReport:
    """Full leave-one-subject-out sweep, deterministic given the seed.

    ``search_mode="global"`` runs the hyperparameter search once on the
    first fold's training subjects and reuses its config everywhere; the
    default searches per fold. Folds whose training labels collapse to one
    class are flagged and excluded from the aggregates.
    """
    if search_mode not in ("per-fold", "global"):
        raise InvalidArgumentError(f"unknown search_mode {search_mode!r}")
    folds = loso_split(dataset)
    cfg = fixed_config
    if search_mode == "global" and cfg is None and search_budget >= 1:
        first = folds[0]
        X = dataset.matrix(feature_subset)
        y = dataset.labels(target)
        groups = dataset.groups()
        if audit is not None:
            row_ids = np.array([r.row_id for r in dataset.rows])
            audit.record(first.subject_id, "search", row_ids[first.train_idx])
        cfg = random_search(
            X[first.train_idx], y[first.train_idx], groups[first.train_idx],
            space=space, iterations=search_budget, seed=_fold_seed(seed, first.subject_id),
        )
    results = [
        run_fold(
            dataset, fold, target, search_budget, seed,
            space=space, fixed_config=cfg, feature_subset=feature_subset, audit=audit,
        )
        for fold in folds
    ]
    summary = summarize_folds(results)
    failed = tuple(f.subject_id for f in results if f.failed)
    return CvReport(target, tuple(results), summary, failed)


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped; midranks handle ties. With 12 or fewer
    non-zero differences the null distribution is enumerated exactly over
    all sign assignments, otherwise a normal approximation with tie
    correction is used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError("paired samples must be equal-length 1-D arrays")
    diff = a - b
    diff = diff[diff != 0]
    if diff.size == 0:
        raise DegenerateComparisonError("all paired differences are zero")
    n = diff.size
    if n < 5:
        raise InvalidArgumentError(f"need >= 5 non-zero differences, got {n}")
    ranks = _midranks(np.abs(diff))
    w_pos = float(ranks[diff > 0].sum())
    mu = n * (n + 1) / 4.0
    if n <= 12:
        masks = (np.arange(2**n)[:, None] >> np.arange(n)) & 1
        w_all = masks @ ranks
        stat = abs(w_pos - mu)
        return float(np.count_nonzero(np.abs(w_all - mu) >= stat - 1e-12) / 2**n)
    _, counts = np.unique(ranks, return_counts=True)
    tie_term = float(((counts**3 - counts) / 48.0).sum())
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    # continuity correction keeps the approximation near the exact tail sums
    z = max(abs(w_pos - mu) - 0.5, 0.0) / math.sqrt(var)
    return float(math.erfc(z / math.sqrt(2.0)))


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks
