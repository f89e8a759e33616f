"""Alarm-level scoring of seizure predictions.

Per-segment probabilities become a decision timeline; an alarm fires when at
least k of the last n decisions are positive, with a refractory hold-off
afterwards.  A seizure counts as predicted when its onset falls inside the
occurrence window that an alarm opens after the sph lead time.  Fold scores
are sensitivity (percent of test seizures predicted), false alarms per
interictal hour, and the rank-based AUC of the raw probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import clone

from .balance import BalancePlan, apply_plan, split_classes
from .dataset import INTERICTAL, PREICTAL, make_folds
from .errors import ProtocolError


@dataclass(frozen=True)
class AlarmPolicy:
    k: int = 8
    n: int = 10
    refractory_s: float = 1800.0
    sph_s: float = 60.0
    sop_s: float = 1800.0

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k} n={self.n}")
        if self.sop_s <= 0:
            raise ValueError(f"sop_s must be positive, got {self.sop_s}")
        if self.sph_s < 0 or self.refractory_s < 0:
            raise ValueError("sph_s and refractory_s must be non-negative")


@dataclass
class PredictionTimeline:
    """Ordered per-segment records; starts must be strictly increasing."""

    starts_s: np.ndarray
    probabilities: np.ndarray
    decisions: np.ndarray
    stride_s: float

    def __post_init__(self):
        self.starts_s = np.asarray(self.starts_s, dtype=np.float64)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.decisions = np.asarray(self.decisions, dtype=bool)
        if not (len(self.starts_s) == len(self.probabilities) == len(self.decisions)):
            raise ValueError("timeline columns differ in length")
        if (np.diff(self.starts_s) <= 0).any():
            raise ValueError("timeline start times must be strictly increasing")
        if self.stride_s <= 0:
            raise ValueError(f"stride must be positive, got {self.stride_s}")


def timeline_from_segments(classifier, segments, stride_s: float,
                           threshold: float = 0.5) -> PredictionTimeline:
    """Score segments in chronological order; synthetic data is forbidden
    here because timelines represent held-out test signal."""
    ordered = sorted(segments, key=lambda s: s.start_s)
    if any(s.synthetic for s in ordered):
        raise ProtocolError("synthetic segment in a test timeline")
    probs = classifier.predict_proba(ordered)[:, 1]
    return PredictionTimeline(
        starts_s=np.array([s.start_s for s in ordered]),
        probabilities=probs, decisions=probs > threshold, stride_s=stride_s)


def raise_alarms(timeline: PredictionTimeline, policy: AlarmPolicy) -> list[float]:
    """Alarm times under the k-of-n rule.

    At the timeline head the window is the available prefix, so fewer than n
    decisions can still fire once k of them are positive.  After an alarm the
    next one must be at least refractory_s later.
    """
    decisions = timeline.decisions.astype(np.int64)
    alarms: list[float] = []
    for i, t in enumerate(timeline.starts_s):
        window = decisions[max(0, i - policy.n + 1):i + 1]
        if window.sum() >= policy.k:
            if not alarms or t - alarms[-1] >= policy.refractory_s:
                alarms.append(float(t))
    return alarms


@dataclass
class FoldReport:
    fold: int
    sens_percent: float
    fpr_per_hour: float
    auc: float
    alarms: list[float] = field(default_factory=list)
    predicted: list[float] = field(default_factory=list)
    missed: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.sens_percent <= 100.0:
            raise ValueError(f"sensitivity {self.sens_percent} outside [0, 100]")
        if self.fpr_per_hour < 0:
            raise ValueError(f"negative false alarm rate {self.fpr_per_hour}")
        if not (np.isnan(self.auc) or 0.0 <= self.auc <= 1.0):
            raise ValueError(f"auc {self.auc} outside [0, 1]")


def _covers(alarm: float, onset: float, policy: AlarmPolicy) -> bool:
    # the occurrence window opens sph after the alarm and lasts sop
    return alarm + policy.sph_s <= onset <= alarm + policy.sph_s + policy.sop_s


def score_fold(alarms, onsets, interictal_hours: float, policy: AlarmPolicy,
               *, auc_value: float = float("nan"), fold: int = 0) -> FoldReport:
    """Sensitivity and false-alarm rate for one fold's alarms."""
    onsets = [float(o) for o in onsets]
    if not onsets:
        raise ValueError("score_fold needs at least one seizure onset")
    if interictal_hours < 0:
        raise ValueError(f"negative interictal hours {interictal_hours}")
    predicted = [o for o in onsets
                 if any(_covers(a, o, policy) for a in alarms)]
    missed = [o for o in onsets if o not in predicted]
    false = [a for a in alarms
             if not any(_covers(a, o, policy) for o in onsets)]
    if interictal_hours == 0:
        if false:
            raise ValueError("false alarms recorded against zero interictal hours")
        fpr = 0.0
    else:
        fpr = len(false) / interictal_hours
    return FoldReport(fold=fold, sens_percent=100.0 * len(predicted) / len(onsets),
                      fpr_per_hour=fpr, auc=auc_value, alarms=list(alarms),
                      predicted=predicted, missed=missed)


def auc(scores, labels) -> float:
    """Mann-Whitney statistic by rank sums with tie averaging."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError("scores and labels must be matching 1-D arrays")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both classes present")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    ranks = ((ends - counts + 1 + ends) / 2.0)[inverse]
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass
class CvReport:
    folds: list[FoldReport]
    sens_percent: float
    fpr_per_hour: float
    auc: float


def _has_both_classes(segments) -> bool:
    labels = {s.label for s in segments}
    return labels == {INTERICTAL, PREICTAL}


def _run_fold(fold, plan: BalancePlan, classifier, policy: AlarmPolicy,
              fs: int, stride_s: float, onsets: dict[int, float],
              generator, threshold: float) -> FoldReport:
    net = sched = None
    if plan.method == "diffusion":
        if generator is None:
            raise ValueError("diffusion balancing needs a generator prototype")
        train_pre, _ = split_classes(fold.train)
        fitted = clone(generator).fit(train_pre)
        net, sched = fitted.net_, fitted.schedule_
    balanced = apply_plan(replace(plan, seed=plan.seed + fold.index),
                          fold.train, fs=fs, net=net, sched=sched)
    validation = fold.val if _has_both_classes(fold.val) else None
    fitted_clf = clone(classifier).fit(balanced, validation=validation)

    ordered = sorted(fold.test, key=lambda s: s.start_s)
    timeline = timeline_from_segments(fitted_clf, ordered, stride_s, threshold)
    labels = np.array([s.label for s in ordered])
    alarms = raise_alarms(timeline, policy)

    test_seizures = sorted({s.seizure for s in ordered if s.label == PREICTAL})
    try:
        fold_onsets = [onsets[k] for k in test_seizures]
    except KeyError as missing:
        raise ValueError(f"no onset recorded for seizure {missing}") from None
    interictal_hours = stride_s * int((labels == INTERICTAL).sum()) / 3600.0
    return score_fold(alarms, fold_onsets, interictal_hours, policy,
                      fold=fold.index, auc_value=auc(timeline.probabilities, labels))


def run_cv(segments, plan: BalancePlan, classifier, policy: AlarmPolicy, *,
           fs: int, stride_s: float, onsets: dict[int, float],
           generator=None, threshold: float = 0.5, jobs: int = 1) -> CvReport:
    """Leave-one-seizure-out evaluation.

    Each fold balances its own training split (retraining the generator from
    that split's preictal data when the plan calls for diffusion), fits a
    fresh classifier clone, and scores the untouched test split.  Folds are
    independent; jobs > 1 runs them in worker processes with the reports
    still reduced in fold order.
    """
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    folds = make_folds(segments)
    args = [(fold, plan, classifier, policy, fs, stride_s, onsets,
             generator, threshold) for fold in folds]
    if jobs == 1:
        reports = [_run_fold(*a) for a in args]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=min(jobs, len(folds))) as pool:
            reports = list(pool.map(_run_fold, *zip(*args)))
    return CvReport(folds=reports,
                    sens_percent=float(np.mean([r.sens_percent for r in reports])),
                    fpr_per_hour=float(np.mean([r.fpr_per_hour for r in reports])),
                    auc=float(np.mean([r.auc for r in reports])))


def report_csv(cv: CvReport) -> str:
    """Per-fold rows plus an aggregate row; floats keep full precision."""
    lines = ["fold,sens_percent,fpr_per_hour,auc,alarms,predicted,missed"]
    for r in cv.folds:
        lines.append(f"{r.fold},{r.sens_percent!r},{r.fpr_per_hour!r},{r.auc!r},"
                     f"{len(r.alarms)},{len(r.predicted)},{len(r.missed)}")
    total_alarms = sum(len(r.alarms) for r in cv.folds)
    total_pred = sum(len(r.predicted) for r in cv.folds)
    total_miss = sum(len(r.missed) for r in cv.folds)
    lines.append(f"aggregate,{cv.sens_percent!r},{cv.fpr_per_hour!r},{cv.auc!r},"
                 f"{total_alarms},{total_pred},{total_miss}")
    return "\n".join(lines) + "\n"


def report_summary(cv: CvReport) -> str:
    """Fixed-width table with one row per fold and an Ave row."""
    header = f"{'Fold':<6}{'Sens %':>8}{'FPR /h':>9}{'AUC':>7}"
    rows = [header, "-" * len(header)]
    for r in cv.folds:
        rows.append(f"{r.fold:<6}{r.sens_percent:>8.1f}{r.fpr_per_hour:>9.2f}"
                    f"{r.auc:>7.3f}")
    rows.append(f"{'Ave':<6}{cv.sens_percent:>8.1f}{cv.fpr_per_hour:>9.2f}"
                f"{cv.auc:>7.3f}")
    return "\n".join(rows) + "\n"
