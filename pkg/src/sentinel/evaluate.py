"""Series-level evaluation: confusion metrics, threshold detection with a
consecutive-crossing debounce, threshold sweeps, and reaction times.

A series counts as a predicted syncope iff the detector fires anywhere in
it; the confusion table is therefore over series, not windows. Reaction
time is the distance from detection to the manual marker in seconds
(positive when the detector fires early).

Undefined metrics (recall with no positive series, precision when the
detector never fires) are reported as absent values — never coerced to
0 or 1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import Label
from .errors import (
    ConfigError,
    EmptyEvaluation,
    NoDetections,
    NoPositives,
    SeriesTooShort,
    UndefinedF,
)
from .nn import GruModel, forward_batch
from .preprocess import CleanSeries

EVAL_CHUNK = 256  # windows per forward pass when tracing a series


def recall(tp: int, fn: int) -> float:
    """Sensitivity: tp / (tp + fn)."""
    if tp + fn == 0:
        raise NoPositives("recall undefined: no positive examples")
    return tp / (tp + fn)


def precision(tp: int, fp: int) -> float:
    if tp + fp == 0:
        raise NoDetections("precision undefined: no detections")
    return tp / (tp + fp)


def f_measure(recall_value: float, precision_value: float, beta: float = 1.0) -> float:
    """F_beta = (1+beta^2) * r * p / (r + beta^2 * p); beta weights recall."""
    denom = recall_value + beta * beta * precision_value
    if denom == 0:
        raise UndefinedF("F measure undefined: recall and precision both zero")
    return (1 + beta * beta) * recall_value * precision_value / denom


def accuracy(t: int, f: int) -> float:
    """Fraction of correct series: t / (t + f)."""
    if t + f == 0:
        raise EmptyEvaluation("accuracy undefined: nothing evaluated")
    return t / (t + f)


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class SeriesOutcome:
    id: str
    label: Label
    detected: bool
    detection_index: int | None
    reaction_seconds: float | None


@dataclass
class EvalReport:
    threshold: float
    consecutive: int
    beta: float
    confusion: ConfusionCounts
    recall: float | None
    precision: float | None
    f_beta: float | None
    accuracy: float
    per_series: list[SeriesOutcome]

    def reaction_times(self) -> list[float]:
        return [o.reaction_seconds for o in self.per_series
                if o.reaction_seconds is not None]


def median_reaction(report: EvalReport) -> float | None:
    times = report.reaction_times()
    if not times:
        return None
    return float(np.median(times))


def series_probabilities(model: GruModel, series: CleanSeries) -> np.ndarray:
    """P(syncope) for every stride-1 window of the series.

    Entry i corresponds to the window ending at sample i + window_size - 1.
    """
    window = model.spec.window_size
    x = series.window_input()
    n = len(x)
    if n < window:
        raise SeriesTooShort(
            f"series {series.id!r} has {n} samples, needs {window}"
        )
    views = np.lib.stride_tricks.sliding_window_view(x, (window, 2))[:, 0]
    out = np.empty(len(views))
    for lo in range(0, len(views), EVAL_CHUNK):
        chunk = views[lo:lo + EVAL_CHUNK]
        probs, _ = forward_batch(model, np.ascontiguousarray(chunk), need_cache=False)
        out[lo:lo + len(chunk)] = probs[:, 1]
    return out


def detect_from_trace(trace: np.ndarray, threshold: float, consecutive: int = 1) -> int | None:
    """First index opening a run of `consecutive` values >= threshold."""
    if consecutive < 1:
        raise ConfigError(f"consecutive must be >= 1, got {consecutive}")
    hits = np.asarray(trace) >= threshold
    if consecutive > 1:
        if len(hits) < consecutive:
            return None
        hits = np.lib.stride_tricks.sliding_window_view(hits, consecutive).all(axis=1)
    idx = np.flatnonzero(hits)
    if len(idx) == 0:
        return None
    return int(idx[0])


def detect_series(model: GruModel, series: CleanSeries, threshold: float,
                  consecutive: int = 1) -> int | None:
    """End index (into the series) of the first window opening a run of
    `consecutive` stride-1 windows whose P(syncope) >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0,1), got {threshold}")
    trace = series_probabilities(model, series)
    pos = detect_from_trace(trace, threshold, consecutive)
    if pos is None:
        return None
    return pos + model.spec.window_size - 1


def evaluate_dataset(model: GruModel, series_list: list[CleanSeries], threshold: float,
                     consecutive: int = 1, beta: float = 1.0,
                     traces: dict[str, np.ndarray] | None = None) -> EvalReport:
    """Classify every series by threshold detection and tally the confusion.

    ``traces`` optionally carries precomputed probability traces keyed by
    series id so sweeps can reuse one forward pass per series.
    """
    if not series_list:
        raise EmptyEvaluation("no series to evaluate")
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0,1), got {threshold}")
    window = model.spec.window_size
    confusion = ConfusionCounts()
    outcomes = []
    for series in series_list:
        if traces is not None and series.id in traces:
            trace = traces[series.id]
        else:
            trace = series_probabilities(model, series)
            if traces is not None:
                traces[series.id] = trace
        pos = detect_from_trace(trace, threshold, consecutive)
        detection = None if pos is None else pos + window - 1
        detected = detection is not None
        is_syncope = series.label is Label.SYNCOPE
        if is_syncope:
            if detected:
                confusion.tp += 1
            else:
                confusion.fn += 1
        else:
            if detected:
                confusion.fp += 1
            else:
                confusion.tn += 1
        reaction = None
        if detected and is_syncope and series.marker_index is not None:
            reaction = (series.marker_index - detection) / series.rate_hz
        outcomes.append(SeriesOutcome(
            id=series.id, label=series.label, detected=detected,
            detection_index=detection, reaction_seconds=reaction,
        ))

    def _try(fn, *args):
        try:
            return fn(*args)
        except (NoPositives, NoDetections, UndefinedF):
            return None

    r = _try(recall, confusion.tp, confusion.fn)
    p = _try(precision, confusion.tp, confusion.fp)
    f = None
    if r is not None and p is not None:
        f = _try(f_measure, r, p, beta)
    acc = accuracy(confusion.tp + confusion.tn, confusion.fp + confusion.fn)
    return EvalReport(
        threshold=threshold, consecutive=consecutive, beta=beta,
        confusion=confusion, recall=r, precision=p, f_beta=f, accuracy=acc,
        per_series=outcomes,
    )


def threshold_sweep(model: GruModel, series_list: list[CleanSeries],
                    thresholds: list[float], consecutive: int = 1,
                    beta: float = 1.0) -> list[EvalReport]:
    """Evaluate the same data at each threshold, reusing probability traces."""
    if not thresholds:
        raise ConfigError("thresholds list is empty")
    arr = list(thresholds)
    if any(not 0.0 < t < 1.0 for t in arr):
        raise ConfigError("thresholds must lie in (0,1)")
    if any(b <= a for a, b in zip(arr, arr[1:])):
        raise ConfigError("thresholds must be strictly ascending")
    traces: dict[str, np.ndarray] = {}
    return [evaluate_dataset(model, series_list, t, consecutive=consecutive,
                             beta=beta, traces=traces) for t in arr]


def default_threshold_grid() -> list[float]:
    """0.05 through 0.95 in steps of 0.05 (19 thresholds)."""
    return [i / 20 for i in range(1, 20)]


# --- report persistence ----------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["series_id", "label", "detected", "detection_index", "reaction_s"])
        for o in report.per_series:
            w.writerow([o.id, o.label.value, int(o.detected),
                        _fmt(o.detection_index), _fmt(o.reaction_seconds)])


def report_summary(report: EvalReport) -> dict:
    return {
        "threshold": report.threshold,
        "consecutive": report.consecutive,
        "beta": report.beta,
        "confusion": {"tp": report.confusion.tp, "fp": report.confusion.fp,
                      "fn": report.confusion.fn, "tn": report.confusion.tn},
        "recall": report.recall,
        "precision": report.precision,
        "f_beta": report.f_beta,
        "accuracy": report.accuracy,
        "median_reaction_s": median_reaction(report),
        "n_series": report.confusion.total,
    }


def write_report_json(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report_summary(report), fh, indent=2)
        fh.write("\n")


def write_sweep_csv(reports: list[EvalReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "recall", "precision", "f_beta", "accuracy",
                    "median_reaction_s", "detections"])
        for r in reports:
            w.writerow([
                _fmt(r.threshold), _fmt(r.recall), _fmt(r.precision),
                _fmt(r.f_beta), _fmt(r.accuracy), _fmt(median_reaction(r)),
                r.confusion.tp + r.confusion.fp,
            ])
