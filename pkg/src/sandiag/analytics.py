"""Statistical building blocks: baselines, anomaly scoring, degradation, correlation.

Deliberately transparent methods: mean/sigma z-scores against a fitted
baseline, medians for operator history, Pearson correlation over
timestamp-aligned samples.  Five-minute averaged monitoring data does not
support anything fancier, and every number in a report must be explainable.

All functions are pure over immutable inputs; callers may parallelize per
(component, metric) pair.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Sequence

from .errors import (
    EmptyInput,
    EmptyWindow,
    FingerprintMismatch,
    InsufficientHistory,
    InsufficientOverlap,
    ZeroVariance,
)
from .ingest import MetricSeries, RunRecord

DIRECTION_HIGH = "high"
DIRECTION_LOW = "low"

DEFAULT_TAU = 3.0        # z-score threshold for a degraded metric
DEFAULT_DELTA = 0.2      # relative slowdown threshold for a degraded operator
DEFAULT_FLOOR_S = 1.0    # absolute floor below which operator drift is ignored
DEFAULT_MIN_RUNS = 5     # minimum history length k
_SIGMA_EPSILON = 1e-9    # guards z-scores against a zero-variance baseline


@dataclass(frozen=True)
class BaselineModel:
    """Healthy-behavior summary of one metric."""

    n: int
    mean: float
    std: float
    min_value: float
    max_value: float
    component_id: str = ""
    metric: str = ""


@dataclass(frozen=True)
class AnomalyVerdict:
    component_id: str
    metric: str
    score: float
    direction: str
    degraded: bool
    window: tuple[int, int] | None = None


@dataclass(frozen=True)
class DegradationRecord:
    op_id: str
    op_kind: str
    baseline_median_s: float
    current_s: float
    delta_s: float
    rel_delta: float
    degraded: bool


def fit_baseline(samples: Sequence[float], component_id: str = "", metric: str = "") -> BaselineModel:
    """Mean/std/min/max of the samples; sample std (n-1) when n >= 2, else 0."""
    if not samples:
        raise EmptyInput("cannot fit a baseline over zero samples")
    mean = statistics.fmean(samples)
    std = statistics.stdev(samples) if len(samples) >= 2 else 0.0
    return BaselineModel(
        n=len(samples),
        mean=mean,
        std=std,
        min_value=min(samples),
        max_value=max(samples),
        component_id=component_id,
        metric=metric,
    )


def anomaly_score(
    baseline: BaselineModel,
    window: Sequence[float],
    tau: float = DEFAULT_TAU,
    window_bounds: tuple[int, int] | None = None,
) -> AnomalyVerdict:
    """Z-score of the window mean against the baseline.

    A zero-variance baseline is guarded with a tiny epsilon, so any real
    deviation produces a very large finite score.
    """
    if not window:
        raise EmptyWindow(
            f"empty window for ({baseline.component_id}, {baseline.metric})"
        )
    window_mean = statistics.fmean(window)
    score = abs(window_mean - baseline.mean) / max(baseline.std, _SIGMA_EPSILON)
    direction = DIRECTION_HIGH if window_mean >= baseline.mean else DIRECTION_LOW
    return AnomalyVerdict(
        component_id=baseline.component_id,
        metric=baseline.metric,
        score=score,
        direction=direction,
        degraded=score >= tau,
        window=window_bounds,
    )


def _operator_times(record: RunRecord) -> list[tuple[str, str, float]]:
    """(op_id, op_kind, elapsed) in preorder.

    Runs that share a plan fingerprint share a tree shape, so preorder
    position identifies the same operator across runs even when ids differ.
    """
    return [(op.op_id, op.op_kind, op.elapsed_s) for op in record.snapshot.root.walk()]


def operator_degradation(
    history: Sequence[RunRecord],
    current: RunRecord,
    delta: float = DEFAULT_DELTA,
    floor_s: float = DEFAULT_FLOOR_S,
    min_runs: int = DEFAULT_MIN_RUNS,
) -> list[DegradationRecord]:
    """Per-operator slowdown of the current run against its history medians.

    An operator is degraded when its time grew by at least ``delta``
    relative AND at least ``floor_s`` seconds absolute; the median baseline
    keeps single noisy historical runs from moving the needle.
    """
    if len(history) < min_runs:
        raise InsufficientHistory(
            f"need at least {min_runs} historical runs, have {len(history)}"
        )
    for record in history:
        if record.plan_fingerprint != current.plan_fingerprint:
            raise FingerprintMismatch(
                f"run {record.snapshot.run_id!r} has fingerprint {record.plan_fingerprint}, "
                f"current is {current.plan_fingerprint}"
            )

    history_times = [_operator_times(r) for r in history]
    records = []
    for position, (op_id, op_kind, current_s) in enumerate(_operator_times(current)):
        baseline_median = statistics.median(times[position][2] for times in history_times)
        delta_s = current_s - baseline_median
        rel_delta = delta_s / max(baseline_median, _SIGMA_EPSILON)
        records.append(
            DegradationRecord(
                op_id=op_id,
                op_kind=op_kind,
                baseline_median_s=baseline_median,
                current_s=current_s,
                delta_s=delta_s,
                rel_delta=rel_delta,
                degraded=rel_delta >= delta and delta_s >= floor_s,
            )
        )
    return records


def correlate(a: MetricSeries, b: MetricSeries) -> float:
    """Pearson coefficient over the timestamps both series actually have.

    Alignment is an inner join on timestamps: a gap in either series drops
    the joint sample rather than inventing one.
    """
    joint_b = dict(b.samples)
    pairs = [(va, joint_b[ts]) for ts, va in a.samples if ts in joint_b]
    if len(pairs) < 3:
        raise InsufficientOverlap(
            f"series share only {len(pairs)} joint samples, need at least 3"
        )
    xs = [p[0] for p in pairs]
    ys = [p[1] for p in pairs]
    if len(set(xs)) == 1 or len(set(ys)) == 1:
        raise ZeroVariance("correlation is undefined for a constant series")
    return statistics.correlation(xs, ys)
