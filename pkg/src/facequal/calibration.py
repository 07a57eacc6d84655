"""ROC curves, AUC, constrained threshold selection, and per-test
performance classes.

Decision rule everywhere: score >= threshold -> predicted compliant.
Candidate thresholds are midpoints between consecutive distinct scores
plus sentinels below and above the score range, so selection never
depends on exact sample values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyCorpus,
    NoFeasibleThreshold,
    SchemaMismatch,
    SingleClassOnly,
)

DEFAULT_THRESHOLD = 0.5
HIGH_AUC = 0.75
MEDIUM_AUC = 0.65


class PerformanceClass(Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


@dataclass(frozen=True)
class LabeledScoreSet:
    """Per-test raw scores paired with binary expert labels."""

    test_id: int
    scores: tuple[float, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.scores) != len(self.labels) or not self.scores:
            raise ValueError("scores and labels must be equal-length and non-empty")
        if any(l not in (0, 1) for l in self.labels):
            raise ValueError("labels must be 0 or 1")


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


@dataclass(frozen=True)
class RocCurve:
    """ROC points sorted by threshold descending, plus trapezoidal AUC."""

    points: tuple[RocPoint, ...]
    auc: float


@dataclass(frozen=True)
class TestThreshold:
    test_id: int
    threshold: float
    provenance: str  # "calibrated" | "default"
    tpr: float | None = None
    fpr: float | None = None


@dataclass(frozen=True)
class ThresholdConfig:
    """Per-test decision thresholds; exactly 25 entries."""

    tests: tuple[TestThreshold, ...]

    def __post_init__(self):
        ids = sorted(t.test_id for t in self.tests)
        if ids != list(range(1, 26)):
            raise ValueError("threshold config must cover test ids 1..25 exactly")

    def by_id(self, test_id: int) -> TestThreshold:
        for t in self.tests:
            if t.test_id == test_id:
                return t
        raise KeyError(test_id)

    def as_mapping(self) -> dict[int, float]:
        return {t.test_id: t.threshold for t in self.tests}

    @classmethod
    def all_default(cls) -> "ThresholdConfig":
        return cls(
            tuple(
                TestThreshold(i, DEFAULT_THRESHOLD, "default") for i in range(1, 26)
            )
        )

    def to_json(self) -> str:
        entries = []
        for t in sorted(self.tests, key=lambda t: t.test_id):
            entry = {
                "id": t.test_id,
                "threshold": t.threshold,
                "provenance": t.provenance,
            }
            if t.tpr is not None:
                entry["tpr"] = t.tpr
            if t.fpr is not None:
                entry["fpr"] = t.fpr
            entries.append(entry)
        return json.dumps({"version": 1, "tests": entries}, indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaMismatch(f"cannot read thresholds {path}: {exc}") from exc
        if not isinstance(data, dict) or data.get("version") != 1:
            raise SchemaMismatch("threshold file must be a version-1 object")
        raw = data.get("tests")
        if not isinstance(raw, list):
            raise SchemaMismatch("threshold file needs a 'tests' array")
        tests = []
        for item in raw:
            try:
                tid = int(item["id"])
                thr = float(item["threshold"])
                prov = str(item["provenance"])
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaMismatch(f"bad threshold entry {item!r}") from exc
            if prov not in ("calibrated", "default"):
                raise SchemaMismatch(f"bad provenance {prov!r}")
            if not 0.0 <= thr <= 1.0:
                raise SchemaMismatch(f"threshold out of range: {thr}")
            tpr = item.get("tpr")
            fpr = item.get("fpr")
            tests.append(
                TestThreshold(
                    tid,
                    thr,
                    prov,
                    None if tpr is None else float(tpr),
                    None if fpr is None else float(fpr),
                )
            )
        try:
            return cls(tuple(tests))
        except ValueError as exc:
            raise SchemaMismatch(str(exc)) from exc


def candidate_thresholds(scores: Sequence[float]) -> list[float]:
    """Midpoints between consecutive distinct scores plus sentinels."""
    distinct = sorted(set(float(s) for s in scores))
    mids = [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    return [distinct[-1] + 1.0] + mids[::-1] + [distinct[0] - 1.0]


def compute_roc(s: LabeledScoreSet) -> RocCurve:
    """ROC by sweeping candidate thresholds from high to low.

    TPR = P(score >= t | label 1), FPR = P(score >= t | label 0).
    """
    scores = np.asarray(s.scores, dtype=np.float64)
    labels = np.asarray(s.labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassOnly(
            f"test {s.test_id}: need both classes ({n_pos} positive, {n_neg} negative)"
        )
    points = []
    for t in candidate_thresholds(scores):
        accept = scores >= t
        tpr = float((accept & (labels == 1)).sum()) / n_pos
        fpr = float((accept & (labels == 0)).sum()) / n_neg
        points.append(RocPoint(threshold=t, tpr=tpr, fpr=fpr))
    auc = 0.0
    for a, b in zip(points, points[1:]):
        auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0
    return RocCurve(points=tuple(points), auc=auc)


def compute_auc(curve: RocCurve) -> float:
    return curve.auc


def mann_whitney_auc(s: LabeledScoreSet) -> float:
    """O(n^2) pairwise oracle: P(score+ > score-) + 0.5 P(tie)."""
    pos = [sc for sc, l in zip(s.scores, s.labels) if l == 1]
    neg = [sc for sc, l in zip(s.scores, s.labels) if l == 0]
    if not pos or not neg:
        raise SingleClassOnly("need both classes")
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def select_threshold(curve: RocCurve, max_fpr: float = 0.5) -> RocPoint:
    """Highest-TPR point with FPR strictly below max_fpr; ties break to
    lower FPR, then to the higher threshold."""
    feasible = [p for p in curve.points if p.fpr < max_fpr]
    if not feasible:
        raise NoFeasibleThreshold(f"no ROC point with FPR < {max_fpr}")
    return max(feasible, key=lambda p: (p.tpr, -p.fpr, p.threshold))


def classify_performance(auc: float) -> PerformanceClass:
    if not 0.0 <= auc <= 1.0:
        raise ValueError(f"auc out of range: {auc}")
    if auc >= HIGH_AUC:
        return PerformanceClass.HIGH
    if auc >= MEDIUM_AUC:
        return PerformanceClass.MEDIUM
    return PerformanceClass.LOW


@dataclass(frozen=True)
class CalibrationResult:
    thresholds: ThresholdConfig
    curves: dict[int, RocCurve]  # only tests that calibrated


def calibrate_scores(
    score_sets: Iterable[LabeledScoreSet], max_fpr: float = 0.5
) -> CalibrationResult:
    """Calibrate a threshold per test from labeled scores.

    Tests with a single class (or absent entirely) fall back to the
    default threshold with provenance "default".
    """
    by_id = {s.test_id: s for s in score_sets}
    if not by_id:
        raise EmptyCorpus("no labeled scores to calibrate from")
    tests = []
    curves: dict[int, RocCurve] = {}
    for tid in range(1, 26):
        s = by_id.get(tid)
        if s is None:
            tests.append(TestThreshold(tid, DEFAULT_THRESHOLD, "default"))
            continue
        try:
            curve = compute_roc(s)
            point = select_threshold(curve, max_fpr)
        except (SingleClassOnly, NoFeasibleThreshold):
            tests.append(TestThreshold(tid, DEFAULT_THRESHOLD, "default"))
            continue
        curves[tid] = curve
        # sentinel thresholds can fall outside [0,1]; clamp, then recompute
        # the recorded stats at the stored threshold so evaluation with this
        # config reproduces them exactly
        thr = min(max(point.threshold, 0.0), 1.0)
        scores = np.asarray(s.scores, dtype=np.float64)
        labels = np.asarray(s.labels, dtype=np.int64)
        accept = scores >= thr
        tpr = float((accept & (labels == 1)).sum()) / int((labels == 1).sum())
        fpr = float((accept & (labels == 0)).sum()) / int((labels == 0).sum())
        if fpr >= max_fpr:
            # clamping broke the FPR constraint (scores pinned at 1.0);
            # an honest default beats a constraint-violating threshold
            tests.append(TestThreshold(tid, DEFAULT_THRESHOLD, "default"))
            del curves[tid]
            continue
        tests.append(TestThreshold(tid, thr, "calibrated", tpr, fpr))
    return CalibrationResult(ThresholdConfig(tuple(tests)), curves)
