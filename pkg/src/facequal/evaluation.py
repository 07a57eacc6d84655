"""Apply frozen thresholds to a labeled corpus and report per-test
accuracy, TPR, and FPR, plus label-balance diagnostics.

Label files are CSV with header ``image,t1,...,t25`` and cell values
0, 1, or NA. NA labels and NotComputable outcomes are excluded from a
test's tallies and reported in their own columns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .calibration import LabeledScoreSet, ThresholdConfig
from .errors import EmptyCorpus, NoFaceDetected, SchemaMismatch
from .imgio import decode_image
from .facemodel import SidecarDetector, SidecarLandmarks, sidecar_path_for
from .preprocess import PreprocessConfig, preprocess
from .scoring import RawScore, ScoringConfig, compute_raw_scores

EXPECTED_HEADER = ["image"] + [f"t{i}" for i in range(1, 26)]


def read_labels(path: str | Path) -> dict[str, dict[int, int | None]]:
    """Parse a label CSV into {image: {test_id: 0|1|None}} (None = NA)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise SchemaMismatch(f"cannot read labels {path}: {exc}") from exc
    if not rows or rows[0] != EXPECTED_HEADER:
        raise SchemaMismatch(
            f"label file {path} must start with header {','.join(EXPECTED_HEADER)}"
        )
    labels: dict[str, dict[int, int | None]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 26:
            raise SchemaMismatch(f"{path}:{line_no}: expected 26 columns")
        per_test: dict[int, int | None] = {}
        for tid, cell in enumerate(row[1:], start=1):
            if cell == "NA":
                per_test[tid] = None
            elif cell in ("0", "1"):
                per_test[tid] = int(cell)
            else:
                raise SchemaMismatch(f"{path}:{line_no}: bad label {cell!r}")
        labels[row[0]] = per_test
    return labels


def write_labels(path: str | Path, labels: dict[str, dict[int, int | None]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXPECTED_HEADER)
        for image in sorted(labels):
            row = [image]
            for tid in range(1, 26):
                v = labels[image].get(tid)
                row.append("NA" if v is None else str(v))
            writer.writerow(row)


def _score_one(
    corpus_dir: str,
    name: str,
    cfg: ScoringConfig,
    pre_cfg: PreprocessConfig,
    use_sidecars: bool,
) -> tuple[str, dict[int, RawScore] | None]:
    path = Path(corpus_dir) / name
    if not path.exists():
        return name, None
    try:
        img = decode_image(path)
    except Exception:
        return name, None
    detector = None
    estimator = None
    sidecar = sidecar_path_for(path)
    if use_sidecars and sidecar.exists():
        detector = SidecarDetector(sidecar)
        estimator = SidecarLandmarks(sidecar)
    try:
        ctx = preprocess(img, pre_cfg, detector, estimator)
    except NoFaceDetected:
        return name, None
    return name, compute_raw_scores(ctx, cfg)


def score_corpus(
    corpus_dir: str | Path,
    labels: dict[str, dict[int, int | None]],
    cfg: ScoringConfig = ScoringConfig(),
    pre_cfg: PreprocessConfig = PreprocessConfig(),
    use_sidecars: bool = True,
    jobs: int = 1,
) -> dict[str, dict[int, RawScore]]:
    """Raw-score every labeled image found under the corpus directory.

    Images that fail to decode or yield no face are skipped (their tests
    all count as excluded). Sidecar annotations override the fallback
    detector and landmarks when present. With jobs > 1 the per-image
    work fans out to a process pool; output order stays sorted by name
    regardless of scheduling.
    """
    names = sorted(labels)
    out: dict[str, dict[int, RawScore]] = {}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(
                _score_one,
                [str(corpus_dir)] * len(names),
                names,
                [cfg] * len(names),
                [pre_cfg] * len(names),
                [use_sidecars] * len(names),
            )
            for name, scores in results:
                if scores is not None:
                    out[name] = scores
    else:
        for name in names:
            _, scores = _score_one(str(corpus_dir), name, cfg, pre_cfg, use_sidecars)
            if scores is not None:
                out[name] = scores
    if not out:
        raise EmptyCorpus(f"no scoreable images under {corpus_dir}")
    return out


def collect_score_sets(
    scores: dict[str, dict[int, RawScore]],
    labels: dict[str, dict[int, int | None]],
) -> list[LabeledScoreSet]:
    """Pair computable scores with non-NA labels, per test."""
    sets = []
    for tid in range(1, 26):
        vals: list[float] = []
        labs: list[int] = []
        for image, per_test in scores.items():
            label = labels.get(image, {}).get(tid)
            raw = per_test.get(tid)
            if label is None or raw is None or not raw.computable:
                continue
            vals.append(raw.value)
            labs.append(label)
        if vals:
            sets.append(LabeledScoreSet(tid, tuple(vals), tuple(labs)))
    return sets


@dataclass(frozen=True)
class TestPerformance:
    test_id: int
    tp: int
    tn: int
    fp: int
    fn: int
    n_not_computable: int
    n_excluded_na: int

    @property
    def n_scored(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def accuracy(self) -> float | None:
        n = self.n_scored
        return (self.tp + self.tn) / n if n else None

    @property
    def tpr(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def fpr(self) -> float | None:
        d = self.fp + self.tn
        return self.fp / d if d else None


@dataclass(frozen=True)
class PerformanceReport:
    rows: tuple[TestPerformance, ...]
    corpus_name: str
    corpus_size: int
    date: str = ""

    def by_id(self, tid: int) -> TestPerformance:
        return self.rows[tid - 1]

    def to_dict(self) -> dict:
        return {
            "corpus": {
                "name": self.corpus_name,
                "size": self.corpus_size,
                "date": self.date,
            },
            "tests": [
                {
                    "id": r.test_id,
                    "accuracy": r.accuracy,
                    "tpr": r.tpr,
                    "fpr": r.fpr,
                    "n_positive": r.tp + r.fn,
                    "n_negative": r.fp + r.tn,
                    "n_not_computable": r.n_not_computable,
                    "n_excluded_na": r.n_excluded_na,
                    "consistent": consistency_ok(r),
                }
                for r in self.rows
            ],
        }


def evaluate(
    scores: dict[str, dict[int, RawScore]],
    labels: dict[str, dict[int, int | None]],
    thresholds: ThresholdConfig,
    corpus_name: str = "",
    date: str = "",
) -> PerformanceReport:
    """Compare thresholded decisions against expert labels per test."""
    if not labels:
        raise EmptyCorpus("empty label set")
    thr = thresholds.as_mapping()
    rows = []
    for tid in range(1, 26):
        tp = tn = fp = fn = n_nc = n_na = 0
        for image, per_test in labels.items():
            label = per_test.get(tid)
            raw = scores.get(image, {}).get(tid)
            if raw is None or not raw.computable:
                n_nc += 1
                continue
            if label is None:
                n_na += 1
                continue
            decision = 1 if raw.value >= thr[tid] else 0
            if label == 1:
                tp += decision
                fn += 1 - decision
            else:
                fp += decision
                tn += 1 - decision
        rows.append(TestPerformance(tid, tp, tn, fp, fn, n_nc, n_na))
    return PerformanceReport(tuple(rows), corpus_name, len(labels), date)


def consistency_ok(row: TestPerformance, tol: float = 0.02) -> bool:
    """Check accuracy against (TPR, FPR, class balance).

    Flags rows whose reported numbers cannot coexist, e.g. a high
    accuracy alongside TPR 0 and FPR 1.
    """
    if row.accuracy is None or row.tpr is None or row.fpr is None:
        return True
    n_pos = row.tp + row.fn
    n_neg = row.fp + row.tn
    expected = (row.tpr * n_pos + (1.0 - row.fpr) * n_neg) / (n_pos + n_neg)
    return abs(expected - row.accuracy) <= tol


def check_reported_row(
    accuracy: float, tpr: float, fpr: float, n_pos: int, n_neg: int, tol: float = 0.02
) -> bool:
    """Consistency check for externally reported numbers."""
    if n_pos + n_neg == 0:
        return True
    expected = (tpr * n_pos + (1.0 - fpr) * n_neg) / (n_pos + n_neg)
    return abs(expected - accuracy) <= tol


def render_report_text(report: PerformanceReport) -> str:
    """Aligned-column plain text: Test, Accuracy, TPR, FPR."""
    lines = [f"{'Test':>4}  {'Accuracy':>8}  {'TPR':>6}  {'FPR':>6}  {'N/C':>4}"]

    def fmt(v):
        return "  n/a" if v is None else f"{v:.2f}"

    for r in report.rows:
        lines.append(
            f"{r.test_id:>4}  {fmt(r.accuracy):>8}  {fmt(r.tpr):>6}  {fmt(r.fpr):>6}"
            f"  {r.n_not_computable:>4}"
        )
    return "\n".join(lines)


@dataclass(frozen=True)
class BalanceRow:
    test_id: int
    n_positive: int
    n_negative: int
    underrepresented: bool


@dataclass(frozen=True)
class LabelBalance:
    rows: tuple[BalanceRow, ...]

    def by_id(self, tid: int) -> BalanceRow:
        return self.rows[tid - 1]


UNDERREPRESENTED_FRAC = 0.05


def balance_report(labels: dict[str, dict[int, int | None]]) -> LabelBalance:
    """Per-test positive/negative counts; flags tests whose negative
    class is under 5% of the labeled total."""
    rows = []
    for tid in range(1, 26):
        pos = sum(1 for per in labels.values() if per.get(tid) == 1)
        neg = sum(1 for per in labels.values() if per.get(tid) == 0)
        total = pos + neg
        flag = total == 0 or neg < UNDERREPRESENTED_FRAC * total
        rows.append(BalanceRow(tid, pos, neg, flag))
    return LabelBalance(tuple(rows))
