"""Acceptance gate: one test per release criterion.

Each test records a single "[ACCEPTANCE] <criterion>: PASS" line that the
terminal summary prints; a failure surfaces as an ordinary pytest failure
for that criterion's test.
"""

import json
import time

import numpy as np
import pytest

from conftest import FixedDetector, FixedLandmarks, pinned_pipeline, record_acceptance
from facequal.calibration import (
    LabeledScoreSet,
    PerformanceClass,
    calibrate_scores,
    candidate_thresholds,
    classify_performance,
    compute_roc,
    mann_whitney_auc,
    select_threshold,
)
from facequal.cli import main
from facequal.evaluation import evaluate
from facequal.facemodel import FaceBox, GeometricPose, LandmarkSet
from facequal.imagery import ImageBuffer
from facequal.preprocess import PreprocessConfig, preprocess, template_landmarks
from facequal.scoring import REGISTRY, RawScore, ScoringConfig
from facequal.synthesis import (
    DEFAULT_SEVERITIES,
    DegradationSpec,
    KIND_EFFECTS,
    PlanItem,
    apply,
    build_corpus,
)

SYNTH_TESTS = (1, 4, 5, 6, 7, 10, 12, 13, 14, 15, 18, 19, 20, 24)

# one degradation kind per synth-coverable test; frame_lines covers two
SWEEP_KINDS = (
    "gaussian_blur",
    "tint_skin",
    "darken",
    "contrast_compress",
    "pixelate",
    "background_clutter",
    "specular_blob",
    "red_eye",
    "background_shadow",
    "face_shadow",
    "frame_lines",
    "occlusion_patch",
    "white_noise",
)

_ENTRY = {e.id: e for e in REGISTRY}


def _random_score_set(rng, n_max=200):
    while True:
        n = int(rng.integers(4, n_max + 1))
        labels = rng.integers(0, 2, n)
        if 0 < labels.sum() < n:
            break
    scores = np.round(rng.uniform(0, 1, n), 3)
    return LabeledScoreSet(1, tuple(float(s) for s in scores), tuple(int(l) for l in labels))


@pytest.fixture(scope="module")
def severity_sweep(base_faces, base_contexts):
    """Raw scores of every affected test across each kind's severity
    ladder, on all 10 base faces, with the clean image's geometry
    pinned so only the degradation varies. Shared by the separability
    and monotonicity criteria; elapsed wall time is recorded."""
    cfg = ScoringConfig()
    start = time.monotonic()
    results = {}  # (kind, tid, base_name) -> [(severity, score), ...]
    for kind in SWEEP_KINDS:
        ladder = DEFAULT_SEVERITIES[kind]
        for name, img in base_faces:
            base_ctx = base_contexts[name]
            det, est = pinned_pipeline(base_ctx)
            for sev in ladder:
                spec = DegradationSpec(kind, sev)
                sample = apply(img, spec, base_ctx)
                ctx = preprocess(sample.image, PreprocessConfig(), det, est)
                for tid in spec.affected_tests():
                    raw = _ENTRY[tid].run(ctx, cfg)
                    assert raw.computable, (kind, tid, sev)
                    results.setdefault((kind, tid, name), []).append((sev, raw.value))
    return results, time.monotonic() - start


def test_roc_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(2024)
    start = time.monotonic()
    for _ in range(100):
        s = _random_score_set(rng)
        assert abs(compute_roc(s).auc - mann_whitney_auc(s)) <= 1e-9
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"AUC oracle comparison took {elapsed:.2f}s"
    record_acceptance("[ACCEPTANCE] ROC/AUC oracle equivalence (100 random sets, 1e-9): PASS")


def test_threshold_selection_matches_exhaustive_search():
    rng = np.random.default_rng(99)
    for _ in range(100):
        s = _random_score_set(rng)
        scores = np.asarray(s.scores)
        labels = np.asarray(s.labels)
        n_pos = (labels == 1).sum()
        n_neg = (labels == 0).sum()
        # independent exhaustive oracle over every candidate threshold
        best = None
        for t in candidate_thresholds(scores):
            accept = scores >= t
            tpr = (accept & (labels == 1)).sum() / n_pos
            fpr = (accept & (labels == 0)).sum() / n_neg
            if fpr >= 0.5:
                continue
            key = (tpr, -fpr, t)
            if best is None or key > best:
                best = key
        point = select_threshold(compute_roc(s), max_fpr=0.5)
        assert best is not None
        assert (point.tpr, -point.fpr, point.threshold) == best
    record_acceptance("[ACCEPTANCE] threshold selection equals exhaustive search (100 sets): PASS")


def test_performance_class_boundaries():
    expected = {
        0.87: PerformanceClass.HIGH,
        0.75: PerformanceClass.HIGH,
        0.749: PerformanceClass.MEDIUM,
        0.65: PerformanceClass.MEDIUM,
        0.649: PerformanceClass.LOW,
        0.62: PerformanceClass.LOW,
    }
    for auc, cls in expected.items():
        assert classify_performance(auc) is cls, auc
    record_acceptance("[ACCEPTANCE] performance class boundaries: PASS")


def test_degradation_separability(severity_sweep):
    results, elapsed = severity_sweep
    assert elapsed < 120.0, f"sweep took {elapsed:.1f}s"
    pooled = {}  # tid -> (clean scores, max-severity scores)
    for (kind, tid, _name), rows in results.items():
        ladder = DEFAULT_SEVERITIES[kind]
        clean = [v for sev, v in rows if sev == 0]
        worst = [v for sev, v in rows if sev == ladder[-1]]
        c, w = pooled.setdefault(tid, ([], []))
        c.extend(clean)
        w.extend(worst)
    assert set(pooled) == set(SYNTH_TESTS)
    for tid, (clean, worst) in sorted(pooled.items()):
        assert len(clean) >= 10 and len(worst) >= 10
        s = LabeledScoreSet(tid, tuple(clean + worst), tuple([1] * len(clean) + [0] * len(worst)))
        auc = compute_roc(s).auc
        assert auc >= 0.90, f"test {tid}: AUC {auc:.3f}"
    record_acceptance("[ACCEPTANCE] degradation separability (14 tests, 10 bases, AUC >= 0.90): PASS")


def test_monotonicity_zero_violations(severity_sweep):
    results, _ = severity_sweep
    violations = []
    for key, rows in results.items():
        ordered = [v for _, v in sorted(rows)]
        for a, b in zip(ordered, ordered[1:]):
            if b > a:
                violations.append((key, a, b))
    assert violations == []
    record_acceptance("[ACCEPTANCE] raw-score monotonicity across severity ladders: PASS")


def test_preprocessing_contract_1000_random_triples():
    rng = np.random.default_rng(7)
    template = template_landmarks()
    for _ in range(1000):
        w = int(rng.integers(40, 301))
        h = int(rng.integers(40, 301))
        bw = int(rng.integers(16, w + 1))
        bh = int(rng.integers(16, h + 1))
        bx = int(rng.integers(0, w - bw + 1))
        by = int(rng.integers(0, h - bh + 1))
        margin = int(rng.integers(0, 41))
        img = ImageBuffer(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))
        box = FaceBox(bx, by, bw, bh, 1.0)
        ctx = preprocess(
            img,
            PreprocessConfig(margin=margin),
            FixedDetector(box),
            FixedLandmarks(template),
        )
        assert ctx.crop.pixels.shape == (112, 112, 3)
        x, y, cw, ch = ctx.crop_rect
        assert x == max(0, bx - margin)
        assert y == max(0, by - margin)
        assert x + cw == min(w, bx + bw + margin)
        assert y + ch == min(h, by + bh + margin)
    record_acceptance("[ACCEPTANCE] preprocessing contract (1000 random triples -> 112x112x3): PASS")


def test_calibration_evaluation_consistency():
    rng = np.random.default_rng(321)
    n = 40
    sets = []
    scores = {f"img{i:02d}": {} for i in range(n)}
    labels = {f"img{i:02d}": {} for i in range(n)}
    for tid in range(1, 26):
        vals = np.round(rng.uniform(0, 1, n), 3)
        labs = rng.integers(0, 2, n)
        labs[0], labs[1] = 1, 0  # guarantee both classes
        sets.append(
            LabeledScoreSet(tid, tuple(float(v) for v in vals), tuple(int(l) for l in labs))
        )
        for i in range(n):
            scores[f"img{i:02d}"][tid] = RawScore(float(vals[i]))
            labels[f"img{i:02d}"][tid] = int(labs[i])
    result = calibrate_scores(sets)
    report = evaluate(scores, labels, result.thresholds)
    checked = 0
    for t in result.thresholds.tests:
        if t.provenance != "calibrated":
            continue
        row = report.by_id(t.test_id)
        assert row.tpr == t.tpr, t.test_id
        assert row.fpr == t.fpr, t.test_id
        checked += 1
    assert checked >= 20
    record_acceptance("[ACCEPTANCE] evaluation reproduces calibration (TPR, FPR) exactly: PASS")


def test_geometry_mirror_symmetry():
    rng = np.random.default_rng(55)
    pose = GeometricPose()
    template = template_landmarks()
    for _ in range(50):
        pts = {
            name: (x + rng.uniform(-4, 4), y + rng.uniform(-4, 4))
            for name, (x, y) in template.points.items()
        }
        lm = LandmarkSet(pts, template.contour)
        a = pose.estimate(lm)
        b = pose.estimate(lm.mirrored())
        assert abs(a.roll + b.roll) <= 1e-6
        assert abs(a.yaw + b.yaw) <= 1e-6
        assert abs(a.pitch - b.pitch) <= 1e-6
    record_acceptance("[ACCEPTANCE] mirror flip negates roll and yaw (50 random landmark sets): PASS")


def test_end_to_end_determinism(tmp_path, base_faces, capsys):
    plan = [PlanItem("gaussian_blur", (0, 3.0), 10)]
    out = build_corpus(base_faces, plan, seed=0, out_dir=tmp_path / "corpus")
    images = sorted((out / "images").glob("*.png"))
    assert len(images) == 20
    for path in images:
        main(["assess", str(path), "--json"])
        first = capsys.readouterr().out
        main(["assess", str(path), "--json"])
        second = capsys.readouterr().out
        assert first == second, path.name
        json.loads(first)  # stays valid JSON
    record_acceptance("[ACCEPTANCE] assess JSON byte-identical across runs (20 images): PASS")
