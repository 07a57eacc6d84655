"""Command-line front door: assess single images, calibrate thresholds
on a labeled corpus, evaluate a frozen configuration, and build
synthetic labeled corpora.

Exit codes are the machine contract: 0 overall pass / success, 1 any
failed test, 2 no face detected, 3 I/O or schema error. Stdout carries
the report (JSON with --json); stderr is free-form diagnostics.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .calibration import (
    ThresholdConfig,
    calibrate_scores,
    classify_performance,
)
from .errors import (
    EmptyCorpus,
    FacequalError,
    IOFailure,
    NoFaceDetected,
    SchemaMismatch,
)
from .evaluation import (
    balance_report,
    collect_score_sets,
    evaluate,
    read_labels,
    render_report_text,
    score_corpus,
)
from .facemodel import SidecarDetector, SidecarLandmarks, sidecar_path_for
from .imgio import decode_image
from .preprocess import PreprocessConfig, preprocess
from .scoring import QualityVector, ScoringConfig, load_scoring_config, run_all
from .synthesis import build_corpus, load_plan

CONFIG_ENV_VAR = "FACEQUAL_CONFIG"

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_NO_FACE = 2
EXIT_IO_SCHEMA = 3

REMEDIATION_HINTS: dict[int, str] = {
    1: "image is out of focus",
    2: "look straight at the camera",
    3: "remove ink or pen marks from the photo",
    4: "correct the white balance; skin tone looks unnatural",
    5: "improve the overall lighting of the scene",
    6: "increase the image contrast",
    7: "use a higher-resolution capture; blocky artifacts found",
    8: "pull hair away from the face",
    9: "keep both eyes open",
    10: "use a plain, uniform background",
    11: "hold the head straight and level",
    12: "reduce glare or direct light on the skin",
    13: "disable the flash to avoid red eyes",
    14: "remove shadows from the background",
    15: "light the face evenly to remove shadows",
    16: "remove sunglasses or heavily tinted lenses",
    17: "tilt glasses to avoid lens reflections",
    18: "use glasses with thinner frames",
    19: "adjust glasses so frames do not cross the eyes",
    20: "remove any hat or head covering",
    21: "remove any veil or face covering",
    22: "keep the mouth closed",
    23: "only one person may appear in the photo",
    24: "reduce sensor noise; use better lighting or a lower ISO",
    25: "keep a neutral expression",
}


def default_thresholds_path() -> Path:
    return Path(str(resources.files("facequal").joinpath("data/default_thresholds.json")))


def _load_thresholds(path: str | None) -> ThresholdConfig:
    return ThresholdConfig.load(path if path else default_thresholds_path())


def _load_config(path: str | None) -> ScoringConfig:
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return ScoringConfig()
    return load_scoring_config(path)


def _round6(x: float) -> float:
    return round(float(x), 6)


def assess_report_dict(image_path: str, vector: QualityVector) -> dict:
    tests = []
    for r in vector.results:
        entry = {
            "id": r.id,
            "name": r.name,
            "raw_score": None if not r.raw.computable else _round6(r.raw.value),
            "threshold": _round6(r.threshold),
            "decision": r.decision,
        }
        if r.decision == "fail":
            entry["hint"] = REMEDIATION_HINTS[r.id]
        tests.append(entry)
    return {
        "schema_version": 1,
        "image": image_path,
        "overall_pass": vector.overall_pass,
        "tests": tests,
    }


def render_assess_text(report: dict) -> str:
    lines = [f"{'Test':>4}  {'Score':>6}  {'Thresh':>6}  Decision"]
    for t in report["tests"]:
        score = "  n/a" if t["raw_score"] is None else f"{t['raw_score']:.3f}"
        line = f"{t['id']:>4}  {score:>6}  {t['threshold']:>6.3f}  {t['decision']}"
        if "hint" in t:
            line += f"  ({t['hint']})"
        lines.append(line)
    lines.append(f"overall: {'PASS' if report['overall_pass'] else 'FAIL'}")
    return "\n".join(lines)


def cmd_assess(args) -> int:
    thresholds = _load_thresholds(args.thresholds)
    cfg = _load_config(args.config)
    img = decode_image(args.image)
    detector = None
    estimator = None
    sidecar = Path(args.landmarks) if args.landmarks else sidecar_path_for(args.image)
    if sidecar.exists():
        detector = SidecarDetector(sidecar)
        estimator = SidecarLandmarks(sidecar)
    elif args.landmarks:
        raise IOFailure(f"landmark sidecar not found: {sidecar}")
    ctx = preprocess(img, PreprocessConfig(), detector, estimator)
    vector = run_all(ctx, thresholds.as_mapping(), cfg)
    report = assess_report_dict(str(args.image), vector)
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        print(render_assess_text(report))
    return EXIT_PASS if vector.overall_pass else EXIT_FAIL


def cmd_calibrate(args) -> int:
    labels = read_labels(args.labels)
    cfg = _load_config(args.config)
    scores = score_corpus(args.corpus, labels, cfg, jobs=args.jobs)
    sets = collect_score_sets(scores, labels)
    result = calibrate_scores(sets, max_fpr=args.max_fpr)
    result.thresholds.save(args.out)

    balance = balance_report(labels)
    lines = [f"{'Test':>4}  {'AUC':>6}  {'Class':>6}  {'Thresh':>6}  {'TPR':>5}  {'FPR':>5}  Source"]
    for t in sorted(result.thresholds.tests, key=lambda t: t.test_id):
        curve = result.curves.get(t.test_id)
        if curve is None:
            auc_s, cls_s = "   n/a", "   n/a"
        else:
            auc_s = f"{curve.auc:.3f}"
            cls_s = classify_performance(curve.auc).value
        tpr_s = "  n/a" if t.tpr is None else f"{t.tpr:.2f}"
        fpr_s = "  n/a" if t.fpr is None else f"{t.fpr:.2f}"
        flag = " (unbalanced labels)" if balance.by_id(t.test_id).underrepresented else ""
        lines.append(
            f"{t.test_id:>4}  {auc_s:>6}  {cls_s:>6}  {t.threshold:>6.3f}"
            f"  {tpr_s:>5}  {fpr_s:>5}  {t.provenance}{flag}"
        )
    print("\n".join(lines))
    print(f"thresholds written to {args.out}")
    return EXIT_PASS


def cmd_evaluate(args) -> int:
    labels = read_labels(args.labels)
    thresholds = ThresholdConfig.load(args.thresholds)
    cfg = _load_config(args.config)
    scores = score_corpus(args.corpus, labels, cfg, jobs=args.jobs)
    report = evaluate(scores, labels, thresholds, corpus_name=str(args.corpus))
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    else:
        print(render_report_text(report))
    return EXIT_PASS


def _load_base_images(base_dir: str) -> list[tuple[str, object]]:
    base = Path(base_dir)
    if not base.is_dir():
        raise IOFailure(f"base directory not found: {base}")
    images = []
    for path in sorted(base.iterdir()):
        if path.suffix.lower() not in (".png", ".jpg", ".jpeg", ".bmp"):
            continue
        images.append((path.stem, decode_image(path)))
    if not images:
        raise EmptyCorpus(f"no decodable images under {base}")
    return images


def cmd_synth(args) -> int:
    plan = load_plan(args.plan)
    bases = _load_base_images(args.base)
    out = build_corpus(bases, plan, args.seed, args.out)
    print(f"corpus written to {out}")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facequal",
        description="25-test face-image compliance vector: assess, calibrate, evaluate, synthesize.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assess", help="score one image against thresholds")
    p.add_argument("image")
    p.add_argument("--thresholds", help="threshold JSON (defaults to the packaged file)")
    p.add_argument("--landmarks", help="landmark sidecar JSON for this image")
    p.add_argument("--config", help=f"scoring config JSON (or ${CONFIG_ENV_VAR})")
    p.add_argument("--json", action="store_true", help="emit machine-readable JSON")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("calibrate", help="fit per-test thresholds from a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-fpr", type=float, default=0.5, dest="max_fpr")
    p.add_argument("--seed", type=int, default=0, help="reserved for resampling extensions")
    p.add_argument("--config", help=f"scoring config JSON (or ${CONFIG_ENV_VAR})")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="report accuracy/TPR/FPR of frozen thresholds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--config", help=f"scoring config JSON (or ${CONFIG_ENV_VAR})")
    p.add_argument("--json", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="build a labeled degradation corpus")
    p.add_argument("--plan", required=True)
    p.add_argument("--base", required=True, help="directory of clean base images")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoFaceDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_FACE
    except (IOFailure, SchemaMismatch, EmptyCorpus) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_SCHEMA
    except FacequalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_SCHEMA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
