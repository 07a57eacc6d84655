import json

import numpy as np
import pytest

from facequal.calibration import ThresholdConfig
from facequal.cli import (
    CONFIG_ENV_VAR,
    EXIT_FAIL,
    EXIT_IO_SCHEMA,
    EXIT_NO_FACE,
    EXIT_PASS,
    main,
)
from facequal.imagery import ImageBuffer
from facequal.imgio import encode_png
from facequal.synthesis import DegradationSpec, apply, make_face


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Base images, a degradation plan, and single-image samples."""
    root = tmp_path_factory.mktemp("cli")
    base_dir = root / "base"
    base_dir.mkdir()
    faces = [make_face(s) for s in range(2)]
    for i, img in enumerate(faces):
        encode_png(img, base_dir / f"face{i:02d}.png")

    plan = [
        {"kind": "gaussian_blur", "severities": [0, 3], "count": 2},
        {"kind": "white_noise", "severities": [0, 40], "count": 2},
    ]
    (root / "plan.json").write_text(json.dumps(plan))

    encode_png(faces[0], root / "clean.png")
    blurred = apply(faces[0], DegradationSpec("gaussian_blur", 4.0))
    encode_png(blurred.image, root / "blurred.png")
    encode_png(ImageBuffer(np.full((120, 120, 3), 200, dtype=np.uint8)), root / "wall.png")
    (root / "not_an_image.png").write_text("plain text")
    return root


@pytest.fixture(scope="module")
def built_corpus(workdir):
    out = workdir / "corpus"
    rc = main(
        [
            "synth",
            "--plan", str(workdir / "plan.json"),
            "--base", str(workdir / "base"),
            "--out", str(out),
        ]
    )
    assert rc == EXIT_PASS
    return out


@pytest.fixture(scope="module")
def calibrated(workdir, built_corpus):
    out = workdir / "thresholds.json"
    rc = main(
        [
            "calibrate",
            "--corpus", str(built_corpus),
            "--labels", str(built_corpus / "labels.csv"),
            "--out", str(out),
        ]
    )
    assert rc == EXIT_PASS
    return out


class TestAssess:
    def test_clean_face_passes(self, workdir, capsys):
        rc = main(["assess", str(workdir / "clean.png")])
        out = capsys.readouterr().out
        assert rc == EXIT_PASS
        assert "overall: PASS" in out

    def test_blurred_face_fails_with_hint(self, workdir, capsys):
        rc = main(["assess", str(workdir / "blurred.png"), "--json"])
        report = json.loads(capsys.readouterr().out)
        assert rc == EXIT_FAIL
        t1 = report["tests"][0]
        assert t1["id"] == 1
        assert t1["decision"] == "fail"
        assert t1["hint"] == "image is out of focus"
        assert report["overall_pass"] is False

    def test_json_schema(self, workdir, capsys):
        main(["assess", str(workdir / "clean.png"), "--json"])
        report = json.loads(capsys.readouterr().out)
        assert report["schema_version"] == 1
        assert len(report["tests"]) == 25
        for t in report["tests"]:
            assert set(t) >= {"id", "name", "raw_score", "threshold", "decision"}

    def test_byte_identical_across_runs(self, workdir, capsys):
        main(["assess", str(workdir / "clean.png"), "--json"])
        first = capsys.readouterr().out
        main(["assess", str(workdir / "clean.png"), "--json"])
        second = capsys.readouterr().out
        assert first == second

    def test_no_face_detected(self, workdir, capsys):
        rc = main(["assess", str(workdir / "wall.png")])
        assert rc == EXIT_NO_FACE

    def test_undecodable_image(self, workdir):
        assert main(["assess", str(workdir / "not_an_image.png")]) == EXIT_IO_SCHEMA

    def test_missing_image(self, workdir):
        assert main(["assess", str(workdir / "absent.png")]) == EXIT_IO_SCHEMA

    def test_missing_landmark_sidecar(self, workdir):
        rc = main(
            [
                "assess", str(workdir / "clean.png"),
                "--landmarks", str(workdir / "absent.landmarks.json"),
            ]
        )
        assert rc == EXIT_IO_SCHEMA

    def test_config_env_var_with_bad_file(self, workdir, monkeypatch, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"no_such_knob": 1}')
        monkeypatch.setenv(CONFIG_ENV_VAR, str(cfg))
        assert main(["assess", str(workdir / "clean.png")]) == EXIT_IO_SCHEMA

    def test_config_env_var_honored(self, workdir, monkeypatch, capsys):
        cfg = workdir / "strict_blur.json"
        # absurd reference makes every image "blurry"
        cfg.write_text('{"blur_variance_ref": 1e9}')
        monkeypatch.setenv(CONFIG_ENV_VAR, str(cfg))
        rc = main(["assess", str(workdir / "clean.png"), "--json"])
        report = json.loads(capsys.readouterr().out)
        assert rc == EXIT_FAIL
        assert report["tests"][0]["decision"] == "fail"


class TestSynth:
    def test_corpus_layout(self, built_corpus):
        assert (built_corpus / "labels.csv").exists()
        names = sorted(p.name for p in (built_corpus / "images").glob("*.png"))
        # 2 clean + 2 blurred + 2 noisy
        assert len(names) == 6

    def test_empty_base_dir(self, workdir, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        rc = main(
            [
                "synth",
                "--plan", str(workdir / "plan.json"),
                "--base", str(empty),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert rc == EXIT_IO_SCHEMA

    def test_missing_plan(self, workdir, tmp_path):
        rc = main(
            [
                "synth",
                "--plan", str(workdir / "absent.json"),
                "--base", str(workdir / "base"),
                "--out", str(tmp_path / "out"),
            ]
        )
        assert rc == EXIT_IO_SCHEMA


class TestCalibrate:
    def test_output_file_valid(self, calibrated):
        cfg = ThresholdConfig.load(calibrated)
        assert cfg.by_id(1).provenance == "calibrated"
        assert cfg.by_id(24).provenance == "calibrated"
        # tests the plan never touched fall back to the default
        assert cfg.by_id(2).provenance == "default"

    def test_table_printed(self, workdir, built_corpus, capsys, tmp_path):
        rc = main(
            [
                "calibrate",
                "--corpus", str(built_corpus),
                "--labels", str(built_corpus / "labels.csv"),
                "--out", str(tmp_path / "t.json"),
            ]
        )
        out = capsys.readouterr().out
        assert rc == EXIT_PASS
        assert "AUC" in out and "Thresh" in out

    def test_max_fpr_respected(self, workdir, built_corpus, tmp_path, capsys):
        out = tmp_path / "strict.json"
        rc = main(
            [
                "calibrate",
                "--corpus", str(built_corpus),
                "--labels", str(built_corpus / "labels.csv"),
                "--out", str(out),
                "--max-fpr", "0.1",
            ]
        )
        assert rc == EXIT_PASS
        cfg = ThresholdConfig.load(out)
        for t in cfg.tests:
            if t.provenance == "calibrated":
                assert t.fpr < 0.1

    def test_missing_labels(self, built_corpus, tmp_path):
        rc = main(
            [
                "calibrate",
                "--corpus", str(built_corpus),
                "--labels", str(built_corpus / "nope.csv"),
                "--out", str(tmp_path / "t.json"),
            ]
        )
        assert rc == EXIT_IO_SCHEMA


class TestEvaluate:
    def test_json_report(self, built_corpus, calibrated, capsys):
        rc = main(
            [
                "evaluate",
                "--corpus", str(built_corpus),
                "--labels", str(built_corpus / "labels.csv"),
                "--thresholds", str(calibrated),
                "--json",
            ]
        )
        report = json.loads(capsys.readouterr().out)
        assert rc == EXIT_PASS
        assert len(report["tests"]) == 25
        t1 = report["tests"][0]
        # calibrated on its own corpus: perfect separation
        assert t1["tpr"] == 1.0
        assert t1["fpr"] == 0.0

    def test_text_report(self, built_corpus, calibrated, capsys):
        rc = main(
            [
                "evaluate",
                "--corpus", str(built_corpus),
                "--labels", str(built_corpus / "labels.csv"),
                "--thresholds", str(calibrated),
            ]
        )
        out = capsys.readouterr().out
        assert rc == EXIT_PASS
        assert out.splitlines()[0].lstrip().startswith("Test")

    def test_bad_thresholds_file(self, built_corpus, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"version": 1, "tests": [{"id": 99, "threshold": 0.5, "provenance": "default"}]}')
        rc = main(
            [
                "evaluate",
                "--corpus", str(built_corpus),
                "--labels", str(built_corpus / "labels.csv"),
                "--thresholds", str(bad),
            ]
        )
        assert rc == EXIT_IO_SCHEMA
