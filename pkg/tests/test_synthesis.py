import numpy as np
import pytest

from facequal.evaluation import read_labels
from facequal.errors import SchemaMismatch
from facequal.facemodel import sidecar_path_for
from facequal.synthesis import (
    DEFAULT_SEVERITIES,
    DEGRADATION_KINDS,
    DegradationSpec,
    KIND_EFFECTS,
    PlanItem,
    apply,
    build_corpus,
    default_plan,
    load_plan,
    make_face,
)


class TestSpec:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            DegradationSpec("vignette", 1.0)

    def test_negative_severity(self):
        with pytest.raises(ValueError):
            DegradationSpec("gaussian_blur", -1.0)

    def test_bad_region(self):
        with pytest.raises(ValueError):
            DegradationSpec("occlusion_patch", 1.0, region="cheek")

    def test_affected_tests_region_switch(self):
        assert DegradationSpec("occlusion_patch", 1.0).affected_tests() == (20,)
        assert DegradationSpec("occlusion_patch", 1.0, region="lower_face").affected_tests() == (21,)
        assert DegradationSpec("frame_lines", 3.0).affected_tests() == (18, 19)

    def test_implied_labels_three_zones(self):
        defect = KIND_EFFECTS["gaussian_blur"][1]
        clean = DegradationSpec("gaussian_blur", 0).implied_labels()
        mild = DegradationSpec("gaussian_blur", defect / 2).implied_labels()
        bad = DegradationSpec("gaussian_blur", defect).implied_labels()
        assert clean[1] == 1
        assert mild[1] is None
        assert bad[1] == 0
        # unaffected tests stay NA everywhere
        for labels in (clean, mild, bad):
            assert all(labels[tid] is None for tid in range(2, 26))

    def test_every_kind_has_effects_and_ladder(self):
        assert set(KIND_EFFECTS) == set(DEGRADATION_KINDS)
        assert set(DEFAULT_SEVERITIES) == set(DEGRADATION_KINDS)
        for kind, ladder in DEFAULT_SEVERITIES.items():
            assert ladder[0] == 0
            assert list(ladder) == sorted(ladder)
            assert max(ladder) >= KIND_EFFECTS[kind][1]


class TestMakeFace:
    def test_deterministic_per_seed(self):
        a = make_face(3)
        b = make_face(3)
        assert np.array_equal(a.pixels, b.pixels)

    def test_seeds_differ(self):
        assert not np.array_equal(make_face(0).pixels, make_face(1).pixels)

    def test_shape(self):
        img = make_face(0, width=200, height=240)
        assert img.pixels.shape == (240, 200, 3)


class TestApply:
    def test_severity_zero_is_bit_identical(self, clean_face):
        sample = apply(clean_face, DegradationSpec("gaussian_blur", 0))
        assert sample.image is clean_face

    def test_deterministic_for_seed(self, clean_face, clean_ctx):
        a = apply(clean_face, DegradationSpec("white_noise", 20.0, seed=5), clean_ctx)
        b = apply(clean_face, DegradationSpec("white_noise", 20.0, seed=5), clean_ctx)
        assert np.array_equal(a.image.pixels, b.image.pixels)

    def test_noise_seeds_differ(self, clean_face, clean_ctx):
        a = apply(clean_face, DegradationSpec("white_noise", 20.0, seed=1), clean_ctx)
        b = apply(clean_face, DegradationSpec("white_noise", 20.0, seed=2), clean_ctx)
        assert not np.array_equal(a.image.pixels, b.image.pixels)

    def test_blur_reduces_gradient_energy(self, clean_face, clean_ctx):
        blurred = apply(clean_face, DegradationSpec("gaussian_blur", 3.0), clean_ctx)
        def energy(img):
            g = np.diff(img.pixels.astype(float), axis=0)
            return float((g * g).mean())
        assert energy(blurred.image) < 0.5 * energy(clean_face)

    def test_pixelate_makes_constant_blocks(self, clean_face, clean_ctx):
        block = 8
        sample = apply(clean_face, DegradationSpec("pixelate", block), clean_ctx)
        px = sample.image.pixels
        tile = px[0:block, 0:block, 0]
        assert np.ptp(tile) <= 1  # rounding only

    def test_background_shadow_leaves_face_center_untouched(self, clean_face, clean_ctx):
        sample = apply(clean_face, DegradationSpec("background_shadow", 0.45), clean_ctx)
        b = clean_ctx.source_box
        cx, cy = b.x + b.w // 2, b.y + b.h // 2
        assert np.array_equal(
            sample.image.pixels[cy - 5 : cy + 5, cx - 5 : cx + 5],
            clean_face.pixels[cy - 5 : cy + 5, cx - 5 : cx + 5],
        )
        # left edge of the crop window darkened
        x0, y0, w, h = clean_ctx.crop_rect
        assert sample.image.pixels[y0 + 2, x0 + 2].sum() < clean_face.pixels[y0 + 2, x0 + 2].sum()

    def test_clutter_leaves_face_center_untouched(self, clean_face, clean_ctx):
        sample = apply(clean_face, DegradationSpec("background_clutter", 1.0), clean_ctx)
        b = clean_ctx.source_box
        cx, cy = b.x + b.w // 2, b.y + b.h // 2
        assert np.array_equal(
            sample.image.pixels[cy - 5 : cy + 5, cx - 5 : cx + 5],
            clean_face.pixels[cy - 5 : cy + 5, cx - 5 : cx + 5],
        )
        assert not np.array_equal(sample.image.pixels, clean_face.pixels)

    def test_face_shadow_leaves_background_corner_untouched(self, clean_face, clean_ctx):
        sample = apply(clean_face, DegradationSpec("face_shadow", 0.45), clean_ctx)
        assert np.array_equal(sample.image.pixels[:8, :8], clean_face.pixels[:8, :8])

    def test_specular_blob_saturates_pixels(self, clean_face, clean_ctx):
        sample = apply(clean_face, DegradationSpec("specular_blob", 0.15), clean_ctx)
        sat = (sample.image.pixels == 255).all(axis=2)
        assert sat.sum() > 50

    def test_red_eye_discs_trip_red_dominance(self, clean_face, clean_ctx):
        sample = apply(clean_face, DegradationSpec("red_eye", 1.0), clean_ctx)
        px = sample.image.pixels.astype(int)
        red = px[:, :, 0] - np.maximum(px[:, :, 1], px[:, :, 2])
        assert (red > 50).sum() > 10

    def test_occlusion_patch_paints_spec_color(self, clean_face, clean_ctx):
        spec = DegradationSpec("occlusion_patch", 1.0, color=(10, 250, 10))
        sample = apply(clean_face, spec, clean_ctx)
        hits = (sample.image.pixels == np.array([10, 250, 10])).all(axis=2)
        assert hits.sum() > 100


class TestPlan:
    def test_default_plan_skips_brighten(self):
        kinds = [item.kind for item in default_plan()]
        assert "brighten" not in kinds
        assert "gaussian_blur" in kinds

    def test_load_plan_round_trip(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text('[{"kind": "gaussian_blur", "severities": [0, 3], "count": 2}]')
        items = load_plan(path)
        assert items == [PlanItem("gaussian_blur", (0.0, 3.0), 2)]

    def test_load_plan_unknown_kind(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text('[{"kind": "posterize", "severities": [0], "count": 1}]')
        with pytest.raises(SchemaMismatch):
            load_plan(path)

    def test_load_plan_not_a_list(self, tmp_path):
        path = tmp_path / "plan.json"
        path.write_text('{"kind": "gaussian_blur"}')
        with pytest.raises(SchemaMismatch):
            load_plan(path)


class TestBuildCorpus:
    def test_layout_counts_and_labels(self, tmp_path, base_faces):
        bases = base_faces[:2]
        plan = [
            PlanItem("gaussian_blur", (0, 3.0), 2),
            PlanItem("red_eye", (0, 1.0), 1),
        ]
        out = build_corpus(bases, plan, seed=0, out_dir=tmp_path / "corpus")
        images = sorted(p.name for p in (out / "images").glob("*.png"))
        # 2 clean + blur sev3 on both bases + red_eye sev1 on the first
        assert images == [
            "face00_clean.png",
            "face00_gaussian_blur_s3.png",
            "face00_red_eye_s1.png",
            "face01_clean.png",
            "face01_gaussian_blur_s3.png",
        ]
        labels = read_labels(out / "labels.csv")
        assert set(labels) == {f"images/{n}" for n in images}
        clean = labels["images/face00_clean.png"]
        assert clean[1] == 1 and clean[13] == 1
        assert all(clean[tid] is None for tid in range(1, 26) if tid not in (1, 13))
        blurred = labels["images/face00_gaussian_blur_s3.png"]
        assert blurred[1] == 0
        assert all(blurred[tid] is None for tid in range(2, 26))
        # every image carries a landmark sidecar
        for name in images:
            assert sidecar_path_for(out / "images" / name).exists()

    def test_fractional_severity_tag(self, tmp_path, base_faces):
        out = build_corpus(
            base_faces[:1],
            [PlanItem("face_shadow", (0, 0.45), 1)],
            seed=0,
            out_dir=tmp_path / "corpus",
        )
        assert (out / "images" / "face00_face_shadow_s0p45.png").exists()
