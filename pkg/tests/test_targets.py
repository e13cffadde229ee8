import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apparentpose.errors import BehindCamera, DegenerateBox, DegenerateInput, NonPositiveDepth
from apparentpose.geometry import CameraModel, Pose, project, random_rotation, rot_z
from apparentpose.metrics import PosePair, rotation_error, translation_error
from apparentpose.targets import (
    BBox,
    CropScales,
    TargetVector,
    crop_scales,
    decode_depth,
    decode_lateral,
    decode_pose,
    encode_depth,
    encode_lateral,
    encode_pose,
)

CAM = CameraModel(fx=1000, fy=1000, cx=960, cy=600, width=1920, height=1200)


def random_case(rng):
    f = rng.uniform(300, 5000)
    cam = CameraModel(
        fx=f,
        fy=f * rng.uniform(0.9, 1.1),
        cx=rng.uniform(800, 1100),
        cy=rng.uniform(500, 700),
        width=1920,
        height=1200,
        alpha=rng.uniform(1.0, 2.0),
    )
    Z = rng.uniform(1, 100)
    T = np.array([rng.uniform(-0.5, 0.5) * Z, rng.uniform(-0.3, 0.3) * Z, Z])
    w, h = rng.uniform(5, 1500, size=2)
    box = BBox.from_center(rng.uniform(0, 1920), rng.uniform(0, 1200), w, h)
    return Pose(random_rotation(rng), T), cam, box


class TestBBox:
    def test_derived_fields(self):
        b = BBox(10, 20, 110, 70)
        assert (b.width, b.height, b.center) == (100, 50, (60, 45))

    @pytest.mark.parametrize("coords", [(10, 0, 10, 5), (10, 0, 5, 5), (0, 0, 1.0, 5), (0, 0, 5, 0.5), (0, 0, math.nan, 5)])
    def test_degenerate(self, coords):
        with pytest.raises(DegenerateBox):
            BBox(*coords)


class TestCropScales:
    def test_square_crop(self):
        s = crop_scales(CameraModel(1, 1, 0, 0, 1920, 1200, 1.6), BBox(0, 0, 300, 300))
        assert (s.sx, s.sy) == pytest.approx((4.0, 4.0), abs=1e-15)

    def test_full_height_crop(self):
        s = crop_scales(CameraModel(1, 1, 0, 0, 1920, 1200, 1.6), BBox(0, 0, 1200, 1200))
        assert (s.sx, s.sy) == pytest.approx((1.0, 1.0), abs=1e-15)

    def test_no_zoom(self):
        s = crop_scales(CameraModel(1, 1, 0, 0, 640, 640, 1.0), BBox(0, 0, 640, 640))
        assert (s.sx, s.sy) == (1.0, 1.0)


class TestDepth:
    def test_encode(self):
        assert encode_depth(10, CropScales(4, 4)) == pytest.approx(2.5, abs=1e-15)
        assert encode_depth(7.25, CropScales(1, 1)) == 7.25
        assert encode_depth(6, CropScales(2, 3)) == pytest.approx(2.5, abs=1e-15)

    def test_decode(self):
        assert decode_depth(2.5, CropScales(4, 4)) == pytest.approx(10, abs=1e-14)
        assert decode_depth(7.25, CropScales(1, 1)) == 7.25

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_non_positive(self, bad):
        with pytest.raises(NonPositiveDepth):
            encode_depth(bad, CropScales(1, 1))
        with pytest.raises(NonPositiveDepth):
            decode_depth(bad, CropScales(1, 1))

    @given(st.floats(1e-3, 1e4), st.floats(0.05, 50), st.floats(0.05, 50))
    def test_round_trip(self, Z, sx, sy):
        s = CropScales(sx, sy)
        assert decode_depth(encode_depth(Z, s), s) == pytest.approx(Z, rel=1e-12)

    @given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(0.05, 50), st.floats(0.05, 50))
    def test_linear(self, a, b, sx, sy):
        s = CropScales(sx, sy)
        assert encode_depth(a + b, s) == pytest.approx(encode_depth(a, s) + encode_depth(b, s), rel=1e-12)
        assert decode_depth(a + b, s) == pytest.approx(decode_depth(a, s) + decode_depth(b, s), rel=1e-12)


class TestLateral:
    def test_centered_projection(self):
        box = BBox.from_center(*project(CAM, [2, -1, 8]), 120, 80)
        assert encode_lateral([2, -1, 8], CAM, box) == pytest.approx((0, 0), abs=1e-12)

    def test_box_on_projection(self):
        box = BBox.from_center(1060, 600, 200, 200)
        assert encode_lateral([1, 0, 10], CAM, box) == pytest.approx((0, 0), abs=1e-12)

    def test_box_at_principal_point(self):
        box = BBox.from_center(960, 600, 200, 200)
        assert encode_lateral([1, 0, 10], CAM, box) == pytest.approx((0.5, 0), abs=1e-12)
        assert decode_lateral(0.5, 0, 10, CAM, box) == pytest.approx((1, 0), abs=1e-12)

    def test_decode_centered(self):
        box = BBox.from_center(CAM.cx, CAM.cy, 50, 50)
        assert decode_lateral(0, 0, 12, CAM, box) == (0, 0)

    def test_errors(self):
        box = BBox(0, 0, 10, 10)
        with pytest.raises(BehindCamera):
            encode_lateral([0, 0, -1], CAM, box)
        with pytest.raises(NonPositiveDepth):
            decode_lateral(0, 0, 0, CAM, box)

    def test_offset_scale_invariance(self):
        # fixed pixel offset: U_x * w is independent of the box size
        T = [1.3, -0.7, 9]
        prods = []
        for w in (40, 100, 900):
            box = BBox.from_center(1000, 520, w, w / 2)
            ux, uy = encode_lateral(T, CAM, box)
            prods.append((ux * w, uy * w / 2))
        np.testing.assert_allclose(prods, [prods[0]] * 3, atol=1e-9)

    def test_round_trip_and_reprojection(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            pose, cam, box = random_case(rng)
            T = pose.translation
            ux, uy = encode_lateral(T, cam, box)
            X, Y = decode_lateral(ux, uy, T[2], cam, box)
            np.testing.assert_allclose([X, Y], T[:2], atol=1e-9)
            bx, by = box.center
            x, y = project(cam, [X, Y, T[2]])
            np.testing.assert_allclose([x, y], [bx + ux * box.width, by + uy * box.height], atol=1e-9)


class TestPoseTargets:
    def test_identity_centered(self):
        box = BBox.from_center(CAM.cx, CAM.cy, 300, 300)
        t = encode_pose(Pose(np.eye(3), [0, 0, 20]), CAM, box)
        s = crop_scales(CAM, box)
        assert (t.ux, t.uy) == (0, 0)
        assert t.uz == pytest.approx(20 * 0.5 * (1 / s.sx + 1 / s.sy), rel=1e-15)
        np.testing.assert_array_equal(t.r1, [1, 0, 0])
        np.testing.assert_array_equal(t.r2, [0, 1, 0])

    def test_centered_object_keeps_true_rotation(self):
        box = BBox(900, 500, 1000, 700)
        t = encode_pose(Pose(rot_z(math.pi / 2), [0, 0, 10]), CAM, box)
        np.testing.assert_allclose(t.r1, [0, 1, 0], atol=1e-15)
        np.testing.assert_allclose(t.r2, [-1, 0, 0], atol=1e-15)

    def test_decode_identity(self):
        box = BBox.from_center(CAM.cx, CAM.cy, 200, 160)
        pose = decode_pose(TargetVector(0, 0, 3.0, [1, 0, 0], [0, 1, 0]), CAM, box)
        np.testing.assert_array_equal(pose.rotation, np.eye(3))
        np.testing.assert_allclose(pose.translation, [0, 0, decode_depth(3.0, crop_scales(CAM, box))], atol=0)

    def test_decode_errors(self):
        box = BBox(0, 0, 100, 100)
        with pytest.raises(NonPositiveDepth):
            decode_pose(TargetVector(0, 0, -1, [1, 0, 0], [0, 1, 0]), CAM, box)
        with pytest.raises(DegenerateInput):
            decode_pose(TargetVector(0, 0, 1, [0, 0, 0], [0, 1, 0]), CAM, box)

    def test_target_vector_array_layout(self):
        t = TargetVector.from_array(np.arange(9.0))
        assert (t.ux, t.uy, t.uz) == (0, 1, 2)
        np.testing.assert_array_equal(t.r1, [3, 4, 5])
        np.testing.assert_array_equal(t.r2, [6, 7, 8])
        np.testing.assert_array_equal(t.to_array(), np.arange(9.0))

    def test_round_trip_random(self):
        rng = np.random.default_rng(2024)
        worst_t = worst_r = 0.0
        for _ in range(1000):
            pose, cam, box = random_case(rng)
            back = decode_pose(encode_pose(pose, cam, box), cam, box)
            pair = PosePair(back, pose)
            worst_t = max(worst_t, translation_error(pair))
            worst_r = max(worst_r, rotation_error(pair))
        assert worst_t < 1e-9
        assert worst_r < 1e-6

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.02, 0.98), st.floats(0.02, 0.98))
    def test_round_trip_any_box(self, seed, fx, fy):
        # box validity margin does not matter as long as encode and decode share it
        rng = np.random.default_rng(seed)
        pose, cam, _ = random_case(rng)
        box = BBox.from_center(fx * 1920, fy * 1200, rng.uniform(1.5, 4000), rng.uniform(1.5, 4000))
        back = decode_pose(encode_pose(pose, cam, box), cam, box)
        assert back.allclose(pose, atol=1e-9)
