import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from apparentpose.estimators import POSE_COLUMNS, TARGET_COLUMNS, CropPoseEncoder, InPlaneRotationRelabeler
from apparentpose.geometry import CameraModel, random_quaternion
from apparentpose.harness import SyntheticSpec, generate_synthetic
from apparentpose.targets import encode_pose


def pose_rows(n=50, seed=0):
    m = generate_synthetic(SyntheticSpec(count=n), np.random.default_rng(seed))
    rows = [np.concatenate([f.gt_pose.quaternion, f.gt_pose.translation, f.bbox.as_list()]) for f in m.frames]
    return m, np.array(rows)


def same_rotation(qa, qb):
    return np.abs(np.sum(qa * qb, axis=1))


class TestParams:
    def test_get_set_clone(self):
        enc = CropPoseEncoder(fx=1000, alpha=1.0)
        assert enc.get_params()["fx"] == 1000 and enc.get_params()["alpha"] == 1.0
        enc.set_params(cy=480.0)
        c = clone(enc)
        assert c.get_params() == enc.get_params()
        assert not hasattr(c, "camera_")

    def test_relabeler_params(self):
        r = InPlaneRotationRelabeler(theta_deg=30)
        assert r.get_params()["theta_deg"] == 30
        assert clone(r).set_params(theta_deg=10).theta_deg == 10

    def test_from_camera(self):
        cam = CameraModel(800, 810, 320, 240, 640, 480, 1.2)
        assert CropPoseEncoder.from_camera(cam).fit().camera_ == cam

    def test_invalid_camera_on_fit(self):
        with pytest.raises(ValueError):
            CropPoseEncoder(fx=-1).fit()


class TestCropPoseEncoder:
    def test_matches_functional_api(self):
        m, X = pose_rows()
        Y = CropPoseEncoder.from_camera(m.camera).fit(X).transform(X)
        assert Y.shape == (len(X), len(TARGET_COLUMNS))
        for f, y in zip(m.frames, Y):
            np.testing.assert_allclose(y[:9], encode_pose(f.gt_pose, m.camera, f.bbox).to_array(), atol=1e-12)
            np.testing.assert_array_equal(y[9:], f.bbox.as_list())

    def test_round_trip(self):
        m, X = pose_rows(seed=1)
        enc = CropPoseEncoder.from_camera(m.camera).fit(X)
        back = enc.inverse_transform(enc.transform(X))
        np.testing.assert_allclose(back[:, 4:], X[:, 4:], atol=1e-9)
        assert np.all(same_rotation(back[:, :4], X[:, :4]) > 1 - 1e-12)

    def test_feature_names(self):
        enc = CropPoseEncoder().fit()
        assert list(enc.get_feature_names_out()) == TARGET_COLUMNS

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            CropPoseEncoder().transform(np.zeros((1, 11)))

    def test_validation(self):
        enc = CropPoseEncoder().fit()
        with pytest.raises(ValueError):
            enc.transform(np.zeros((2, 7)))
        row = [1, 0, 0, 0, 0, 0, np.nan, 0, 0, 10, 10]
        with pytest.raises(ValueError):
            enc.transform([row])
        with pytest.raises(ValueError):
            enc.inverse_transform(np.zeros((1, 11)))


class TestRelabeler:
    def test_pipeline_composition(self):
        m, X = pose_rows(seed=2)
        pipe = make_pipeline(InPlaneRotationRelabeler.from_camera(m.camera, theta_deg=180), CropPoseEncoder.from_camera(m.camera))
        Y = pipe.fit(X).transform(X)
        assert Y.shape == (len(X), len(TARGET_COLUMNS))
        # a half turn keeps box sizes, so the depth target is unchanged
        Y0 = CropPoseEncoder.from_camera(m.camera).fit().transform(X)
        np.testing.assert_allclose(Y[:, 2], Y0[:, 2], rtol=1e-9)

    def test_involution(self):
        m, X = pose_rows(seed=3)
        fwd = InPlaneRotationRelabeler.from_camera(m.camera, theta_deg=180).fit()
        back = fwd.transform(fwd.transform(X))
        np.testing.assert_allclose(back[:, 4:7], X[:, 4:7], atol=1e-9)
        assert np.all(same_rotation(back[:, :4], X[:, :4]) > 1 - 1e-12)
        np.testing.assert_allclose(back[:, 7:], X[:, 7:], atol=1e-6)

    def test_zero_angle(self):
        m, X = pose_rows(seed=4)
        out = InPlaneRotationRelabeler.from_camera(m.camera).fit().transform(X)
        np.testing.assert_allclose(out[:, 4:], X[:, 4:], atol=1e-12)
        assert list(InPlaneRotationRelabeler().fit().get_feature_names_out()) == POSE_COLUMNS

    def test_renormalizes_quaternions(self):
        q = random_quaternion(np.random.default_rng(5)) * 1.0004
        row = np.concatenate([q, [0.2, 0.1, 10], [900, 500, 1000, 700]])
        out = InPlaneRotationRelabeler(theta_deg=45).fit().transform([row])
        assert np.linalg.norm(out[0, :4]) == pytest.approx(1.0, abs=1e-12)
