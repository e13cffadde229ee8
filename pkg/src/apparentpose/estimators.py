"""scikit-learn compatible wrappers around the pose encoding and relabeling.

Row layouts
-----------
pose rows (``POSE_COLUMNS``)
    ``qw, qx, qy, qz, tx, ty, tz`` followed by the box ``x_min, y_min, x_max, y_max``.
target rows (``TARGET_COLUMNS``)
    ``ux, uy, uz, r11, r21, r31, r12, r22, r32`` followed by the same box.

The box travels with every row because decoding must use the box the targets
were encoded against.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .augmentation import relabel_bbox, relabel_pose
from .dataset_io import normalize_quaternion
from .geometry import CameraModel, Pose, quat_to_rotmat, rotmat_to_quat
from .targets import BBox, TargetVector, decode_pose, encode_pose

BOX_COLUMNS = ["x_min", "y_min", "x_max", "y_max"]
POSE_COLUMNS = ["qw", "qx", "qy", "qz", "tx", "ty", "tz"] + BOX_COLUMNS
TARGET_COLUMNS = ["ux", "uy", "uz", "r11", "r21", "r31", "r12", "r22", "r32"] + BOX_COLUMNS


def check_pose_rows(X) -> np.ndarray:
    """Validate an ``(n, 11)`` pose+box array and return it as float64."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if X.shape[1] != len(POSE_COLUMNS):
        raise ValueError(f"expected {len(POSE_COLUMNS)} columns {POSE_COLUMNS}, got {X.shape[1]}")
    return X


def check_target_rows(Y) -> np.ndarray:
    Y = check_array(Y, dtype=np.float64, ensure_all_finite=True)
    if Y.shape[1] != len(TARGET_COLUMNS):
        raise ValueError(f"expected {len(TARGET_COLUMNS)} columns {TARGET_COLUMNS}, got {Y.shape[1]}")
    return Y


def _camera(est) -> CameraModel:
    return CameraModel(est.fx, est.fy, est.cx, est.cy, est.width, est.height, est.alpha)


def _pose_row(row) -> tuple[Pose, BBox]:
    q = normalize_quaternion(row[:4])
    return Pose(quat_to_rotmat(q), row[4:7]), BBox(*row[7:11])


def _pose_to_row(pose: Pose, box: BBox) -> np.ndarray:
    return np.concatenate([rotmat_to_quat(pose.rotation), pose.translation, box.as_list()])


class _CameraParams(BaseEstimator):
    def __init__(self, fx=3003.41296928, fy=3003.41296928, cx=960.0, cy=600.0, width=1920.0, height=1200.0, alpha=1.6):
        self.fx = fx
        self.fy = fy
        self.cx = cx
        self.cy = cy
        self.width = width
        self.height = height
        self.alpha = alpha

    @classmethod
    def from_camera(cls, cam: CameraModel, **kwargs):
        return cls(**cam.to_dict(), **kwargs)

    def fit(self, X=None, y=None):
        self.camera_ = _camera(self)
        if X is not None:
            self.n_features_in_ = np.asarray(X).shape[1]
        return self


class CropPoseEncoder(TransformerMixin, _CameraParams):
    """Encode full-frame poses into crop-normalized regression targets.

    ``fit`` only validates the camera parameters. ``transform`` maps pose
    rows to target rows and ``inverse_transform`` decodes them back.

    Examples
    --------
    >>> enc = CropPoseEncoder().fit()
    >>> row = [[1, 0, 0, 0, 0.0, 0.0, 10.0, 910, 550, 1010, 650]]
    >>> enc.transform(row)[0, :3].round(6).tolist()
    [0.0, 0.0, 0.833333]
    """

    def transform(self, X):
        check_is_fitted(self, "camera_")
        X = check_pose_rows(X)
        out = np.empty((X.shape[0], len(TARGET_COLUMNS)))
        for i, row in enumerate(X):
            pose, box = _pose_row(row)
            out[i, :9] = encode_pose(pose, self.camera_, box).to_array()
            out[i, 9:] = row[7:]
        return out

    def inverse_transform(self, Y):
        check_is_fitted(self, "camera_")
        Y = check_target_rows(Y)
        out = np.empty((Y.shape[0], len(POSE_COLUMNS)))
        for i, row in enumerate(Y):
            box = BBox(*row[9:])
            out[i] = _pose_to_row(decode_pose(TargetVector.from_array(row[:9]), self.camera_, box), box)
        return out

    def get_feature_names_out(self, input_features=None):
        return np.asarray(TARGET_COLUMNS, dtype=object)


class InPlaneRotationRelabeler(TransformerMixin, _CameraParams):
    """Relabel pose rows for an image rotated by ``theta_deg`` about its center.

    Poses are rotated by ``R_z(theta)``; boxes are replaced by the clipped
    hull of their rotated corners.
    """

    def __init__(self, theta_deg=0.0, fx=3003.41296928, fy=3003.41296928, cx=960.0, cy=600.0, width=1920.0, height=1200.0, alpha=1.6):
        super().__init__(fx, fy, cx, cy, width, height, alpha)
        self.theta_deg = theta_deg

    def transform(self, X):
        check_is_fitted(self, "camera_")
        X = check_pose_rows(X)
        theta = math.radians(self.theta_deg)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            pose, box = _pose_row(row)
            out[i] = _pose_to_row(relabel_pose(pose, theta), relabel_bbox(box, theta, self.camera_))
        return out

    def get_feature_names_out(self, input_features=None):
        return np.asarray(POSE_COLUMNS, dtype=object)
