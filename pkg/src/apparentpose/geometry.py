"""SO(3) primitives, pinhole projection and the apparent-rotation correction.

Conventions
-----------
- Rotations are (3, 3) float64 arrays acting on column vectors.
- Quaternions are scalar-first ``(w, x, y, z)``.
- All angles are radians.
- The camera looks down +z; image x grows right, image y grows down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateInput

GS_EPS = 1e-9
AXIS_NORM_TOL = 1e-9
# below this the off-axis angle is treated as zero; the residual |dR T - e_z|
# is bounded by the angle itself, so it must sit well under 1e-9
SMALL_ANGLE = 1e-12

E_Z = np.array([0.0, 0.0, 1.0])


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus full-image size and the crop aspect factor.

    ``alpha`` corrects the non-square full-image aspect ratio when converting
    the crop width into a zoom factor (1.6 for 1920x1200 imagery).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float
    alpha: float = 1.6

    def __post_init__(self):
        for name in ("fx", "fy", "width", "height", "alpha"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"CameraModel.{name} must be finite and > 0, got {value!r}")
        for name in ("cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"CameraModel.{name} must be finite")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def speed(cls, alpha: float = 1.6) -> "CameraModel":
        """Camera of the SPEED/SPEED+ renders (17.6 mm lens, 5.86 um pixels, 1920x1200)."""
        f = 0.0176 / 5.86e-6
        return cls(fx=f, fy=f, cx=960.0, cy=600.0, width=1920.0, height=1200.0, alpha=alpha)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "alpha": self.alpha,
        }


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid object pose in the camera frame; translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation)
        T = _frozen(self.translation).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got shape {R.shape}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(T))):
            raise ValueError("pose contains non-finite values")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @classmethod
    def from_quaternion(cls, q, t) -> "Pose":
        return cls(quat_to_rotmat(q), t)

    @property
    def quaternion(self) -> np.ndarray:
        return rotmat_to_quat(self.rotation)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def __repr__(self):
        return f"Pose(q={np.round(self.quaternion, 6).tolist()}, t={self.translation.tolist()})"


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return bool(
        R.shape == (3, 3)
        and np.allclose(R.T @ R, np.eye(3), rtol=0, atol=tol)
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == cross(a, b)``."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def gram_schmidt(r1_hat, r2_hat, eps: float = GS_EPS) -> np.ndarray:
    """Rotation matrix from two raw (unnormalized) column predictions.

    The first column is normalized, the second has its component along the
    first removed and is then normalized, the third is their cross product.

    Raises
    ------
    DegenerateInput
        If ``r1_hat`` is near zero or ``r2_hat`` is near parallel to it.
    """
    r1_hat = np.asarray(r1_hat, dtype=float).reshape(3)
    r2_hat = np.asarray(r2_hat, dtype=float).reshape(3)
    if not (np.all(np.isfinite(r1_hat)) and np.all(np.isfinite(r2_hat))):
        raise DegenerateInput("6D rotation contains non-finite values")
    n1 = np.linalg.norm(r1_hat)
    if n1 <= eps:
        raise DegenerateInput(f"first column norm {n1:.3g} below {eps:g}")
    r1 = r1_hat / n1
    resid = r2_hat - (r1 @ r2_hat) * r1
    n2 = np.linalg.norm(resid)
    if n2 <= eps:
        raise DegenerateInput(f"second column is parallel to the first (residual {n2:.3g})")
    r2 = resid / n2
    r3 = np.cross(r1, r2)
    return np.column_stack([r1, r2, r3])


def rodrigues(axis, angle: float) -> np.ndarray:
    """``I + sin(a) [u]x + (1 - cos(a)) [u]x^2`` for a unit axis ``u``."""
    u = np.asarray(axis, dtype=float).reshape(3)
    n = np.linalg.norm(u)
    if not abs(n - 1.0) <= AXIS_NORM_TOL:
        raise DegenerateInput(f"rotation axis must be unit length, got norm {n!r}")
    K = skew(u)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def _direction(T) -> np.ndarray:
    T = np.asarray(T, dtype=float).reshape(3)
    if not np.all(np.isfinite(T)):
        raise BehindCamera("translation is not finite")
    if not T[2] > 0:
        raise BehindCamera(f"object must be in front of the camera, got z={T[2]!r}")
    return T / np.linalg.norm(T)


def apparent_correction(T) -> np.ndarray:
    """Corrective rotation that brings the viewing direction of ``T`` onto +z.

    The axis is ``t x e_z`` (normalized) and the angle is the one between
    ``t = T/|T|`` and the optical axis. The angle is evaluated with ``atan2``
    of the sine and cosine, which equals ``arccos(t . e_z)`` but stays
    accurate for nearly centered objects. Objects on the optical axis map to
    the identity.
    """
    t = _direction(T)
    c = np.cross(t, E_Z)
    s = np.linalg.norm(c)
    theta = math.atan2(s, float(np.clip(t[2], -1.0, 1.0)))
    if theta < SMALL_ANGLE:
        return np.eye(3)
    return rodrigues(c / s, theta)


def to_apparent(R, T) -> np.ndarray:
    return apparent_correction(T) @ np.asarray(R, dtype=float)


def from_apparent(R_app, T) -> np.ndarray:
    return apparent_correction(T).T @ np.asarray(R_app, dtype=float)


def project(cam: CameraModel, P) -> tuple[float, float]:
    """Pixel coordinates of camera-frame point ``P``."""
    X, Y, Z = np.asarray(P, dtype=float).reshape(3)
    if not Z > 0:
        raise BehindCamera(f"cannot project a point with z={Z!r}")
    return cam.fx * X / Z + cam.cx, cam.fy * Y / Z + cam.cy


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix of a scalar-first quaternion (normalized first)."""
    q = np.asarray(q, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if not (math.isfinite(n) and n > 0):
        raise DegenerateInput("quaternion has zero or non-finite norm")
    w, x, y, z = q / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotmat_to_quat(R) -> np.ndarray:
    """Scalar-first unit quaternion with ``w >= 0`` (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    diag = (R[0, 0], R[1, 1], R[2, 2])
    k = int(np.argmax((tr,) + diag))
    if k == 0:
        s = 2.0 * math.sqrt(max(1.0 + tr, 0.0))
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(max(1.0 + R[0, 0] - R[1, 1] - R[2, 2], 0.0))
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(max(1.0 - R[0, 0] + R[1, 1] - R[2, 2], 0.0))
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(max(1.0 - R[0, 0] - R[1, 1] + R[2, 2], 0.0))
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def random_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Unit quaternion uniform on SO(3) (normalized 4D Gaussian), ``w >= 0``."""
    while True:
        q = rng.standard_normal(4)
        n = np.linalg.norm(q)
        if n > 1e-6:
            q = q / n
            return -q if q[0] < 0 else q


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return quat_to_rotmat(random_quaternion(rng))


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.standard_normal(3)
        n = np.linalg.norm(v)
        if n > 1e-6:
            return v / n
