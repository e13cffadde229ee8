"""Crop-normalized regression targets and their inversion to metric pose.

A pose network sees only the detector crop. It regresses

* ``U_x, U_y``: offset of the projected object center from the box center,
  in units of box width / height;
* ``U_z``: the depth divided by the crop's effective zoom (meters);
* the first two columns of the *apparent* rotation, i.e. the orientation a
  centered object would need to look like the off-axis one.

:func:`decode_pose` undoes all of this given the same box and camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateBox, NonPositiveDepth
from .geometry import CameraModel, Pose, from_apparent, gram_schmidt, to_apparent

MIN_BOX_EXTENT = 1.0  # pixels


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel rectangle ``(x_min, y_min, x_max, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise DegenerateBox(f"box has non-finite coordinates: {vals}")
        if not (self.width > MIN_BOX_EXTENT and self.height > MIN_BOX_EXTENT):
            raise DegenerateBox(
                f"box {vals} has extent {self.width:.3g}x{self.height:.3g}, "
                f"minimum is {MIN_BOX_EXTENT:g} px"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)

    @classmethod
    def from_center(cls, bx: float, by: float, w: float, h: float) -> "BBox":
        return cls(bx - 0.5 * w, by - 0.5 * h, bx + 0.5 * w, by + 0.5 * h)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class CropScales:
    sx: float
    sy: float


@dataclass(frozen=True, eq=False)
class TargetVector:
    """Network-output-space pose: ``(U_x, U_y, U_z)`` plus two raw rotation columns."""

    ux: float
    uy: float
    uz: float
    r1: np.ndarray
    r2: np.ndarray

    def __post_init__(self):
        for name in ("r1", "r2"):
            v = np.array(getattr(self, name), dtype=float).reshape(3)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        for name in ("ux", "uy", "uz"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def u(self) -> np.ndarray:
        return np.array([self.ux, self.uy, self.uz])

    @property
    def six(self) -> np.ndarray:
        """Six rotation values ordered ``r11, r21, r31, r12, r22, r32``."""
        return np.concatenate([self.r1, self.r2])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.u, self.six])

    @classmethod
    def from_array(cls, a) -> "TargetVector":
        a = np.asarray(a, dtype=float).reshape(9)
        return cls(a[0], a[1], a[2], a[3:6], a[6:9])


def crop_scales(cam: CameraModel, box: BBox) -> CropScales:
    """Zoom factors ``W / (alpha w)`` and ``H / h`` of a crop."""
    return CropScales(cam.width / (cam.alpha * box.width), cam.height / box.height)


def _mean_inverse_zoom(s: CropScales) -> float:
    return 0.5 * (1.0 / s.sx + 1.0 / s.sy)


def encode_depth(Z: float, s: CropScales) -> float:
    # least-squares fit of U_z ~ Z/s_x and U_z ~ Z/s_y
    if not Z > 0:
        raise NonPositiveDepth(f"depth must be > 0, got {Z!r}")
    return _mean_inverse_zoom(s) * Z


def decode_depth(uz: float, s: CropScales) -> float:
    if not uz > 0:
        raise NonPositiveDepth(f"crop-depth proxy must be > 0, got {uz!r}")
    return uz / _mean_inverse_zoom(s)


def encode_lateral(T, cam: CameraModel, box: BBox) -> tuple[float, float]:
    X, Y, Z = np.asarray(T, dtype=float).reshape(3)
    if not Z > 0:
        raise BehindCamera(f"object must be in front of the camera, got z={Z!r}")
    bx, by = box.center
    ux = (cam.fx * X / Z + cam.cx - bx) / box.width
    uy = (cam.fy * Y / Z + cam.cy - by) / box.height
    return ux, uy


def decode_lateral(ux: float, uy: float, Z: float, cam: CameraModel, box: BBox) -> tuple[float, float]:
    if not Z > 0:
        raise NonPositiveDepth(f"depth must be > 0, got {Z!r}")
    bx, by = box.center
    X = (bx + ux * box.width - cam.cx) * Z / cam.fx
    Y = (by + uy * box.height - cam.cy) * Z / cam.fy
    return X, Y


def encode_pose(pose: Pose, cam: CameraModel, box: BBox) -> TargetVector:
    T = pose.translation
    ux, uy = encode_lateral(T, cam, box)
    uz = encode_depth(T[2], crop_scales(cam, box))
    R_app = to_apparent(pose.rotation, T)
    return TargetVector(ux, uy, uz, R_app[:, 0], R_app[:, 1])


def decode_pose(target: TargetVector, cam: CameraModel, box: BBox) -> Pose:
    """Full-frame pose from crop-space targets.

    Translation is decoded first; the apparent-rotation correction is then
    built from the decoded translation and inverted.
    """
    Z = decode_depth(target.uz, crop_scales(cam, box))
    X, Y = decode_lateral(target.ux, target.uy, Z, cam, box)
    T = np.array([X, Y, Z])
    R_app = gram_schmidt(target.r1, target.r2)
    return Pose(from_apparent(R_app, T), T)
