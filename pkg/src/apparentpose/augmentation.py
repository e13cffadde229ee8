"""Label-preserving spatial augmentations.

Rotating the full image by ``theta`` about its center is, for a camera with
equal focal lengths and a centered principal point, the same as rotating the
scene by ``R_z(theta)`` about the optical axis. Poses are relabeled with that
rotation; boxes are relabeled by rotating their corners in the image.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateBox
from .geometry import CameraModel, Pose, rot_z
from .targets import MIN_BOX_EXTENT, BBox

MAX_PERTURB_ATTEMPTS = 10


def in_plane_matrix(theta: float, width: float, height: float) -> np.ndarray:
    """Homogeneous 2D rotation of the image by ``theta`` about ``(W/2, H/2)``."""
    c, s = math.cos(theta), math.sin(theta)
    hw, hh = 0.5 * width, 0.5 * height
    return np.array(
        [
            [c, -s, hw * (1 - c) + hh * s],
            [s, c, hh * (1 - c) - hw * s],
            [0.0, 0.0, 1.0],
        ]
    )


def relabel_pose(pose: Pose, theta: float) -> Pose:
    Rz = rot_z(theta)
    return Pose(Rz @ pose.rotation, Rz @ pose.translation)


def conjugation_check(cam: CameraModel, theta: float) -> float:
    """Max abs entry of ``K^-1 M(theta) K - R_z(theta)``.

    Zero (to rounding) only when ``fx == fy`` and the principal point is the
    image center; otherwise it measures how far the pure-rotation relabeling
    is from the exact image-space transform.
    """
    K = cam.K
    M = in_plane_matrix(theta, cam.width, cam.height)
    conj = np.linalg.solve(K, M @ K)
    return float(np.max(np.abs(conj - rot_z(theta))))


def _clip_box(x0, y0, x1, y1, cam: CameraModel) -> BBox:
    x0, x1 = min(max(x0, 0.0), cam.width), min(max(x1, 0.0), cam.width)
    y0, y1 = min(max(y0, 0.0), cam.height), min(max(y1, 0.0), cam.height)
    return BBox(x0, y0, x1, y1)


def clip_box(box: BBox, cam: CameraModel) -> BBox:
    return _clip_box(box.x_min, box.y_min, box.x_max, box.y_max, cam)


def relabel_bbox(box: BBox, theta: float, cam: CameraModel) -> BBox:
    """Axis-aligned hull of the rotated box corners, clipped to the image."""
    corners = np.array(
        [
            [box.x_min, box.y_min, 1.0],
            [box.x_max, box.y_min, 1.0],
            [box.x_max, box.y_max, 1.0],
            [box.x_min, box.y_max, 1.0],
        ]
    )
    rotated = corners @ in_plane_matrix(theta, cam.width, cam.height).T
    xs, ys = rotated[:, 0], rotated[:, 1]
    return _clip_box(xs.min(), ys.min(), xs.max(), ys.max(), cam)


def perturb_bbox(box: BBox, cam: CameraModel, rng: np.random.Generator, scale: float = 0.10) -> BBox:
    """Move each side independently by up to ``scale`` of the box width/height.

    Left/right sides move by a uniform draw in ``[-scale*w, scale*w]``, top and
    bottom by one in ``[-scale*h, scale*h]``. The result is clipped to the
    image; invalid results are redrawn up to ``MAX_PERTURB_ATTEMPTS`` times.
    """
    if scale < 0:
        raise ValueError("perturbation scale must be >= 0")
    w, h = box.width, box.height
    for _ in range(MAX_PERTURB_ATTEMPTS):
        dx0, dx1 = rng.uniform(-scale * w, scale * w, size=2)
        dy0, dy1 = rng.uniform(-scale * h, scale * h, size=2)
        try:
            return _clip_box(box.x_min - dx0, box.y_min - dy0, box.x_max + dx1, box.y_max + dy1, cam)
        except DegenerateBox:
            continue
    raise DegenerateBox(
        f"no valid perturbation of {box.as_list()} after {MAX_PERTURB_ATTEMPTS} attempts "
        f"(minimum extent {MIN_BOX_EXTENT:g} px)"
    )


@dataclass(frozen=True)
class AugmentationPolicy:
    """Stochastic in-plane rotation and box perturbation policy.

    Angle ranges are stored in degrees, as they appear in config files.
    """

    apply_prob: float = 0.5
    minor_range: tuple[float, float] = (-20.0, 20.0)
    major_range: tuple[float, float] = (160.0, 200.0)
    range_choice_prob: float = 0.5
    bbox_perturb_frac: float = 0.10
    seed: int = 0

    def __post_init__(self):
        for name in ("apply_prob", "range_choice_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p!r}")
        for name in ("minor_range", "major_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must be (low, high) with low <= high")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.bbox_perturb_frac < 0:
            raise ValueError("bbox_perturb_frac must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPolicy":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "AugmentationPolicy":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["minor_range"] = list(self.minor_range)
        d["major_range"] = list(self.major_range)
        return d


def sample_augmentation(policy: AugmentationPolicy, rng: np.random.Generator) -> float | None:
    """Rotation angle in radians, or ``None`` when no rotation is applied."""
    if rng.random() >= policy.apply_prob:
        return None
    lo, hi = policy.minor_range if rng.random() < policy.range_choice_prob else policy.major_range
    return math.radians(rng.uniform(lo, hi))
