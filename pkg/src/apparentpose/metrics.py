"""ESA pose-challenge errors, training losses and dataset aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyDataset
from .geometry import Pose, rotmat_to_quat
from .targets import TargetVector


@dataclass(frozen=True)
class PosePair:
    pred: Pose
    gt: Pose


def translation_error(pair: PosePair) -> float:
    """Euclidean distance between translations, meters."""
    return float(np.linalg.norm(pair.pred.translation - pair.gt.translation))


def quaternion_angle(q_pred, q_gt) -> float:
    """Geodesic angle ``2 arccos |<q_pred, q_gt>|`` in radians.

    Evaluated as ``4 atan2(|a - b|, |a + b|)`` with ``b`` sign-aligned to ``a``;
    identical in exact arithmetic, but it does not lose half the significant
    digits near zero the way ``arccos`` does.
    """
    a = np.asarray(q_pred, dtype=float)
    b = np.asarray(q_gt, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    if a @ b < 0:
        b = -b
    return 4.0 * math.atan2(np.linalg.norm(a - b), np.linalg.norm(a + b))


def rotation_error(pair: PosePair) -> float:
    """Rotation error in degrees, in ``[0, 180]``."""
    q_pred = rotmat_to_quat(pair.pred.rotation)
    q_gt = rotmat_to_quat(pair.gt.rotation)
    return min(math.degrees(quaternion_angle(q_pred, q_gt)), 180.0)


def rotation_loss(pred_cols, gt_rotation) -> float:
    """Squared Frobenius distance between the first two rotation columns.

    ``pred_cols`` is a (3, 2) array, a (6,) vector ordered column-wise, or a
    :class:`TargetVector`.
    """
    if isinstance(pred_cols, TargetVector):
        pred = np.column_stack([pred_cols.r1, pred_cols.r2])
    else:
        pred = np.asarray(pred_cols, dtype=float)
        if pred.shape == (6,):
            pred = pred.reshape(2, 3).T
    gt = np.asarray(gt_rotation, dtype=float)[:, :2]
    return float(np.sum((pred - gt) ** 2))


def translation_loss(u_pred, u_gt) -> float:
    a = u_pred.u if isinstance(u_pred, TargetVector) else np.asarray(u_pred, dtype=float)
    b = u_gt.u if isinstance(u_gt, TargetVector) else np.asarray(u_gt, dtype=float)
    return float(np.sum((a - b) ** 2))


def total_loss(rot: float, trans: float) -> float:
    return rot + trans


def target_loss(pred: TargetVector, gt: TargetVector) -> float:
    """Total training loss between two target vectors."""
    gt_cols = np.column_stack([gt.r1, gt.r2, np.zeros(3)])
    return total_loss(rotation_loss(pred, gt_cols), translation_loss(pred, gt))


@dataclass(frozen=True)
class FrameMetrics:
    frame_id: str
    e_t: float
    e_r: float


@dataclass
class MetricsReport:
    """Per-frame errors plus dataset means.

    ``skipped`` lists frames without a bounding box, ``failed`` maps frame ids
    to the error that stopped them. Neither contributes to the means.
    """

    frames: list[FrameMetrics]
    mean_e_t: float
    mean_e_r: float
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)
    losses: dict[str, float] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.frames)

    def to_dict(self) -> dict:
        return {
            "summary": {
                "mean_e_t_m": self.mean_e_t,
                "mean_e_r_deg": self.mean_e_r,
                "frame_count": self.count,
                "skipped_count": len(self.skipped),
                "failed_count": len(self.failed),
            },
            "frames": [{"frame_id": f.frame_id, "e_t_m": f.e_t, "e_r_deg": f.e_r} for f in self.frames],
            "skipped": list(self.skipped),
            "failed": dict(self.failed),
            "losses": dict(self.losses),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        s = d["summary"]
        return cls(
            frames=[FrameMetrics(f["frame_id"], float(f["e_t_m"]), float(f["e_r_deg"])) for f in d["frames"]],
            mean_e_t=float(s["mean_e_t_m"]),
            mean_e_r=float(s["mean_e_r_deg"]),
            skipped=list(d.get("skipped", [])),
            failed=dict(d.get("failed", {})),
            losses={k: float(v) for k, v in d.get("losses", {}).items()},
        )

    def to_text(self) -> str:
        lines = [f"{'frame_id':<32} {'E_T [m]':>14} {'E_R [deg]':>14}"]
        for f in self.frames:
            lines.append(f"{f.frame_id:<32} {f.e_t:>14.6g} {f.e_r:>14.6g}")
        lines += [
            "",
            f"frames evaluated : {self.count}",
            f"mean E_T [m]     : {self.mean_e_t:.9g}",
            f"mean E_R [deg]   : {self.mean_e_r:.9g}",
        ]
        if self.skipped:
            lines.append(f"skipped (no box) : {len(self.skipped)}  {', '.join(self.skipped)}")
        if self.failed:
            lines.append(f"failed           : {len(self.failed)}")
            lines += [f"  {k}: {v}" for k, v in self.failed.items()]
        for name, value in self.losses.items():
            lines.append(f"{name:<17}: {value:.9g}")
        return "\n".join(lines) + "\n"


def frame_metrics(frame_id: str, pair: PosePair) -> FrameMetrics:
    return FrameMetrics(frame_id, translation_error(pair), rotation_error(pair))


def aggregate(
    frames: Iterable[tuple[str, PosePair]] | Sequence[FrameMetrics],
    skipped: Sequence[str] = (),
    failed: dict[str, str] | None = None,
) -> MetricsReport:
    """Dataset report from ``(frame_id, PosePair)`` items or precomputed metrics.

    Frames are sorted by id and means use ``math.fsum``, so the report does not
    depend on input order.
    """
    metrics = [f if isinstance(f, FrameMetrics) else frame_metrics(*f) for f in frames]
    if not metrics:
        raise EmptyDataset("no frames to aggregate")
    metrics.sort(key=lambda m: m.frame_id)
    n = len(metrics)
    return MetricsReport(
        frames=metrics,
        mean_e_t=math.fsum(m.e_t for m in metrics) / n,
        mean_e_r=math.fsum(m.e_r for m in metrics) / n,
        skipped=sorted(skipped),
        failed=dict(sorted((failed or {}).items())),
    )
