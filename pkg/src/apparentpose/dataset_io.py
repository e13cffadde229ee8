"""Readers and writers for annotations, cameras, boxes, predictions and reports.

Formats
-------
camera
    JSON object ``{"fx", "fy", "cx", "cy", "width", "height", "alpha"}``.
    SPEED-style ``{"Nu", "Nv", "cameraMatrix"}`` documents are accepted too.
annotations
    Either a JSON list of per-image records (field names set by
    :class:`SchemaConfig`) or a manifest document written by
    :func:`save_manifest` (``{"camera", "frames", "provenance"}``).
boxes
    JSON lines, ``{"frame_id": ..., "bbox": [x_min, y_min, x_max, y_max]}``.
predictions
    JSON lines, ``frame_id`` plus either ``ux, uy, uz, r11, r21, r31, r12,
    r22, r32`` (raw network output) or ``qw, qx, qy, qz, tx, ty, tz`` (pose).
report
    JSON document from :meth:`MetricsReport.to_dict`.

Floats are written with ``repr`` precision so every float64 round-trips
exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    DegenerateBox,
    EmptyDataset,
    ParseError,
    SchemaError,
    UnknownFrame,
    ValidationError,
)
from .geometry import CameraModel, Pose, quat_to_rotmat, rotmat_to_quat
from .metrics import MetricsReport
from .targets import BBox, TargetVector

log = logging.getLogger(__name__)

QUAT_RENORM_TOL = 1e-3
_UNIT_SCALE = {"m": 1.0, "cm": 0.01, "mm": 0.001}
SIX_FIELDS = ("r11", "r21", "r31", "r12", "r22", "r32")
POSE_FIELDS = ("qw", "qx", "qy", "qz", "tx", "ty", "tz")


@dataclass(frozen=True)
class SchemaConfig:
    """Field mapping for list-style annotation files."""

    id_field: str = "frame_id"
    quaternion_field: str = "q"
    translation_field: str = "t"
    quaternion_order: str = "wxyz"
    translation_units: str = "m"
    bbox_field: str | None = "bbox"
    split_field: str | None = "split"

    def __post_init__(self):
        if self.quaternion_order not in ("wxyz", "xyzw"):
            raise ValueError(f"quaternion_order must be 'wxyz' or 'xyzw', got {self.quaternion_order!r}")
        if self.translation_units not in _UNIT_SCALE:
            raise ValueError(f"translation_units must be one of {sorted(_UNIT_SCALE)}")

    @classmethod
    def preset(cls, name: str) -> "SchemaConfig":
        presets = {
            "default": cls(),
            "speed": cls("filename", "q_vbs2tango", "r_Vo2To_vbs_true"),
            "speedplus": cls("filename", "q_vbs2tango_true", "r_Vo2To_vbs_true"),
        }
        try:
            return presets[name]
        except KeyError:
            raise ValueError(f"unknown schema preset {name!r}, choose from {sorted(presets)}") from None

    @classmethod
    def load(cls, path) -> "SchemaConfig":
        data = _read_json(path)
        if not isinstance(data, dict):
            raise SchemaError(f"{path}: schema config must be a JSON object")
        try:
            return cls(**data)
        except TypeError as exc:
            raise SchemaError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class FrameRecord:
    frame_id: str
    gt_pose: Pose
    bbox: BBox | None = None
    split: str | None = None


@dataclass(frozen=True)
class PredictionRecord:
    """One prediction: exactly one of ``target`` or ``pose`` is set."""

    frame_id: str
    target: TargetVector | None = None
    pose: Pose | None = None

    def __post_init__(self):
        if (self.target is None) == (self.pose is None):
            raise SchemaError(f"prediction {self.frame_id!r} must carry exactly one of target or pose")


@dataclass
class DatasetManifest:
    camera: CameraModel
    frames: list[FrameRecord]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.frames:
            raise EmptyDataset("manifest has no frames")
        ids = [f.frame_id for f in self.frames]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate frame ids: {dup[:5]}")
        self.provenance = {**self.provenance, "count": len(self.frames), "hash": self.content_hash()}

    def __len__(self):
        return len(self.frames)

    def by_id(self) -> dict[str, FrameRecord]:
        return {f.frame_id: f for f in self.frames}

    def content_hash(self) -> str:
        payload = json.dumps([_frame_to_dict(f) for f in self.frames], sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def _read_jsonl(path) -> list[tuple[int, dict]]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            out.append((lineno, rec))
    return out


def _write_json(obj, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=1)
        f.write("\n")


def _write_jsonl(records: Iterable[dict], path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(rec) + "\n")


def _floats(value, n, where) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SchemaError(f"{where}: expected a list of {n} numbers, got {value!r}")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: non-numeric entry in {value!r}") from None
    if not all(math.isfinite(v) for v in out):
        raise ValidationError(f"{where}: non-finite value in {value!r}")
    return out


def normalize_quaternion(q, where="quaternion") -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if abs(n - 1.0) >= QUAT_RENORM_TOL:
        raise ValidationError(f"{where}: norm {n:.6g} deviates from 1 by more than {QUAT_RENORM_TOL:g}")
    return q / n


# -- camera -----------------------------------------------------------------


def camera_from_dict(d: Mapping, alpha: float | None = None) -> CameraModel:
    try:
        if "cameraMatrix" in d:
            K = np.asarray(d["cameraMatrix"], dtype=float)
            cam = dict(fx=K[0, 0], fy=K[1, 1], cx=K[0, 2], cy=K[1, 2], width=d["Nu"], height=d["Nv"])
        else:
            cam = {k: d[k] for k in ("fx", "fy", "cx", "cy", "width", "height")}
    except (KeyError, IndexError) as exc:
        raise SchemaError(f"camera config missing field {exc}") from None
    cam = {k: float(v) for k, v in cam.items()}
    a = alpha if alpha is not None else float(d.get("alpha", 1.6))
    try:
        return CameraModel(alpha=a, **cam)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def load_camera(path, alpha: float | None = None) -> CameraModel:
    d = _read_json(path)
    if not isinstance(d, dict):
        raise SchemaError(f"{path}: camera config must be a JSON object")
    return camera_from_dict(d, alpha)


def save_camera(cam: CameraModel, path):
    _write_json(cam.to_dict(), path)


# -- annotations / manifests ------------------------------------------------


def _frame_to_dict(f: FrameRecord) -> dict:
    d = {
        "frame_id": f.frame_id,
        "q": rotmat_to_quat(f.gt_pose.rotation).tolist(),
        "t": f.gt_pose.translation.tolist(),
    }
    if f.bbox is not None:
        d["bbox"] = f.bbox.as_list()
    if f.split is not None:
        d["split"] = f.split
    return d


def _parse_box(value, where) -> BBox:
    coords = _floats(value, 4, where)
    try:
        return BBox(*coords)
    except DegenerateBox as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _parse_frame(rec, schema: SchemaConfig, where) -> FrameRecord:
    if not isinstance(rec, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    for key in (schema.id_field, schema.quaternion_field, schema.translation_field):
        if key not in rec:
            raise SchemaError(f"{where}: missing field {key!r}")
    frame_id = str(rec[schema.id_field])
    q = _floats(rec[schema.quaternion_field], 4, f"{where} {schema.quaternion_field}")
    if schema.quaternion_order == "xyzw":
        q = q[3:] + q[:3]
    q = normalize_quaternion(q, f"{where} ({frame_id})")
    t = np.array(_floats(rec[schema.translation_field], 3, f"{where} {schema.translation_field}"))
    t = t * _UNIT_SCALE[schema.translation_units]
    if t[2] <= 0:
        log.warning("%s (%s): non-positive depth z=%g", where, frame_id, t[2])
    bbox = None
    if schema.bbox_field and rec.get(schema.bbox_field) is not None:
        bbox = _parse_box(rec[schema.bbox_field], f"{where} {schema.bbox_field}")
    split = rec.get(schema.split_field) if schema.split_field else None
    return FrameRecord(frame_id, Pose(quat_to_rotmat(q), t), bbox, None if split is None else str(split))


def load_annotations(path, schema: SchemaConfig | None = None, camera: CameraModel | None = None) -> DatasetManifest:
    """Load a list-style annotation file or a manifest document.

    ``camera`` overrides a camera embedded in a manifest; list-style files
    carry no camera, so one must be passed.
    """
    data = _read_json(path)
    embedded = None
    provenance = {"source": str(path)}
    if isinstance(data, dict) and "frames" in data:
        records = data["frames"]
        schema = SchemaConfig()
        embedded = data.get("camera")
        provenance = {**data.get("provenance", {}), **provenance}
    elif isinstance(data, list):
        records = data
        schema = schema or SchemaConfig()
    else:
        raise SchemaError(f"{path}: expected a list of records or a manifest object")
    if camera is None:
        if embedded is None:
            raise SchemaError(f"{path}: no camera embedded in the file and none supplied")
        camera = camera_from_dict(embedded)
    if not isinstance(records, list):
        raise SchemaError(f"{path}: 'frames' must be a list")
    frames = [_parse_frame(rec, schema, f"{path}[{i}]") for i, rec in enumerate(records)]
    if not frames:
        raise EmptyDataset(f"{path}: no frames")
    provenance.pop("count", None)
    provenance.pop("hash", None)
    return DatasetManifest(camera, frames, provenance)


def save_manifest(manifest: DatasetManifest, path):
    _write_json(
        {
            "camera": manifest.camera.to_dict(),
            "provenance": {k: v for k, v in manifest.provenance.items() if k != "source"},
            "frames": [_frame_to_dict(f) for f in manifest.frames],
        },
        path,
    )


# -- boxes ------------------------------------------------------------------


def load_bboxes(path, camera: CameraModel | None = None) -> dict[str, BBox]:
    """Boxes keyed by frame id; boxes leaving the image are clipped with a warning."""
    out: dict[str, BBox] = {}
    for lineno, rec in _read_jsonl(path):
        where = f"{path}:{lineno}"
        if "frame_id" not in rec or "bbox" not in rec:
            raise SchemaError(f"{where}: box records need 'frame_id' and 'bbox'")
        fid = str(rec["frame_id"])
        if fid in out:
            raise ValidationError(f"{where}: duplicate box for frame {fid!r}")
        x0, y0, x1, y1 = _floats(rec["bbox"], 4, where)
        if not (x1 > x0 and y1 > y0):
            raise ValidationError(f"{where}: inverted box {rec['bbox']}")
        if camera is not None:
            cx0, cx1 = min(max(x0, 0.0), camera.width), min(max(x1, 0.0), camera.width)
            cy0, cy1 = min(max(y0, 0.0), camera.height), min(max(y1, 0.0), camera.height)
            if (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1):
                log.warning("%s: box for %s exceeds the image and was clipped", where, fid)
                x0, y0, x1, y1 = cx0, cy0, cx1, cy1
        out[fid] = _parse_box([x0, y0, x1, y1], where)
    return out


def save_bboxes(boxes: Mapping[str, BBox], path):
    _write_jsonl(({"frame_id": k, "bbox": b.as_list()} for k, b in boxes.items()), path)


# -- predictions --------------------------------------------------------------


def prediction_to_dict(rec: PredictionRecord) -> dict:
    d = {"frame_id": rec.frame_id}
    if rec.target is not None:
        d.update(ux=rec.target.ux, uy=rec.target.uy, uz=rec.target.uz)
        d.update(zip(SIX_FIELDS, rec.target.six.tolist()))
    else:
        vals = rotmat_to_quat(rec.pose.rotation).tolist() + rec.pose.translation.tolist()
        d.update(zip(POSE_FIELDS, vals))
    return d


def prediction_from_dict(rec: dict, where="prediction") -> PredictionRecord:
    if "frame_id" not in rec:
        raise SchemaError(f"{where}: missing 'frame_id'")
    fid = str(rec["frame_id"])
    target_keys = ("ux", "uy", "uz") + SIX_FIELDS
    has_target = any(k in rec for k in target_keys)
    has_pose = any(k in rec for k in POSE_FIELDS)
    if has_target == has_pose:
        raise SchemaError(f"{where}: record must carry either target fields or pose fields, not {'both' if has_target else 'neither'}")
    keys = target_keys if has_target else POSE_FIELDS
    missing = [k for k in keys if k not in rec]
    if missing:
        raise SchemaError(f"{where}: missing fields {missing}")
    vals = _floats([rec[k] for k in keys], len(keys), where)
    if has_target:
        return PredictionRecord(fid, target=TargetVector.from_array(vals))
    q = normalize_quaternion(vals[:4], where)
    return PredictionRecord(fid, pose=Pose(quat_to_rotmat(q), vals[4:]))


def load_predictions(path, known_ids: Iterable[str] | None = None) -> list[PredictionRecord]:
    known = set(known_ids) if known_ids is not None else None
    out = []
    seen = set()
    for lineno, rec in _read_jsonl(path):
        where = f"{path}:{lineno}"
        pred = prediction_from_dict(rec, where)
        if known is not None and pred.frame_id not in known:
            raise UnknownFrame(f"{where}: frame {pred.frame_id!r} is not in the dataset")
        if pred.frame_id in seen:
            raise ValidationError(f"{where}: duplicate prediction for {pred.frame_id!r}")
        seen.add(pred.frame_id)
        out.append(pred)
    return out


def save_predictions(records: Iterable[PredictionRecord], path):
    _write_jsonl((prediction_to_dict(r) for r in records), path)


# -- reports ------------------------------------------------------------------


def save_report(report: MetricsReport, path, text_path=None):
    _write_json(report.to_dict(), path)
    if text_path is not None:
        Path(text_path).write_text(report.to_text())


def load_report(path) -> MetricsReport:
    data = _read_json(path)
    try:
        return MetricsReport.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed report ({exc})") from None
