"""End-to-end evaluation: box -> predictor -> geometric decoding -> metrics.

Any object with a ``predict(frame_id, camera, box)`` method returning a
:class:`TargetVector` (or a :class:`Pose`, for predictors whose output is
already decoded) can be plugged in. :class:`OracleNoisyPredictor` encodes
the ground truth and adds controlled noise, which lets the whole geometric
path be validated without a trained network.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from .augmentation import clip_box, perturb_bbox
from .dataset_io import DatasetManifest, FrameRecord, PredictionRecord, load_bboxes, load_predictions
from .errors import PoseToolkitError, SpecError, UnknownFrame
from .geometry import CameraModel, Pose, random_rotation, random_unit_vector, rodrigues
from .metrics import MetricsReport, PosePair, aggregate, frame_metrics, target_loss
from .streams import DEFAULT_SEED, derive_rng
from .targets import MIN_BOX_EXTENT, BBox, TargetVector, decode_pose, encode_pose


class Predictor(Protocol):
    def predict(self, frame_id: str, camera: CameraModel, box: BBox) -> TargetVector | Pose: ...


class OracleNoisyPredictor:
    """Ground-truth targets plus Gaussian noise.

    ``sigma_u`` is added independently to ``U_x, U_y, U_z``. ``sigma_r``
    (radians) is the std of the angle of a rotation about a uniformly random
    axis, applied to the apparent rotation before its first two columns are
    taken. Each frame draws from its own stream keyed by frame id.
    """

    def __init__(self, manifest: DatasetManifest, sigma_u: float = 0.0, sigma_r: float = 0.0, seed: int = DEFAULT_SEED):
        if sigma_u < 0 or sigma_r < 0:
            raise ValueError("noise levels must be >= 0")
        self.frames = manifest.by_id()
        self.sigma_u = sigma_u
        self.sigma_r = sigma_r
        self.seed = seed

    def predict(self, frame_id, camera, box):
        try:
            frame = self.frames[frame_id]
        except KeyError:
            raise UnknownFrame(f"oracle has no ground truth for {frame_id!r}") from None
        target = encode_pose(frame.gt_pose, camera, box)
        if self.sigma_u == 0 and self.sigma_r == 0:
            return target
        rng = derive_rng(self.seed, "oracle-noise", frame_id)
        u = target.u + rng.normal(0.0, self.sigma_u, size=3) if self.sigma_u > 0 else target.u
        r1, r2 = target.r1, target.r2
        if self.sigma_r > 0:
            noise = rodrigues(random_unit_vector(rng), rng.normal(0.0, self.sigma_r))
            r1, r2 = noise @ r1, noise @ r2
        return TargetVector(u[0], u[1], u[2], r1, r2)


class FilePredictor:
    """Replays predictions stored in a prediction file.

    Target payloads are returned for decoding; pose payloads are returned as
    is and bypass decoding.
    """

    def __init__(self, records: list[PredictionRecord]):
        self.records = {r.frame_id: r for r in records}

    @classmethod
    def from_file(cls, path, known_ids=None) -> "FilePredictor":
        return cls(load_predictions(path, known_ids))

    def predict(self, frame_id, camera, box):
        try:
            rec = self.records[frame_id]
        except KeyError:
            raise UnknownFrame(f"no stored prediction for frame {frame_id!r}") from None
        return rec.target if rec.target is not None else rec.pose


def file_predictor(path, known_ids=None) -> FilePredictor:
    return FilePredictor.from_file(path, known_ids)


@dataclass
class PipelineConfig:
    """Evaluation run settings.

    ``bbox_source`` is ``"gt"``, ``"perturbed"`` or ``"file:<path>"``;
    ``predictor`` is ``"oracle"`` or ``"file:<path>"``. Noise angles are in
    degrees, as in config files.
    """

    bbox_source: str = "gt"
    predictor: str = "oracle"
    noise_u: float = 0.0
    noise_r_deg: float = 0.0
    perturb_frac: float = 0.10
    seed: int = DEFAULT_SEED
    predictions_out: str | None = None
    report_out: str | None = None

    def __post_init__(self):
        if not (self.bbox_source in ("gt", "perturbed") or self.bbox_source.startswith("file:")):
            raise ValueError(f"bbox_source must be gt, perturbed or file:<path>, got {self.bbox_source!r}")
        if not (self.predictor == "oracle" or self.predictor.startswith("file:")):
            raise ValueError(f"predictor must be oracle or file:<path>, got {self.predictor!r}")
        if self.noise_u < 0 or self.noise_r_deg < 0 or self.perturb_frac < 0:
            raise ValueError("noise levels and perturb_frac must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineResult:
    report: MetricsReport
    predictions: list[PredictionRecord]
    boxes: dict[str, BBox] = field(default_factory=dict)


def resolve_boxes(manifest: DatasetManifest, config: PipelineConfig) -> dict[str, BBox]:
    """Box per frame according to ``config.bbox_source``; frames without one are absent."""
    if config.bbox_source.startswith("file:"):
        boxes = load_bboxes(config.bbox_source[5:], manifest.camera)
        known = manifest.by_id()
        unknown = sorted(set(boxes) - set(known))
        if unknown:
            raise UnknownFrame(f"box file references unknown frames: {unknown[:5]}")
        return boxes
    boxes = {f.frame_id: f.bbox for f in manifest.frames if f.bbox is not None}
    if config.bbox_source == "perturbed":
        boxes = {
            fid: perturb_bbox(b, manifest.camera, derive_rng(config.seed, "perturb", fid), config.perturb_frac)
            for fid, b in boxes.items()
        }
    return boxes


def make_predictor(manifest: DatasetManifest, config: PipelineConfig) -> Predictor:
    if config.predictor == "oracle":
        return OracleNoisyPredictor(manifest, config.noise_u, math.radians(config.noise_r_deg), config.seed)
    return file_predictor(config.predictor[5:], [f.frame_id for f in manifest.frames])


def _evaluate_frame(frame: FrameRecord, camera, box, predictor):
    out = predictor.predict(frame.frame_id, camera, box)
    if isinstance(out, Pose):
        return PredictionRecord(frame.frame_id, pose=out), out, None
    pose = decode_pose(out, camera, box)
    loss = target_loss(out, encode_pose(frame.gt_pose, camera, box))
    return PredictionRecord(frame.frame_id, target=out), pose, loss


def run_pipeline(manifest: DatasetManifest, config: PipelineConfig | None = None, predictor: Predictor | None = None) -> PipelineResult:
    """Evaluate every frame of ``manifest``.

    The box each predictor call is conditioned on is the same box used to
    decode its output. Frames without a box are skipped; frames whose
    prediction cannot be decoded are recorded as failed. Neither affects the
    metrics of other frames.
    """
    config = config or PipelineConfig()
    boxes = resolve_boxes(manifest, config)
    predictor = predictor if predictor is not None else make_predictor(manifest, config)
    cam = manifest.camera
    items, preds, skipped, failed, losses = [], [], [], {}, []
    for frame in manifest.frames:
        box = boxes.get(frame.frame_id)
        if box is None:
            skipped.append(frame.frame_id)
            continue
        try:
            rec, pose, loss = _evaluate_frame(frame, cam, box, predictor)
        except PoseToolkitError as exc:
            failed[frame.frame_id] = f"{type(exc).__name__}: {exc}"
            continue
        preds.append(rec)
        if loss is not None:
            losses.append(loss)
        items.append(frame_metrics(frame.frame_id, PosePair(pose, frame.gt_pose)))
    report = aggregate(items, skipped, failed)
    if losses:
        report.losses["mean_total_loss"] = math.fsum(losses) / len(losses)
    preds.sort(key=lambda r: r.frame_id)
    return PipelineResult(report, preds, boxes)


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic ground-truth manifest.

    Boxes have extent ``object_extent * f / Z`` pixels (at least
    ``min_box_px``) and are centered at the projected object center shifted by
    a uniform fraction in ``[-box_offset_frac, box_offset_frac]`` of their
    width and height, then clipped to the image.
    """

    count: int
    z_min: float = 3.0
    z_max: float = 40.0
    camera: CameraModel = field(default_factory=CameraModel.speed)
    margin_px: float = 50.0
    object_extent: float = 1.5
    min_box_px: float = 16.0
    box_offset_frac: float = 0.15

    def validate(self):
        if not isinstance(self.count, (int, np.integer)) or self.count < 1:
            raise SpecError(f"count must be a positive integer, got {self.count!r}")
        if not (1.0 <= self.z_min <= self.z_max):
            raise SpecError(f"depth range must satisfy 1 <= z_min <= z_max, got [{self.z_min}, {self.z_max}]")
        cam = self.camera
        if not (0 <= self.margin_px < 0.5 * min(cam.width, cam.height)):
            raise SpecError("margin_px must be >= 0 and leave a non-empty image region")
        if self.object_extent <= 0 or self.min_box_px <= MIN_BOX_EXTENT or self.box_offset_frac < 0:
            raise SpecError("object_extent > 0, min_box_px > 1 and box_offset_frac >= 0 are required")


def generate_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> DatasetManifest:
    spec.validate()
    cam = spec.camera
    m = spec.margin_px
    frames = []
    width = len(str(spec.count))
    for i in range(spec.count):
        R = random_rotation(rng)
        Z = rng.uniform(spec.z_min, spec.z_max)
        x = rng.uniform(m, cam.width - m)
        y = rng.uniform(m, cam.height - m)
        T = np.array([(x - cam.cx) * Z / cam.fx, (y - cam.cy) * Z / cam.fy, Z])
        w = max(spec.object_extent * cam.fx / Z, spec.min_box_px)
        h = max(spec.object_extent * cam.fy / Z, spec.min_box_px)
        ox, oy = rng.uniform(-spec.box_offset_frac, spec.box_offset_frac, size=2)
        box = clip_box(BBox.from_center(x + ox * w, y + oy * h, w, h), cam)
        frames.append(FrameRecord(f"syn{i:0{width}d}", Pose(R, T), box))
    provenance = {
        "generator": "synthetic",
        "spec": {k: v for k, v in asdict(spec).items() if k != "camera"},
    }
    return DatasetManifest(cam, frames, provenance)
