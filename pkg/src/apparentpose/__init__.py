"""Crop-normalized 6DoF pose targets with apparent-rotation correction.

Encode full-frame spacecraft poses into the targets a crop-based pose
regressor predicts, decode predictions back to metric poses, relabel poses
under in-plane rotation augmentation, score with the ESA pose metrics and
model pipeline throughput.
"""

from .augmentation import (
    AugmentationPolicy,
    conjugation_check,
    in_plane_matrix,
    perturb_bbox,
    relabel_bbox,
    relabel_pose,
    sample_augmentation,
)
from .bench import StageProfile, ThroughputReport, measure_stages, model_throughput, simulate_schedules
from .dataset_io import DatasetManifest, FrameRecord, PredictionRecord, SchemaConfig
from .errors import *  # noqa: F401,F403
from .estimators import CropPoseEncoder, InPlaneRotationRelabeler
from .geometry import (
    CameraModel,
    Pose,
    apparent_correction,
    from_apparent,
    gram_schmidt,
    project,
    quat_to_rotmat,
    rodrigues,
    rot_z,
    rotmat_to_quat,
    to_apparent,
)
from .harness import FilePredictor, OracleNoisyPredictor, PipelineConfig, SyntheticSpec, generate_synthetic, run_pipeline
from .metrics import MetricsReport, PosePair, aggregate, rotation_error, rotation_loss, total_loss, translation_error, translation_loss
from .streams import derive_rng
from .targets import (
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

__version__ = "0.1.0"
