"""Video anomaly detection via pseudo-anomaly training with a learned anomaly
weight and a distinction loss, plus the matching inference/scoring protocol."""

from .clipio import (
    ClipWindow,
    DatasetManifest,
    FrameSequence,
    GroundTruthLabels,
    load_frame_dir,
    load_labels,
    load_manifest,
    sliding_windows,
)
from .errors import ContractError, IngestError, IoError, NumericError
from .losses import LossBreakdown, LossConfig, distinction_loss, recon_loss, total_loss
from .masking import MaskSequence, TrackedObjectSet, full_frame_fallback, load_tracks, random_object_mask
from .model import (
    ModelConfig,
    TemporalSkipUNet,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from .pseudo import AnomalyWeight, NoiseTensor, blend_noise, compose_pseudo, sample_noise, sigmoid_weight
from .scoring import (
    ErrorMap,
    ScoreSeries,
    aggregate_scene_auc,
    align_scores,
    evaluate_scores,
    frame_score,
    median_filter,
    normalize_per_video,
    pixel_error_map,
    reconstruct_video,
    roc_auc,
    score_video,
)
from .synth import SynthConfig, synth_dataset
from .training import TrainConfig, describe_run, fit, train_step

__all__ = [name for name in dir() if not name.startswith("_")]
