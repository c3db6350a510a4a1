"""Spatio-temporal pixel embeddings for video instance segmentation.

Pixels of a clip are embedded next to their normalized (x, y, t) coordinates;
each instance is a Gaussian in that space, and instances are peeled off one
seed at a time. Overlapping clips are stitched into video-long tracks.
"""
from .inference import ClusterResult, FieldSet, cluster_instances
from .instance_model import GaussianInstance, ProbMode, instance_stats, prob_field
from .losses import LossConfig, lovasz_hinge, total_loss
from .metrics import evaluate, mots_scores, track_ap
from .mixing import KINDS, MixingSpec, apply_mixing, apply_variance_policy
from .stitching import TrackSet, linear_assignment, split_clips, stitch
from .synth import SynthConfig, generate_clip
from .trainer import OptimConfig, optimize_fields
from .volume import InstanceLabeling, MaskTube, VolumeDims

__version__ = "0.1.0"

__all__ = [
    "ClusterResult", "FieldSet", "cluster_instances",
    "GaussianInstance", "ProbMode", "instance_stats", "prob_field",
    "LossConfig", "lovasz_hinge", "total_loss",
    "evaluate", "mots_scores", "track_ap",
    "KINDS", "MixingSpec", "apply_mixing", "apply_variance_policy",
    "TrackSet", "linear_assignment", "split_clips", "stitch",
    "SynthConfig", "generate_clip",
    "OptimConfig", "optimize_fields",
    "InstanceLabeling", "MaskTube", "VolumeDims",
]
