"""Temporal-window MLP (TW-MLP) for full-body motion from three sparse trackers."""

from .cost import CostReport, count_cost
from .featurize import FeatureWindowSet, TrackedFrame, build_window_set, frame_features
from .kinematics import KinematicTree, default_skeleton, forward_kinematics
from .metrics import MetricsReport
from .model import ModelConfig, ModelParams, PoseSequence, forward, init_params
from .runtime import StreamingSession, bench_latency
from .trainer import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "CostReport",
    "FeatureWindowSet",
    "KinematicTree",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "PoseSequence",
    "StreamingSession",
    "TrackedFrame",
    "TrainConfig",
    "bench_latency",
    "build_window_set",
    "count_cost",
    "default_skeleton",
    "evaluate",
    "forward",
    "forward_kinematics",
    "frame_features",
    "init_params",
    "train",
]
