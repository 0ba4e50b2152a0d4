"""Court positioning and pose post-processing downstream of a person detector.

Camera-to-court homography, two-player tracking-by-detection, skeleton
outlier repair by keyframe inbetweening, and trajectory evaluation, with a
synthetic scene generator for closed-loop checks.
"""

__version__ = "0.1.0"

from .geometry import (
    Correspondence,
    Homography,
    Point2,
    apply_homography,
    estimate_homography,
    invert_homography,
    reprojection_error,
)
from .model import BBox, Detection, FrameDetections, Player, Pose3D, foot_point, load_detections, load_poses
from .pose import PoseSequence, detect_outlier_frames, expand_bbox, inbetween, pose_features
from .tracker import CourtRegion, Track, TrackPoint, enforce_two_players, filter_by_court, run_tracking
from .evaluation import compare_trajectories, px_to_cm
from .synth import SceneConfig, generate_scene

__all__ = [
    "__version__",
    "Correspondence",
    "Homography",
    "Point2",
    "apply_homography",
    "estimate_homography",
    "invert_homography",
    "reprojection_error",
    "BBox",
    "Detection",
    "FrameDetections",
    "Player",
    "Pose3D",
    "foot_point",
    "load_detections",
    "load_poses",
    "PoseSequence",
    "detect_outlier_frames",
    "expand_bbox",
    "inbetween",
    "pose_features",
    "CourtRegion",
    "Track",
    "TrackPoint",
    "enforce_two_players",
    "filter_by_court",
    "run_tracking",
    "compare_trajectories",
    "px_to_cm",
    "SceneConfig",
    "generate_scene",
]
