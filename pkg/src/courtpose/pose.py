"""Pose post-processing: crop expansion, outlier frames, keyframe inbetweening."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import AllFramesOutliers, InvalidPose, UnfillableGap
from .model import N_KEYPOINTS, BBox, Player, Pose3D, dumps_jsonl, pose_to_json

DEFAULT_MARGIN = 30.0  # px added on every side of a detector box
DEFAULT_VMAX = 0.15  # model units per frame
N_FEATURES = 3 * N_KEYPOINTS


@dataclass(frozen=True, slots=True)
class CropRegion:
    bbox: BBox
    clamped: bool


def expand_bbox(b: BBox, margin: float = DEFAULT_MARGIN, image_size=(852, 472)) -> CropRegion:
    """Grow ``b`` by ``margin`` on all four sides and clamp to the image."""
    width, height = image_size
    x0, y0 = b.x - margin, b.y - margin
    x1, y1 = b.x + b.w + margin, b.y + b.h + margin
    cx0, cy0 = max(x0, 0.0), max(y0, 0.0)
    cx1, cy1 = min(x1, float(width)), min(y1, float(height))
    clamped = (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1)
    return CropRegion(BBox(cx0, cy0, cx1 - cx0, cy1 - cy0), clamped)


@dataclass(frozen=True)
class PoseSequence:
    player: Player
    poses: tuple[Pose3D, ...]
    outliers: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        poses = tuple(self.poses)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "outliers", frozenset(self.outliers))
        ids = [p.frame_id for p in poses]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("poses must be strictly ordered by frame_id")
        stray = self.outliers - set(ids)
        if stray:
            raise ValueError(f"outlier frames {sorted(stray)} are not in the sequence")

    @property
    def frame_ids(self) -> list[int]:
        return [p.frame_id for p in self.poses]


def fill_missing_frames(seq: PoseSequence) -> PoseSequence:
    """Insert invalid placeholder poses for frame ids absent between the first and last pose."""
    if not seq.poses:
        return seq
    have = {p.frame_id: p for p in seq.poses}
    first, last = seq.poses[0].frame_id, seq.poses[-1].frame_id
    poses = tuple(have.get(t) or Pose3D.missing(t) for t in range(first, last + 1))
    return replace(seq, poses=poses)


def _spike(a: np.ndarray, b: np.ndarray, limit: float) -> np.ndarray:
    """Per-keypoint flag: displacement from ``a`` to ``b`` exceeds ``limit``."""
    return np.linalg.norm(b - a, axis=1) > limit


def detect_outlier_frames(seq: PoseSequence, vmax: float = DEFAULT_VMAX) -> frozenset[int]:
    """Flag frames whose skeleton jumps implausibly relative to both neighbours.

    A frame is flagged when its pose is invalid, or when some keypoint moved
    more than ``vmax`` per elapsed frame from the last unflagged frame *and*
    moves more than that again to the next valid frame. A large step that
    persists is therefore not flagged, only an isolated spike.
    The scan runs left to right so a flagged frame never serves as a
    neighbour for later frames.

    Raises:
        AllFramesOutliers: fewer than two clean keyframes remain.
    """
    if vmax <= 0:
        raise ValueError("vmax must be positive")
    poses = seq.poses
    valid_idx = [i for i, p in enumerate(poses) if p.valid]
    next_valid = {}
    for a, b in zip(valid_idx, valid_idx[1:]):
        next_valid[a] = b

    flagged = set()
    prev = None
    for i, pose in enumerate(poses):
        if not pose.valid:
            flagged.add(pose.frame_id)
            continue
        j = next_valid.get(i)
        if prev is not None and j is not None:
            t_prev, t, t_next = poses[prev].frame_id, pose.frame_id, poses[j].frame_id
            jump_in = _spike(poses[prev].keypoints, pose.keypoints, vmax * (t - t_prev))
            jump_out = _spike(pose.keypoints, poses[j].keypoints, vmax * (t_next - t))
            if np.any(jump_in & jump_out):
                flagged.add(t)
                continue
        prev = i

    if len(poses) - len(flagged) < 2:
        raise AllFramesOutliers(
            f"only {len(poses) - len(flagged)} clean keyframe(s) out of {len(poses)}"
        )
    return frozenset(flagged)


def inbetween(seq: PoseSequence, outliers: Iterable[int] | None = None) -> PoseSequence:
    """Replace outlier frames by recursive midpoint inbetweening between keyframes.

    For each run of outliers bracketed by keyframes ``ta`` and ``tb`` the frame
    ``(ta + tb) // 2`` is filled first with the time-weighted linear blend of
    the two keyframes, promoted to a keyframe, and both halves are filled the
    same way. Clean frames are returned untouched.

    Raises:
        UnfillableGap: an outlier run touches the start or end of the sequence.
    """
    bad = frozenset(seq.outliers if outliers is None else outliers)
    poses = list(seq.poses)
    index = {p.frame_id: i for i, p in enumerate(poses)}
    stray = bad - set(index)
    if stray:
        raise ValueError(f"outlier frames {sorted(stray)} are not in the sequence")
    if not bad:
        return replace(seq, outliers=frozenset())

    keys = [i for i, p in enumerate(poses) if p.frame_id not in bad]
    if not keys or keys[0] != 0 or keys[-1] != len(poses) - 1:
        raise UnfillableGap("outlier frames at the sequence boundary have no keyframe on one side")

    def fill(ia: int, ib: int):
        if ib - ia < 2:
            return
        im = (ia + ib) // 2
        pa, pb = poses[ia], poses[ib]
        w = (poses[im].frame_id - pa.frame_id) / (pb.frame_id - pa.frame_id)
        kp = pa.keypoints + w * (pb.keypoints - pa.keypoints)
        poses[im] = Pose3D(poses[im].frame_id, kp, True, poses[im].pose2d)
        fill(ia, im)
        fill(im, ib)

    for ia, ib in zip(keys, keys[1:]):
        fill(ia, ib)
    return replace(seq, poses=tuple(poses), outliers=frozenset())


def repair(seq: PoseSequence, vmax: float = DEFAULT_VMAX) -> tuple[PoseSequence, frozenset[int]]:
    """Detect and inbetween outliers; returns the repaired sequence and the frames replaced.

    Missing frame ids are inserted first. Outliers before the first or after
    the last clean frame cannot be bracketed and are trimmed away.
    """
    seq = fill_missing_frames(seq)
    flagged = detect_outlier_frames(seq, vmax)
    clean = [p.frame_id for p in seq.poses if p.frame_id not in flagged]
    lo, hi = clean[0], clean[-1]
    trimmed = replace(
        seq,
        poses=tuple(p for p in seq.poses if lo <= p.frame_id <= hi),
        outliers=frozenset(t for t in flagged if lo <= t <= hi),
    )
    return inbetween(trimmed), trimmed.outliers


def pose_features(p: Pose3D) -> np.ndarray:
    """Flatten a pose to 51 values ``x1, y1, z1, ..., x17, y17, z17``."""
    if not p.valid:
        raise InvalidPose(f"pose at frame {p.frame_id} is invalid")
    return p.keypoints.reshape(-1).copy()


def features_to_pose(values, frame_id: int = 0) -> Pose3D:
    values = np.asarray(values, dtype=float)
    if values.shape != (N_FEATURES,):
        raise ValueError(f"expected {N_FEATURES} values, got shape {values.shape}")
    return Pose3D(frame_id, values.reshape(N_KEYPOINTS, 3))


def format_features_csv(sequences: Iterable[PoseSequence]) -> str:
    """One row per (frame, player): frame id, player, then the 51 features."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["frame", "player"] + [f"{axis}{k + 1}" for k in range(N_KEYPOINTS) for axis in "xyz"]
    writer.writerow(header)
    rows = []
    for seq in sequences:
        order = 0 if seq.player is Player.NEAR else 1
        for p in seq.poses:
            rows.append((p.frame_id, order,
                         [str(p.frame_id), seq.player.value]
                         + [repr(float(v)) for v in pose_features(p)]))
    rows.sort(key=lambda r: (r[0], r[1]))
    writer.writerows(r[2] for r in rows)
    return buf.getvalue()


def format_repaired_jsonl(sequences: Iterable[PoseSequence], replaced: dict[Player, frozenset[int]]) -> str:
    rows = []
    for seq in sequences:
        order = 0 if seq.player is Player.NEAR else 1
        fixed = replaced.get(seq.player, frozenset())
        for p in seq.poses:
            source = "interpolated" if p.frame_id in fixed else "detected"
            rows.append((p.frame_id, order, pose_to_json(p, seq.player, source)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return dumps_jsonl(r[2] for r in rows)
