"""Records consumed from external detectors and pose networks, and their JSONL I/O.

detections.jsonl, one frame per line::

    {"frame": 0, "image_size": [852, 472],
     "detections": [{"bbox": [x, y, w, h], "score": 0.98, "class": "person"}]}

poses.jsonl, one (frame, player) per line::

    {"frame": 0, "player": "near", "keypoints3d": [[x, y, z], ... 17 rows],
     "keypoints2d": [[x, y, c], ... 17 rows]}        # keypoints2d optional

``keypoints3d`` may be ``null`` to mark a frame where lifting failed. Keypoints
follow the COCO-17 order in :data:`KEYPOINT_NAMES`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import DuplicateFrame, NonMonotonicFrameIds, ParseError
from .geometry import Point2

KEYPOINT_NAMES = (
    "nose",
    "left_eye", "right_eye",
    "left_ear", "right_ear",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
)
N_KEYPOINTS = len(KEYPOINT_NAMES)

# frame size of the broadcast footage the defaults are tuned for
DEFAULT_IMAGE_SIZE = (852, 472)


class Player(str, enum.Enum):
    NEAR = "near"
    FAR = "far"


@dataclass(frozen=True, slots=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"non-finite bbox {self.as_list()}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"bbox needs positive size, got w={self.w} h={self.h}")

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def clamp(self, width: float, height: float) -> "BBox":
        # identity for boxes already inside, keeps load/dump lossless
        if self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height:
            return self
        x0 = min(max(self.x, 0.0), width)
        y0 = min(max(self.y, 0.0), height)
        x1 = min(max(self.x + self.w, 0.0), width)
        y1 = min(max(self.y + self.h, 0.0), height)
        return BBox(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True, slots=True)
class Detection:
    bbox: BBox
    score: float
    class_label: str = "person"

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class FrameDetections:
    frame_id: int
    detections: tuple[Detection, ...]
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        if self.frame_id < 0:
            raise ValueError(f"negative frame id {self.frame_id}")
        object.__setattr__(self, "detections", tuple(self.detections))


def foot_point(b: BBox) -> Point2:
    """Bottom-centre of the box, taken as where the player touches the floor."""
    return Point2(b.x + b.w / 2.0, b.y + b.h)


@dataclass(frozen=True, eq=False)
class Pose2D:
    frame_id: int
    keypoints: np.ndarray  # (17, 3): x px, y px, confidence

    def __post_init__(self):
        kp = np.array(self.keypoints, dtype=float)
        if kp.shape != (N_KEYPOINTS, 3):
            raise ValueError(f"expected {N_KEYPOINTS} (x, y, c) triples, got shape {kp.shape}")
        if np.any((kp[:, 2] < 0) | (kp[:, 2] > 1)):
            raise ValueError("keypoint confidence outside [0, 1]")
        kp.setflags(write=False)
        object.__setattr__(self, "keypoints", kp)

    def __eq__(self, other):
        if not isinstance(other, Pose2D):
            return NotImplemented
        return self.frame_id == other.frame_id and np.array_equal(self.keypoints, other.keypoints)


@dataclass(frozen=True, eq=False)
class Pose3D:
    """One lifted skeleton. ``keypoints`` is a read-only (17, 3) array.

    An invalid pose (lifting failed or the frame is missing) carries NaNs.
    """

    frame_id: int
    keypoints: np.ndarray
    valid: bool = True
    pose2d: Pose2D | None = field(default=None, repr=False)

    def __post_init__(self):
        kp = np.array(self.keypoints, dtype=float)
        if kp.shape != (N_KEYPOINTS, 3):
            raise ValueError(f"expected {N_KEYPOINTS} (x, y, z) keypoints, got shape {kp.shape}")
        if self.valid and not np.all(np.isfinite(kp)):
            raise ValueError("valid pose has non-finite keypoints")
        kp.setflags(write=False)
        object.__setattr__(self, "keypoints", kp)

    @classmethod
    def missing(cls, frame_id: int) -> "Pose3D":
        return cls(frame_id, np.full((N_KEYPOINTS, 3), np.nan), valid=False)

    def __eq__(self, other):
        if not isinstance(other, Pose3D):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.valid == other.valid
            and np.array_equal(self.keypoints, other.keypoints, equal_nan=True)
            and self.pose2d == other.pose2d
        )


# ---------------------------------------------------------------- parsing

def _json_lines(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno, path=path) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno, path=path)
            yield lineno, obj


def _frame_id(obj: dict, lineno: int, path: Path) -> int:
    frame = obj.get("frame")
    if not isinstance(frame, int) or isinstance(frame, bool) or frame < 0:
        raise ParseError(f"'frame' must be a nonnegative integer, got {frame!r}", line=lineno, path=path)
    return frame


def _check_order(prev: int | None, frame: int, lineno: int, path: Path, what: str = "frame"):
    if prev is None:
        return
    if frame == prev:
        raise DuplicateFrame(f"duplicate {what} {frame}", line=lineno, path=path)
    if frame < prev:
        raise NonMonotonicFrameIds(f"{what} {frame} follows {prev}", line=lineno, path=path)


def _parse_detection(d, image_size, lineno, path) -> Detection:
    if not isinstance(d, dict):
        raise ParseError("detection must be an object", line=lineno, path=path)
    try:
        x, y, w, h = (float(v) for v in d["bbox"])
        score = float(d["score"])
        label = str(d.get("class", "person"))
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score {score} outside [0, 1]")
        box = BBox(x, y, w, h).clamp(*image_size)
        return Detection(box, score, label)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad detection: {exc}", line=lineno, path=path) from None


def load_detections(path) -> list[FrameDetections]:
    """Parse detections.jsonl. Boxes are clamped to the image; frames must strictly increase.

    Raises:
        ParseError: malformed line, out-of-range score, or a box fully outside
            the image. The message carries the line number.
        DuplicateFrame, NonMonotonicFrameIds: frame ordering violations.
    """
    path = Path(path)
    frames: list[FrameDetections] = []
    prev = None
    for lineno, obj in _json_lines(path):
        frame = _frame_id(obj, lineno, path)
        _check_order(prev, frame, lineno, path)
        prev = frame
        try:
            width, height = (int(v) for v in obj.get("image_size", DEFAULT_IMAGE_SIZE))
        except (TypeError, ValueError):
            raise ParseError("'image_size' must be [width, height]", line=lineno, path=path) from None
        if width <= 0 or height <= 0:
            raise ParseError("'image_size' must be positive", line=lineno, path=path)
        raw = obj.get("detections", [])
        if not isinstance(raw, list):
            raise ParseError("'detections' must be a list", line=lineno, path=path)
        dets = tuple(_parse_detection(d, (width, height), lineno, path) for d in raw)
        frames.append(FrameDetections(frame, dets, (width, height)))
    return frames


def _keypoint_array(raw, width: int, name: str, lineno: int, path: Path) -> np.ndarray:
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"'{name}' is not numeric", line=lineno, path=path) from None
    if arr.shape != (N_KEYPOINTS, width):
        raise ParseError(
            f"'{name}' must hold {N_KEYPOINTS} rows of {width} values, got shape {arr.shape}",
            line=lineno, path=path,
        )
    return arr


def load_poses(path) -> dict[Player, list[Pose3D]]:
    """Parse poses.jsonl into per-player pose lists ordered by frame.

    Frame ids must strictly increase within each player's stream.
    """
    path = Path(path)
    out: dict[Player, list[Pose3D]] = {}
    for lineno, obj in _json_lines(path):
        frame = _frame_id(obj, lineno, path)
        try:
            player = Player(obj.get("player"))
        except ValueError:
            raise ParseError(f"'player' must be 'near' or 'far', got {obj.get('player')!r}",
                             line=lineno, path=path) from None
        seq = out.setdefault(player, [])
        _check_order(seq[-1].frame_id if seq else None, frame, lineno, path,
                     what=f"frame for player {player.value}")
        raw3d = obj.get("keypoints3d")
        if raw3d is None:
            kp = np.full((N_KEYPOINTS, 3), np.nan)
            valid = False
        else:
            kp = _keypoint_array(raw3d, 3, "keypoints3d", lineno, path)
            if not np.all(np.isfinite(kp)):
                raise ParseError("'keypoints3d' has non-finite values", line=lineno, path=path)
            valid = True
        pose2d = None
        if obj.get("keypoints2d") is not None:
            kp2 = _keypoint_array(obj["keypoints2d"], 3, "keypoints2d", lineno, path)
            try:
                pose2d = Pose2D(frame, kp2)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
        seq.append(Pose3D(frame, kp, valid, pose2d))
    return out


# ---------------------------------------------------------------- serialization

def detections_to_json(frame: FrameDetections) -> dict:
    return {
        "frame": frame.frame_id,
        "image_size": list(frame.image_size),
        "detections": [
            {"bbox": d.bbox.as_list(), "score": d.score, "class": d.class_label}
            for d in frame.detections
        ],
    }


def pose_to_json(pose: Pose3D, player: Player, source: str | None = None) -> dict:
    obj = {
        "frame": pose.frame_id,
        "player": player.value,
        "keypoints3d": pose.keypoints.tolist() if pose.valid else None,
    }
    if pose.pose2d is not None:
        obj["keypoints2d"] = pose.pose2d.keypoints.tolist()
    if source is not None:
        obj["source"] = source
    return obj


def dumps_jsonl(objs: Iterable[dict]) -> str:
    return "".join(json.dumps(o, separators=(", ", ": ")) + "\n" for o in objs)


def dump_detections(frames: Iterable[FrameDetections]) -> str:
    return dumps_jsonl(detections_to_json(f) for f in frames)


def dump_poses(poses: dict[Player, list[Pose3D]]) -> str:
    """Serialize per-player poses, interleaved by frame (near before far)."""
    rows = [
        (pose.frame_id, 0 if player is Player.NEAR else 1, pose_to_json(pose, player))
        for player, seq in poses.items()
        for pose in seq
    ]
    rows.sort(key=lambda r: (r[0], r[1]))
    return dumps_jsonl(r[2] for r in rows)
