"""Synthetic badminton scene with known ground truth.

Two players wander their own half of the court; their foot points are pushed
through a known world -> camera homography, dressed up as detector boxes, and
corrupted with jitter, dropped detections and in-court false positives. Each
player also gets a smoothly oscillating skeleton with isolated spikes injected
at recorded frames. Every stage of the pipeline can be checked against the
generating values.

Randomness comes from numpy's Philox counter-based generator; the seed is
split into one independent stream per concern so, e.g., changing ``fp_rate``
leaves the trajectories and miss pattern unchanged.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CourtPoseError, InvalidConfig
from .geometry import (
    Correspondence,
    Homography,
    Point2,
    apply_homography,
    estimate_homography,
    format_correspondences,
    invert_homography,
    local_scale,
)
from .model import (
    DEFAULT_IMAGE_SIZE,
    N_KEYPOINTS,
    BBox,
    Detection,
    FrameDetections,
    Player,
    Pose3D,
    dump_detections,
    dump_poses,
)
from .pose import PoseSequence
from .tracker import PLAYERS, CourtRegion, format_court

# 20 ft x 44 ft in meters
COURT_WIDTH_M = 6.096
COURT_LENGTH_M = 13.411
DEFAULT_COURT_WORLD = ((0.0, 0.0), (COURT_WIDTH_M, 0.0), (COURT_WIDTH_M, COURT_LENGTH_M), (0.0, COURT_LENGTH_M))
# where those corners land in an 852x472 broadcast-style frame
DEFAULT_COURT_IMAGE = ((226.0, 440.0), (626.0, 440.0), (546.0, 110.0), (306.0, 110.0))

BBOX_ASPECT = 0.45  # width / height
WAYPOINT_INSET = 0.05  # fraction of the court kept clear of the lines


def default_camera_h() -> Homography:
    """World -> camera homography placing the court in a typical broadcast view."""
    return estimate_homography([
        Correspondence(Point2(*w), Point2(*c))
        for w, c in zip(DEFAULT_COURT_WORLD, DEFAULT_COURT_IMAGE)
    ])


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    n_frames: int = 500
    court_world: tuple[tuple[float, float], ...] = DEFAULT_COURT_WORLD
    camera_h: tuple[tuple[float, ...], ...] | None = None  # world -> camera; None = default view
    jitter_sigma: float = 0.0  # px, per axis
    miss_rate: float = 0.0
    fp_rate: float = 0.0
    pose_spike_rate: float = 0.0
    pose_spike_magnitude: float = 0.6  # model units
    max_speed: float = 0.1  # m per frame
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    n_spectators: int = 0  # fixed off-court people, always detected

    def __post_init__(self):
        object.__setattr__(self, "court_world", tuple(tuple(float(v) for v in p) for p in self.court_world))
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        if self.camera_h is None:
            object.__setattr__(self, "camera_h", tuple(map(tuple, default_camera_h().tolist())))
        else:
            object.__setattr__(self, "camera_h", tuple(tuple(float(v) for v in row) for row in self.camera_h))
        self.validate()

    def validate(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise InvalidConfig(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.n_frames < 3:
            raise InvalidConfig("n_frames must be at least 3")
        for name in ("miss_rate", "fp_rate", "pose_spike_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1], got {v}")
        if self.jitter_sigma < 0:
            raise InvalidConfig("jitter_sigma must be nonnegative")
        if self.max_speed <= 0:
            raise InvalidConfig("max_speed must be positive")
        if self.pose_spike_magnitude <= 0:
            raise InvalidConfig("pose_spike_magnitude must be positive")
        if self.n_spectators < 0:
            raise InvalidConfig("n_spectators must be nonnegative")
        if len(self.court_world) != 4:
            raise InvalidConfig("court_world needs exactly 4 corners")
        try:
            h = self.homography
            CourtRegion(tuple(Point2(*p) for p in self.court_world))
            corners = [apply_homography(h, Point2(*p)) for p in self.court_world]
        except (CourtPoseError, ValueError) as exc:
            raise InvalidConfig(f"unusable court/camera geometry: {exc}") from None
        width, height = self.image_size
        for c in corners:
            if not (0 <= c.x <= width and 0 <= c.y <= height):
                raise InvalidConfig(f"court corner projects outside the image at ({c.x:.1f}, {c.y:.1f})")

    @property
    def homography(self) -> Homography:
        return Homography(np.array(self.camera_h))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["court_world"] = [list(p) for p in self.court_world]
        d["camera_h"] = [list(r) for r in self.camera_h]
        d["image_size"] = list(self.image_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown scene config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None

    @classmethod
    def load(cls, path) -> "SceneConfig":
        with Path(path).open() as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"{path}: invalid JSON: {exc.msg}") from None
        return cls.from_dict(d)


@dataclass(frozen=True)
class GroundTruth:
    world_tracks: dict[Player, tuple[Point2, ...]]
    cam_tracks: dict[Player, tuple[Point2, ...]]
    poses: dict[Player, PoseSequence]
    injected_outlier_frames: dict[Player, frozenset[int]]


@dataclass(frozen=True)
class Scene:
    config: SceneConfig
    truth: GroundTruth
    frames: tuple[FrameDetections, ...]
    noisy_poses: dict[Player, list[Pose3D]] = field(repr=False)
    misses: dict[Player, frozenset[int]] = field(repr=False)

    @property
    def detections_jsonl(self) -> str:
        return dump_detections(self.frames)

    @property
    def poses_jsonl(self) -> str:
        return dump_poses(self.noisy_poses)

    def ground_truth_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["frame", "player", "world_x", "world_y"])
        for t in range(self.config.n_frames):
            for player in PLAYERS:
                p = self.truth.world_tracks[player][t]
                writer.writerow([t, player.value, repr(p.x), repr(p.y)])
        return buf.getvalue()

    def court_region(self) -> CourtRegion:
        h = self.config.homography
        return CourtRegion(tuple(apply_homography(h, Point2(*p)) for p in self.config.court_world))

    def calibration_points(self) -> list[Correspondence]:
        h = self.config.homography
        return [Correspondence(apply_homography(h, Point2(*p)), Point2(*p)) for p in self.config.court_world]

    def write(self, out_dir) -> dict[str, Path]:
        """Write every scene artifact into ``out_dir``; returns name -> path."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "detections": ("detections.jsonl", self.detections_jsonl),
            "poses": ("poses.jsonl", self.poses_jsonl),
            "ground_truth": ("ground_truth.csv", self.ground_truth_csv()),
            "scene_config": ("scene_config.json", json.dumps(self.config.to_dict(), indent=2) + "\n"),
            "calibration": ("calibration.txt", format_correspondences(self.calibration_points())),
            "court": ("court.txt", format_court(self.court_region())),
        }
        paths = {}
        for key, (name, text) in files.items():
            path = out / name
            path.write_text(text)
            paths[key] = path
        return paths


# ---------------------------------------------------------------- generation

def _streams(seed: int) -> dict[str, np.random.Generator]:
    names = ("trajectory", "bbox", "jitter", "miss", "fp", "pose", "spectator")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.Generator(np.random.Philox(c)) for n, c in zip(names, children)}


def _bilinear(corners: np.ndarray, u: float, v: float) -> np.ndarray:
    """Court point at fraction ``u`` across and ``v`` along (corners in cyclic order)."""
    c0, c1, c2, c3 = corners
    return (1 - v) * ((1 - u) * c0 + u * c1) + v * ((1 - u) * c3 + u * c2)


def _near_is_low_v(cfg: SceneConfig, corners: np.ndarray) -> bool:
    h = cfg.homography
    y_low = apply_homography(h, Point2(*((corners[0] + corners[1]) / 2))).y
    y_high = apply_homography(h, Point2(*((corners[2] + corners[3]) / 2))).y
    return y_low >= y_high


def _random_waypoint_track(rng, corners, v_range, n_frames, max_speed) -> list[Point2]:
    lo, hi = WAYPOINT_INSET, 1.0 - WAYPOINT_INSET

    def waypoint():
        return _bilinear(corners, rng.uniform(lo, hi), rng.uniform(*v_range))

    pos = waypoint()
    target = waypoint()
    speed = rng.uniform(0.3, 1.0) * max_speed
    out = []
    for _ in range(n_frames):
        out.append(Point2(float(pos[0]), float(pos[1])))
        delta = target - pos
        dist = float(np.hypot(*delta))
        if dist <= speed:
            pos = target
            target = waypoint()
            speed = rng.uniform(0.3, 1.0) * max_speed
        else:
            pos = pos + delta * (speed / dist)
    return out


def _box_at(foot: Point2, height: float) -> BBox:
    w = BBOX_ASPECT * height
    return BBox(foot.x - w / 2.0, foot.y - height, w, height)


# standing skeleton, meters, y up, COCO-17 order
_BASE_SKELETON = np.array([
    [0.00, 1.62, 0.08],   # nose
    [-0.03, 1.66, 0.06], [0.03, 1.66, 0.06],
    [-0.07, 1.64, 0.00], [0.07, 1.64, 0.00],
    [-0.19, 1.42, 0.00], [0.19, 1.42, 0.00],
    [-0.24, 1.12, 0.02], [0.24, 1.12, 0.02],
    [-0.26, 0.84, 0.06], [0.26, 0.84, 0.06],
    [-0.11, 0.95, 0.00], [0.11, 0.95, 0.00],
    [-0.12, 0.50, 0.03], [0.12, 0.50, 0.03],
    [-0.12, 0.07, 0.00], [0.12, 0.07, 0.00],
])
# limbs swing more than the head and torso
_AMPLITUDE = np.array([0.03] * 5 + [0.04] * 2 + [0.10] * 2 + [0.15] * 2 + [0.03] * 2 + [0.08] * 2 + [0.12] * 2)


def _clean_poses(rng, n_frames: int) -> np.ndarray:
    freq = rng.uniform(1 / 60, 1 / 30)
    phase = rng.uniform(0, 2 * np.pi, size=(N_KEYPOINTS, 3))
    amp = _AMPLITUDE[:, None] * rng.uniform(0.5, 1.0, size=(N_KEYPOINTS, 3))
    t = np.arange(n_frames)[:, None, None]
    return _BASE_SKELETON[None] + amp[None] * np.sin(2 * np.pi * freq * t + phase[None])


def _inject_spikes(rng, clean: np.ndarray, rate: float, magnitude: float) -> tuple[np.ndarray, frozenset[int]]:
    noisy = clean.copy()
    spiked = []
    n = len(clean)
    for t in range(1, n - 1):
        hit = rng.random() < rate
        if not hit or (spiked and spiked[-1] == t - 1):
            continue
        k = rng.choice(N_KEYPOINTS, size=int(rng.integers(1, 4)), replace=False)
        d = rng.normal(size=(len(k), 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        noisy[t, k] += magnitude * d
        spiked.append(t)
    return noisy, frozenset(spiked)


def generate_scene(cfg: SceneConfig) -> Scene:
    """Generate ground truth and the corrupted detector / pose inputs for ``cfg``."""
    rng = _streams(cfg.seed)
    corners = np.array(cfg.court_world)
    h = cfg.homography
    n = cfg.n_frames

    near_low = _near_is_low_v(cfg, corners)
    halves = {
        Player.NEAR: (WAYPOINT_INSET, 0.5 - WAYPOINT_INSET) if near_low else (0.5 + WAYPOINT_INSET, 1 - WAYPOINT_INSET),
        Player.FAR: (0.5 + WAYPOINT_INSET, 1 - WAYPOINT_INSET) if near_low else (WAYPOINT_INSET, 0.5 - WAYPOINT_INSET),
    }
    world = {p: tuple(_random_waypoint_track(rng["trajectory"], corners, halves[p], n, cfg.max_speed))
             for p in PLAYERS}
    cam = {p: tuple(apply_homography(h, q) for q in world[p]) for p in PLAYERS}

    # box height follows the local image scale, relative to the near baseline
    ref = Point2(*((corners[0] + corners[1]) / 2 if near_low else (corners[2] + corners[3]) / 2))
    ref_scale = local_scale(h, ref)
    base_height = {p: rng["bbox"].uniform(100, 140) for p in PLAYERS}

    def height_at(p_world: Point2, base: float) -> float:
        return base * local_scale(h, p_world) / ref_scale

    spectators = []
    for _ in range(cfg.n_spectators):
        u = -0.25 if rng["spectator"].random() < 0.5 else 1.25
        spot = Point2(*_bilinear(corners, u, rng["spectator"].uniform(0.1, 0.9)))
        foot = apply_homography(h, spot)
        box = _box_at(foot, height_at(spot, 120.0))
        if box.x >= 0 and box.x + box.w <= cfg.image_size[0]:
            spectators.append(box)

    frames = []
    misses = {p: set() for p in PLAYERS}
    for t in range(n):
        dets = []
        for player in PLAYERS:
            miss = rng["miss"].random() < cfg.miss_rate
            dx, dy = rng["jitter"].normal(0.0, 1.0, size=2) * cfg.jitter_sigma
            score = float(rng["bbox"].uniform(0.85, 1.0))
            if miss:
                misses[player].add(t)
                continue
            box = _box_at(cam[player][t], height_at(world[player][t], base_height[player]))
            if cfg.jitter_sigma > 0:
                box = BBox(box.x + dx, box.y + dy, box.w, box.h)
            dets.append(Detection(box, score, "person"))
        if rng["fp"].random() < cfg.fp_rate:
            spot = Point2(*_bilinear(corners, rng["fp"].uniform(0, 1), rng["fp"].uniform(0, 1)))
            box = _box_at(apply_homography(h, spot), height_at(spot, rng["fp"].uniform(100, 140)))
            dets.append(Detection(box, float(rng["fp"].uniform(0.3, 0.9)), "person"))
        for box in spectators:
            dets.append(Detection(box, 0.95, "person"))
        order = rng["bbox"].permutation(len(dets))
        frames.append(FrameDetections(t, tuple(dets[i] for i in order), cfg.image_size))

    clean_poses, noisy_poses, injected = {}, {}, {}
    for player in PLAYERS:
        clean = _clean_poses(rng["pose"], n)
        noisy, spikes = _inject_spikes(rng["pose"], clean, cfg.pose_spike_rate, cfg.pose_spike_magnitude)
        clean_poses[player] = PoseSequence(player, tuple(Pose3D(t, clean[t]) for t in range(n)))
        noisy_poses[player] = [Pose3D(t, noisy[t]) for t in range(n)]
        injected[player] = spikes

    truth = GroundTruth(world, cam, clean_poses, injected)
    return Scene(cfg, truth, tuple(frames), noisy_poses, {p: frozenset(m) for p, m in misses.items()})


def camera_to_world(cfg: SceneConfig) -> Homography:
    return invert_homography(cfg.homography)

