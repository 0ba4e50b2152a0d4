"""Trajectory error statistics against ground truth."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import NoOverlap, ParseError
from .geometry import Point2
from .model import Player
from .tracker import PLAYERS, Track

DEFAULT_CM_PER_PX = 2.5  # top-view pixel footprint in the reference setup

# comparison planes
TOPVIEW = "topview"  # top-view pixels, cm_per_px cm each
WORLD = "world"  # meters
CAMERA = "camera"  # camera pixels
PLANES = (TOPVIEW, WORLD, CAMERA)


def px_to_cm(err_px: float, cm_per_px: float = DEFAULT_CM_PER_PX) -> float:
    if err_px < 0:
        raise ValueError("error must be nonnegative")
    if cm_per_px <= 0:
        raise ValueError("cm_per_px must be positive")
    return err_px * cm_per_px


def meters_to_topview(p: Point2, cm_per_px: float = DEFAULT_CM_PER_PX) -> Point2:
    """World meters to top-view pixels with the origin at the court corner."""
    k = 100.0 / cm_per_px
    return Point2(p.x * k, p.y * k)


@dataclass(frozen=True)
class ErrorReport:
    player: Player
    per_frame: tuple[tuple[int, float], ...]
    mean_px: float
    mean_cm: float
    max_px: float
    unit: str = "px"  # "m" when compared in world meters

    def to_dict(self) -> dict:
        return {
            "player": self.player.value,
            "unit": self.unit,
            "frames": len(self.per_frame),
            "mean": self.mean_px,
            "mean_cm": self.mean_cm,
            "max": self.max_px,
            "per_frame": [[f, e] for f, e in self.per_frame],
        }


def compare_trajectories(
    est: Track,
    gt: Track | Mapping[int, Point2],
    plane: str = TOPVIEW,
    cm_per_px: float = DEFAULT_CM_PER_PX,
    gt_plane: str | None = None,
) -> ErrorReport:
    """Per-frame Euclidean error between an estimated track and ground truth.

    ``plane`` selects what is compared: ``topview`` converts world meters to
    top-view pixels, ``world`` compares meters directly and ``camera``
    compares camera-pixel positions. Ground truth given as a mapping
    ``frame -> Point2`` is taken to be expressed in ``gt_plane`` (default:
    the comparison plane; ``world`` ground truth is converted for
    ``topview``). Frames missing from either side are skipped.

    Raises:
        NoOverlap: the two tracks share no frame.
    """
    if plane not in PLANES:
        raise ValueError(f"plane must be one of {PLANES}")
    est_pts = _plane_points(est, plane, cm_per_px)
    if isinstance(gt, Track):
        gt_pts = _plane_points(gt, plane, cm_per_px)
    else:
        gt_plane = gt_plane or plane
        if gt_plane == WORLD and plane == TOPVIEW:
            gt_pts = {f: meters_to_topview(p, cm_per_px) for f, p in gt.items()}
        elif gt_plane == plane:
            gt_pts = dict(gt)
        else:
            raise ValueError(f"cannot compare {gt_plane} ground truth in the {plane} plane")

    common = sorted(set(est_pts) & set(gt_pts))
    if not common:
        raise NoOverlap(f"no common frames for player '{est.player.value}'")
    errors = tuple((f, est_pts[f].dist(gt_pts[f])) for f in common)
    values = [e for _, e in errors]
    mean = math.fsum(values) / len(values)
    unit = "m" if plane == WORLD else "px"
    if plane == TOPVIEW:
        mean_cm = px_to_cm(mean, cm_per_px)
    elif plane == WORLD:
        mean_cm = mean * 100.0
    else:
        # camera pixels have no fixed ground footprint; report with the nominal scale
        mean_cm = px_to_cm(mean, cm_per_px)
    return ErrorReport(est.player, errors, mean, mean_cm, max(values), unit)


def _plane_points(track: Track, plane: str, cm_per_px: float) -> dict[int, Point2]:
    if plane == CAMERA:
        return {p.frame_id: p.cam for p in track.points}
    out = {}
    for p in track.points:
        if p.world is None:
            raise ValueError(f"track point at frame {p.frame_id} has no world position")
        out[p.frame_id] = meters_to_topview(p.world, cm_per_px) if plane == TOPVIEW else p.world
    return out


def load_ground_truth(path) -> tuple[dict[Player, dict[int, Point2]], str]:
    """Read ``frame,player,x,y`` (top-view pixels) or ``frame,player,world_x,world_y`` (meters).

    Returns the per-player positions and the plane they are expressed in.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        if {"world_x", "world_y"} <= cols:
            xk, yk, plane = "world_x", "world_y", WORLD
        elif {"x", "y"} <= cols:
            xk, yk, plane = "x", "y", TOPVIEW
        else:
            raise ParseError("ground truth needs columns x,y or world_x,world_y", line=1, path=path)
        if not {"frame", "player"} <= cols:
            raise ParseError("ground truth needs columns frame,player", line=1, path=path)
        out: dict[Player, dict[int, Point2]] = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                player = Player(row["player"])
                out.setdefault(player, {})[int(row["frame"])] = Point2(float(row[xk]), float(row[yk]))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
    return out, plane


def evaluate(
    tracks: Mapping[Player, Track],
    gt: Mapping[Player, Mapping[int, Point2]],
    gt_plane: str,
    plane: str = TOPVIEW,
    cm_per_px: float = DEFAULT_CM_PER_PX,
) -> list[ErrorReport]:
    return [
        compare_trajectories(tracks[p], gt[p], plane, cm_per_px, gt_plane)
        for p in PLAYERS if p in tracks and p in gt
    ]


def report_json(reports: list[ErrorReport], plane: str, cm_per_px: float) -> str:
    doc = {
        "plane": plane,
        "cm_per_px": cm_per_px,
        "players": [r.to_dict() for r in reports],
    }
    return json.dumps(doc, indent=2) + "\n"


def report_table(reports: list[ErrorReport]) -> str:
    lines = [f"{'player':<8}{'frames':>8}{'mean':>12}{'mean_cm':>12}{'max':>12}  unit"]
    for r in reports:
        lines.append(
            f"{r.player.value:<8}{len(r.per_frame):>8}{r.mean_px:>12.4f}"
            f"{r.mean_cm:>12.2f}{r.max_px:>12.4f}  {r.unit}"
        )
    return "\n".join(lines) + "\n"
