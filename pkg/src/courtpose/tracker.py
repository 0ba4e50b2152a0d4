"""Tracking-by-detection for a two-player court.

Three filters turn raw per-frame detections into two clean tracks:

1. drop every detection whose foot point is off the court polygon;
2. associate survivors with the two players by positional continuity,
   rejecting candidates that would require an implausible jump;
3. keep exactly one position per player per frame, filling misses from the
   neighbouring detected frames.

Tracks are then projected to the world ground plane with the session
homography.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DegenerateConfiguration, EmptyTrack, ParseError
from .geometry import Homography, Point2, apply_homography
from .model import BBox, Detection, FrameDetections, Player, foot_point

log = logging.getLogger(__name__)

DEFAULT_MAX_DISP = 60.0  # px per frame
DEFAULT_SPIKE_DISP = 20.0  # px per frame, two-sided jump test
PLAYERS = (Player.NEAR, Player.FAR)


class Source(str, enum.Enum):
    DETECTED = "detected"
    INTERPOLATED = "interpolated"


# ---------------------------------------------------------------- court region

def _cross(o: Point2, a: Point2, b: Point2) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def _on_segment(p: Point2, a: Point2, b: Point2, eps: float = 1e-9) -> bool:
    scale = max(1.0, abs(a.x), abs(a.y), abs(b.x), abs(b.y))
    if abs(_cross(a, b, p)) > eps * scale * max(a.dist(b), 1.0):
        return False
    return (min(a.x, b.x) - eps * scale <= p.x <= max(a.x, b.x) + eps * scale
            and min(a.y, b.y) - eps * scale <= p.y <= max(a.y, b.y) + eps * scale)


def point_in_polygon(p: Point2, polygon: Sequence[Point2]) -> bool:
    """Winding-number test; points on an edge or vertex count as inside."""
    winding = 0
    n = len(polygon)
    for i in range(n):
        a, b = polygon[i], polygon[(i + 1) % n]
        if _on_segment(p, a, b):
            return True
        if a.y <= p.y:
            if b.y > p.y and _cross(a, b, p) > 0:
                winding += 1
        elif b.y <= p.y and _cross(a, b, p) < 0:
            winding -= 1
    return winding != 0


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True
    return (
        (d1 == 0 and _on_segment(p1, q1, q2, 0.0))
        or (d2 == 0 and _on_segment(p2, q1, q2, 0.0))
        or (d3 == 0 and _on_segment(q1, p1, p2, 0.0))
        or (d4 == 0 and _on_segment(q2, p1, p2, 0.0))
    )


@dataclass(frozen=True)
class CourtRegion:
    """Simple polygon in camera pixels outlining the playing area."""

    polygon: tuple[Point2, ...]

    def __post_init__(self):
        poly = tuple(self.polygon)
        object.__setattr__(self, "polygon", poly)
        n = len(poly)
        if n < 3:
            raise DegenerateConfiguration(f"court polygon needs at least 3 vertices, got {n}")
        if abs(self.signed_area()) <= 0.0:
            raise DegenerateConfiguration("court polygon has zero area")
        for i, j in itertools.combinations(range(n), 2):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                raise DegenerateConfiguration(f"court polygon edges {i} and {j} intersect")

    def signed_area(self) -> float:
        poly = self.polygon
        return 0.5 * sum(
            poly[i].x * poly[(i + 1) % len(poly)].y - poly[(i + 1) % len(poly)].x * poly[i].y
            for i in range(len(poly))
        )

    def contains(self, p: Point2) -> bool:
        return point_in_polygon(p, self.polygon)


def parse_court(lines: Iterable[str], path=None) -> CourtRegion:
    pts = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'x y', got {len(parts)} values", line=lineno, path=path)
        try:
            pts.append(Point2(float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
    if len(pts) < 3:
        raise ParseError(f"court polygon needs at least 3 points, got {len(pts)}", path=path)
    return CourtRegion(tuple(pts))


def load_court(path) -> CourtRegion:
    path = Path(path)
    with path.open() as fh:
        return parse_court(fh, path=path)


def format_court(court: CourtRegion) -> str:
    return "".join(f"{p.x!r} {p.y!r}\n" for p in court.polygon)


# ---------------------------------------------------------------- tracks

@dataclass(frozen=True, slots=True)
class TrackPoint:
    frame_id: int
    cam: Point2
    world: Point2 | None = None
    source: Source = Source.DETECTED
    bbox: BBox | None = None  # detector box behind a Detected point


@dataclass(frozen=True)
class Track:
    player: Player
    points: tuple[TrackPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def frame_ids(self) -> list[int]:
        return [p.frame_id for p in self.points]

    def by_frame(self) -> dict[int, TrackPoint]:
        return {p.frame_id: p for p in self.points}


# ---------------------------------------------------------------- heuristics

def filter_by_court(frame: FrameDetections, court: CourtRegion) -> FrameDetections:
    """Keep person detections whose foot point is on the court (edges included)."""
    kept = tuple(
        d for d in frame.detections
        if d.class_label == "person" and court.contains(foot_point(d.bbox))
    )
    return FrameDetections(frame.frame_id, kept, frame.image_size)


def associate(
    prev_positions: Mapping[Player, Point2 | None],
    frame: FrameDetections,
    max_disp: float,
    gaps: Mapping[Player, int] | None = None,
) -> dict[Player, Detection | None]:
    """Assign at most one detection to each player by positional continuity.

    Every one-to-one matching between players and candidates is enumerated.
    A pairing is admissible when the foot-point distance to the player's
    previous position is at most ``max_disp * gap`` (``gap`` frames since that
    position was observed, default 1). Among admissible matchings the one with
    the most pairs wins, then the smallest summed distance, then the highest
    summed score, then the lowest candidate indices. Unassigned candidates are
    treated as false positives.
    """
    if max_disp <= 0:
        raise ValueError("max_disp must be positive")
    players = [p for p in PLAYERS if p in prev_positions]
    cands = frame.detections
    feet = [foot_point(d.bbox) for d in cands]

    allowed: dict[Player, dict[int, float]] = {}
    for player in players:
        prev = prev_positions[player]
        allowed[player] = {}
        if prev is None:
            continue
        budget = max_disp * (gaps.get(player, 1) if gaps else 1)
        for i, f in enumerate(feet):
            d = prev.dist(f)
            if d <= budget:
                allowed[player][i] = d

    best_key = None
    best: tuple = tuple(None for _ in players)
    options = [[None, *allowed[p].keys()] for p in players]
    for combo in itertools.product(*options):
        chosen = [c for c in combo if c is not None]
        if len(set(chosen)) != len(chosen):
            continue
        cost = sum(allowed[p][c] for p, c in zip(players, combo) if c is not None)
        score = sum(cands[c].score for c in chosen)
        key = (-len(chosen), cost, -score, tuple(math.inf if c is None else c for c in combo))
        if best_key is None or key < best_key:
            best_key, best = key, combo
    out = {p: (cands[c] if c is not None else None) for p, c in zip(players, best)}
    for p in PLAYERS:
        out.setdefault(p, None)
    return out


def seed_players(frame: FrameDetections) -> dict[Player, Detection] | None:
    """Identity seeding: with exactly two candidates, the lower one on screen is Near."""
    if len(frame.detections) != 2:
        return None
    a, b = frame.detections
    if foot_point(b.bbox).y > foot_point(a.bbox).y:
        a, b = b, a
    return {Player.NEAR: a, Player.FAR: b}


def reject_spikes(
    assignments: Mapping[int, Mapping[Player, Detection]],
    spike_disp: float = DEFAULT_SPIKE_DISP,
) -> dict[int, dict[Player, Detection]]:
    """Drop detections that jump out of line with their detected neighbours.

    A player's detection at ``t`` is dropped when its foot point is more than
    ``spike_disp`` per elapsed frame from both the previous kept detection and
    the next detection, and also lies more than ``spike_disp * min(t - t_prev,
    t_next - t)`` from the time-weighted interpolation between the two. An
    out-and-back excursion is caught; fast steady motion stays on the
    interpolation line and is kept. This catches a false positive that
    slipped through the association gate while the player was missed. Each
    scan runs left to right so a dropped point never serves as a neighbour,
    and scans repeat until nothing more is dropped.
    """
    if spike_disp <= 0:
        raise ValueError("spike_disp must be positive")
    out = {f: dict(d) for f, d in assignments.items()}
    for player in PLAYERS:
        # repeat until stable: a chain of false positives can shield its first member
        while _drop_spikes_once(out, player, spike_disp):
            pass
    return {f: d for f, d in out.items() if d}


def _drop_spikes_once(out: dict[int, dict[Player, Detection]], player: Player, spike_disp: float) -> bool:
    seq = sorted((f, foot_point(d[player].bbox)) for f, d in out.items() if player in d)
    dropped = False
    prev = None
    for i, (t, p) in enumerate(seq):
        if prev is not None and i + 1 < len(seq):
            tp, pp = prev
            tn, pn = seq[i + 1]
            jump_in = p.dist(pp) > spike_disp * (t - tp)
            jump_out = pn.dist(p) > spike_disp * (tn - t)
            off_line = p.dist(_lerp(pp, pn, (t - tp) / (tn - tp))) > spike_disp * min(t - tp, tn - t)
            if jump_in and jump_out and off_line:
                log.debug("dropping %s detection at frame %d as a spike", player.value, t)
                del out[t][player]
                dropped = True
                continue
        prev = (t, p)
    return dropped


def track_detections(
    frames: Sequence[FrameDetections],
    court: CourtRegion,
    max_disp: float = DEFAULT_MAX_DISP,
    spike_disp: float | None = DEFAULT_SPIKE_DISP,
) -> dict[int, dict[Player, Detection]]:
    """Run court filtering, continuity association and spike rejection over a frame stream.

    Returns, per frame id, the detections assigned to each player (players
    that missed in a frame are absent). Frames before the seeding frame carry
    no assignments. ``spike_disp=None`` skips :func:`reject_spikes`.
    """
    assignments: dict[int, dict[Player, Detection]] = {}
    last_pos: dict[Player, Point2] = {}
    last_frame: dict[Player, int] = {}
    seeded = False
    for raw in frames:
        frame = filter_by_court(raw, court)
        if not seeded:
            seed = seed_players(frame)
            if seed is None:
                continue
            seeded = True
            log.debug("players seeded at frame %d", frame.frame_id)
            matched: dict[Player, Detection | None] = dict(seed)
        else:
            gaps = {p: frame.frame_id - last_frame[p] for p in PLAYERS}
            matched = associate(last_pos, frame, max_disp, gaps)
        hits = {}
        for player, det in matched.items():
            if det is None:
                continue
            hits[player] = det
            last_pos[player] = foot_point(det.bbox)
            last_frame[player] = frame.frame_id
        if hits:
            assignments[frame.frame_id] = hits
    if spike_disp is not None:
        assignments = reject_spikes(assignments, spike_disp)
    return assignments


def _lerp(a: Point2, b: Point2, t: float) -> Point2:
    return Point2(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))


def enforce_two_players(
    assignments: Mapping[int, Mapping[Player, Detection]],
    total_frames: int,
) -> tuple[Track, Track]:
    """Build one gap-free track per player over frames ``0 .. total_frames - 1``.

    Each player's span runs from its first to its last detected frame; leading
    and trailing misses are trimmed. Interior misses are filled by linear
    interpolation in time between the nearest detected neighbours.
    """
    tracks = []
    for player in PLAYERS:
        detected = sorted(
            (f, dets[player]) for f, dets in assignments.items()
            if player in dets and 0 <= f < total_frames
        )
        if not detected:
            raise EmptyTrack(f"player '{player.value}' was never detected")
        points = []
        for (ta, da), (tb, db) in zip(detected, detected[1:]):
            pa, pb = foot_point(da.bbox), foot_point(db.bbox)
            points.append(TrackPoint(ta, pa, source=Source.DETECTED, bbox=da.bbox))
            for t in range(ta + 1, tb):
                points.append(TrackPoint(t, _lerp(pa, pb, (t - ta) / (tb - ta)),
                                         source=Source.INTERPOLATED))
        t_last, d_last = detected[-1]
        points.append(TrackPoint(t_last, foot_point(d_last.bbox), source=Source.DETECTED,
                                 bbox=d_last.bbox))
        tracks.append(Track(player, tuple(points)))
    return tracks[0], tracks[1]


def positions_to_world(track: Track, h: Homography) -> Track:
    """Set every point's world position to ``h`` applied to its camera position."""
    return replace(track, points=tuple(
        replace(p, world=apply_homography(h, p.cam)) for p in track.points
    ))


def run_tracking(
    frames: Sequence[FrameDetections],
    court: CourtRegion,
    h: Homography,
    max_disp: float = DEFAULT_MAX_DISP,
    spike_disp: float | None = DEFAULT_SPIKE_DISP,
) -> tuple[Track, Track]:
    """Full chain: filter, associate, fill, project. Returns (near, far)."""
    assignments = track_detections(frames, court, max_disp, spike_disp)
    total = frames[-1].frame_id + 1 if frames else 0
    near, far = enforce_two_players(assignments, total)
    return positions_to_world(near, h), positions_to_world(far, h)


# ---------------------------------------------------------------- CSV

TRACK_FIELDS = ("frame", "player", "cam_x", "cam_y", "world_x", "world_y", "source")


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def format_tracks_csv(tracks: Iterable[Track]) -> str:
    rows = []
    for track in tracks:
        order = PLAYERS.index(track.player)
        for p in track.points:
            rows.append((p.frame_id, order, [
                str(p.frame_id), track.player.value, _fmt(p.cam.x), _fmt(p.cam.y),
                _fmt(p.world.x if p.world else None), _fmt(p.world.y if p.world else None),
                p.source.value,
            ]))
    rows.sort(key=lambda r: (r[0], r[1]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACK_FIELDS)
    writer.writerows(r[2] for r in rows)
    return buf.getvalue()


def load_tracks_csv(path) -> dict[Player, Track]:
    path = Path(path)
    points: dict[Player, list[TrackPoint]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACK_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"missing columns {sorted(missing)}", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            try:
                player = Player(row["player"])
                world = None
                if row["world_x"] and row["world_y"]:
                    world = Point2(float(row["world_x"]), float(row["world_y"]))
                points.setdefault(player, []).append(TrackPoint(
                    frame_id=int(row["frame"]),
                    cam=Point2(float(row["cam_x"]), float(row["cam_y"])),
                    world=world,
                    source=Source(row["source"]),
                ))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=path) from None
    out = {}
    for player, pts in points.items():
        pts.sort(key=lambda p: p.frame_id)
        out[player] = Track(player, tuple(pts))
    return out
