"""Command-line entry point.

Subcommands: calibrate, track, repair-poses, evaluate, synth, render, pipeline.
Exit status is 0 on success, 1 when the inputs are readable but unusable
(degenerate calibration, a player never seen, ...) and 2 for usage, I/O and
parse errors. Diagnostics go to stderr as a single ``error: ...`` line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import CourtPoseError, DomainError, InputError
from .evaluation import (
    DEFAULT_CM_PER_PX,
    PLANES,
    TOPVIEW,
    evaluate as evaluate_tracks,
    load_ground_truth,
    report_json,
    report_table,
)
from .geometry import (
    Homography,
    estimate_homography,
    inverse_reprojection_error,
    load_correspondences,
    reprojection_error,
)
from .model import load_detections, load_poses
from .pose import (
    DEFAULT_MARGIN,
    DEFAULT_VMAX,
    PoseSequence,
    expand_bbox,
    format_features_csv,
    format_repaired_jsonl,
    repair,
)
from .render import render_court_svg, render_error_svg
from .synth import SceneConfig, generate_scene
from .tracker import (
    DEFAULT_MAX_DISP,
    DEFAULT_SPIKE_DISP,
    PLAYERS,
    Source,
    format_tracks_csv,
    load_court,
    load_tracks_csv,
    run_tracking,
)

log = logging.getLogger("courtpose")

DEFAULT_MAX_REPROJ_PX = 3.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write(path, text: str) -> Path:
    path = Path(path)
    if path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _positive(name, value):
    if value is None or value <= 0:
        raise UsageError(f"--{name} must be positive, got {value}")


# ---------------------------------------------------------------- stages

def calibrate(points, out) -> dict:
    corr = load_correspondences(points)
    h = estimate_homography(corr)
    doc = {
        "direction": "camera_to_world",
        "homography": h.tolist(),
        "n_points": len(corr),
        "reprojection": reprojection_error(h, corr).to_dict(),
        "reprojection_px": inverse_reprojection_error(h, corr).to_dict(),
    }
    _write(out, json.dumps(doc, indent=2) + "\n")
    return doc


def load_homography_file(path, max_reproj_px: float | None = None) -> Homography:
    path = Path(path)
    with path.open() as fh:
        try:
            doc = json.load(fh)
            h = Homography(doc["homography"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: not a homography file ({exc})") from None
    if max_reproj_px is not None and "reprojection_px" in doc:
        worst = doc["reprojection_px"]["max"]
        if worst > max_reproj_px:
            raise DomainError(
                f"calibration reprojection error {worst:.3f} px exceeds --max-reproj-px {max_reproj_px}"
            )
    return h


def track(detections, court, homography, out, max_disp=DEFAULT_MAX_DISP,
          max_reproj_px=DEFAULT_MAX_REPROJ_PX, crops_out=None, margin=DEFAULT_MARGIN,
          spike_disp=DEFAULT_SPIKE_DISP):
    h = load_homography_file(homography, max_reproj_px)
    region = load_court(court)
    frames = load_detections(detections)
    near, far = run_tracking(frames, region, h, max_disp, spike_disp)
    _write(out, format_tracks_csv([near, far]))
    for t in (near, far):
        n_interp = sum(p.source is Source.INTERPOLATED for p in t.points)
        log.info("%s: %d frames (%d interpolated)", t.player.value, len(t.points), n_interp)
    if crops_out is not None:
        sizes = {f.frame_id: f.image_size for f in frames}
        rows = ["frame,player,x,y,w,h,clamped"]
        crops = []
        for t in (near, far):
            for p in t.points:
                if p.bbox is None:
                    continue
                c = expand_bbox(p.bbox, margin, sizes[p.frame_id])
                crops.append((p.frame_id, PLAYERS.index(t.player), t.player.value, c))
        crops.sort(key=lambda r: (r[0], r[1]))
        for frame, _, player, c in crops:
            b = c.bbox
            rows.append(f"{frame},{player},{b.x!r},{b.y!r},{b.w!r},{b.h!r},{str(c.clamped).lower()}")
        _write(crops_out, "\n".join(rows) + "\n")
    return near, far


def repair_poses(poses, out, features=None, vmax=DEFAULT_VMAX):
    loaded = load_poses(poses)
    repaired, replaced = [], {}
    for player in PLAYERS:
        if player not in loaded:
            continue
        seq, fixed = repair(PoseSequence(player, tuple(loaded[player])), vmax)
        repaired.append(seq)
        replaced[player] = fixed
        log.info("%s: %d outlier frames repaired", player.value, len(fixed))
    _write(out, format_repaired_jsonl(repaired, replaced))
    if features is not None:
        _write(features, format_features_csv(repaired))
    return repaired, replaced


def evaluate(tracks, ground_truth, out=None, plane=TOPVIEW, cm_per_px=DEFAULT_CM_PER_PX, svg=None):
    loaded = load_tracks_csv(tracks)
    gt, gt_plane = load_ground_truth(ground_truth)
    reports = evaluate_tracks(loaded, gt, gt_plane, plane, cm_per_px)
    if out is not None:
        _write(out, report_json(reports, plane, cm_per_px))
    if svg is not None:
        _write(svg, render_error_svg(reports))
    return reports


def render(tracks, out):
    loaded = load_tracks_csv(tracks)
    _write(out, render_court_svg([loaded[p] for p in PLAYERS if p in loaded]))


def synth(out_dir, scene=None, **overrides):
    base = SceneConfig.load(scene).to_dict() if scene else {}
    base.update({k: v for k, v in overrides.items() if v is not None})
    cfg = SceneConfig.from_dict(base)
    return generate_scene(cfg).write(out_dir)


# ---------------------------------------------------------------- argparse

SYNTH_FLAGS = {
    # flag: (dest in SceneConfig, type)
    "seed": ("seed", int),
    "frames": ("n_frames", int),
    "jitter": ("jitter_sigma", float),
    "miss-rate": ("miss_rate", float),
    "fp-rate": ("fp_rate", float),
    "spike-rate": ("pose_spike_rate", float),
    "spike-magnitude": ("pose_spike_magnitude", float),
    "max-speed": ("max_speed", float),
    "spectators": ("n_spectators", int),
}

REQUIRED = {
    "calibrate": ("points", "out"),
    "track": ("detections", "court", "homography", "out"),
    "repair-poses": ("poses", "out"),
    "evaluate": ("tracks", "ground_truth"),
    "synth": ("out_dir",),
    "render": ("tracks", "out"),
    "pipeline": ("out_dir",),
}


def _add_synth_flags(p):
    p.add_argument("--scene", help="scene_config.json to start from")
    for flag, (_, typ) in SYNTH_FLAGS.items():
        p.add_argument(f"--{flag}", type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="courtpose", description="Court positioning and pose post-processing for two-player video.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="JSON file supplying default values for any flag")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("calibrate", help="estimate the camera-to-world homography")
    p.add_argument("--points", help="correspondence file: cam_x cam_y world_x world_y per line")
    p.add_argument("--out", help="homography JSON to write")

    p = sub.add_parser("track", help="tracking-by-detection and world projection")
    p.add_argument("--detections")
    p.add_argument("--court", help="court polygon file, one 'x y' pixel pair per line")
    p.add_argument("--homography", help="JSON written by calibrate")
    p.add_argument("--out", help="tracks CSV to write")
    p.add_argument("--max-disp", type=float, default=DEFAULT_MAX_DISP, help="px per frame")
    p.add_argument("--spike-disp", type=float, default=DEFAULT_SPIKE_DISP,
                   help="px per frame; two-sided jump rejection threshold")
    p.add_argument("--max-reproj-px", type=float, default=DEFAULT_MAX_REPROJ_PX)
    p.add_argument("--crops-out", help="optional CSV of expanded crop boxes")
    p.add_argument("--margin", type=float, default=DEFAULT_MARGIN)

    p = sub.add_parser("repair-poses", help="flag outlier skeletons and inbetween them")
    p.add_argument("--poses")
    p.add_argument("--out", help="repaired poses JSONL to write")
    p.add_argument("--features", help="optional 51-feature CSV to write")
    p.add_argument("--vmax", type=float, default=DEFAULT_VMAX)

    p = sub.add_parser("evaluate", help="compare tracks against ground truth")
    p.add_argument("--tracks")
    p.add_argument("--ground-truth")
    p.add_argument("--out", help="JSON report to write")
    p.add_argument("--plane", choices=PLANES, default=TOPVIEW)
    p.add_argument("--cm-per-px", type=float, default=DEFAULT_CM_PER_PX)
    p.add_argument("--svg", help="optional per-frame error curve")

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--out-dir")
    _add_synth_flags(p)

    p = sub.add_parser("render", help="top-view SVG of tracks")
    p.add_argument("--tracks")
    p.add_argument("--out")

    p = sub.add_parser("pipeline", help="calibrate, track, repair, evaluate and render in one go")
    p.add_argument("--out-dir")
    _add_synth_flags(p)
    p.add_argument("--points")
    p.add_argument("--court")
    p.add_argument("--detections")
    p.add_argument("--poses")
    p.add_argument("--ground-truth")
    p.add_argument("--max-disp", type=float, default=DEFAULT_MAX_DISP)
    p.add_argument("--spike-disp", type=float, default=DEFAULT_SPIKE_DISP)
    p.add_argument("--max-reproj-px", type=float, default=DEFAULT_MAX_REPROJ_PX)
    p.add_argument("--margin", type=float, default=DEFAULT_MARGIN)
    p.add_argument("--vmax", type=float, default=DEFAULT_VMAX)
    p.add_argument("--plane", choices=PLANES, default=TOPVIEW)
    p.add_argument("--cm-per-px", type=float, default=DEFAULT_CM_PER_PX)
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required: " + " | ".join(REQUIRED))
    if args.config:
        with open(args.config) as fh:
            try:
                cfg = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"{args.config}: invalid JSON: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"{args.config}: expected a JSON object")
        sp = _subparser(parser, args.command)
        dests = {a.dest for a in sp._actions}
        defaults = {}
        for key, value in cfg.items():
            dest = key.lstrip("-").replace("-", "_")
            if dest not in dests:
                raise UsageError(f"{args.config}: unknown option '{key}' for {args.command}")
            defaults[dest] = value
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    missing = [d for d in REQUIRED[args.command] if getattr(args, d, None) is None]
    if args.command == "pipeline" and not _wants_scene(args):
        missing += [d for d in ("points", "court", "detections") if getattr(args, d) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    for name in ("max_disp", "spike_disp", "max_reproj_px", "vmax", "cm_per_px"):
        if hasattr(args, name):
            _positive(name.replace("_", "-"), getattr(args, name))
    if hasattr(args, "margin") and args.margin < 0:
        raise UsageError("--margin must be nonnegative")
    return args


def _synth_overrides(args) -> dict:
    return {dest: getattr(args, flag.replace("-", "_")) for flag, (dest, _) in SYNTH_FLAGS.items()}


def _wants_scene(args) -> bool:
    """pipeline synthesizes its inputs when --scene or any synth flag is given."""
    return args.scene is not None or any(v is not None for v in _synth_overrides(args).values())


def run_pipeline(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    points, court, detections = args.points, args.court, args.detections
    poses, ground_truth = args.poses, args.ground_truth
    if _wants_scene(args):
        files = synth(out / "scene", scene=args.scene, **_synth_overrides(args))
        points = points or files["calibration"]
        court = court or files["court"]
        detections = detections or files["detections"]
        poses = poses or files["poses"]
        ground_truth = ground_truth or files["ground_truth"]

    calibrate(points, out / "H.json")
    track(detections, court, out / "H.json", out / "tracks.csv", args.max_disp,
          args.max_reproj_px, out / "crops.csv", args.margin, args.spike_disp)
    if poses is not None:
        repair_poses(poses, out / "poses_repaired.jsonl", out / "features.csv", args.vmax)
    if ground_truth is not None:
        reports = evaluate(out / "tracks.csv", ground_truth, out / "report.json", args.plane,
                           args.cm_per_px, out / "errors.svg")
        sys.stdout.write(report_table(reports))
    render(out / "tracks.csv", out / "court.svg")
    return 0


def dispatch(args) -> int:
    cmd = args.command
    if cmd == "calibrate":
        doc = calibrate(args.points, args.out)
        log.info("reprojection max %.3g (world units)", doc["reprojection"]["max"])
    elif cmd == "track":
        track(args.detections, args.court, args.homography, args.out, args.max_disp,
              args.max_reproj_px, args.crops_out, args.margin, args.spike_disp)
    elif cmd == "repair-poses":
        repair_poses(args.poses, args.out, args.features, args.vmax)
    elif cmd == "evaluate":
        reports = evaluate(args.tracks, args.ground_truth, args.out, args.plane, args.cm_per_px, args.svg)
        sys.stdout.write(report_table(reports))
    elif cmd == "synth":
        synth(args.out_dir, scene=args.scene, **_synth_overrides(args))
    elif cmd == "render":
        render(args.tracks, args.out)
    elif cmd == "pipeline":
        return run_pipeline(args)
    return 0


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and return its exit status instead of exiting."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except OSError as exc:
        print(f"error: cannot open {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return dispatch(args)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InputError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot open {exc.filename}: {exc.strerror}", file=sys.stderr)
        return 2
    except CourtPoseError as exc:  # pragma: no cover - every subclass is domain or input
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
