import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courtpose.errors import AllFramesOutliers, InvalidPose, UnfillableGap
from courtpose.model import BBox, Player, Pose3D
from courtpose.pose import (
    N_FEATURES,
    PoseSequence,
    detect_outlier_frames,
    expand_bbox,
    features_to_pose,
    format_features_csv,
    inbetween,
    pose_features,
    repair,
)
from courtpose.synth import SceneConfig, generate_scene

NEAR = Player.NEAR


def seq_from(arrays, start=0, outliers=()):
    return PoseSequence(NEAR, tuple(Pose3D(start + i, a) for i, a in enumerate(arrays)), frozenset(outliers))


def const(value, n):
    return [np.full((17, 3), float(value)) for _ in range(n)]


# ------------------------------------------------------------ crops

@pytest.mark.parametrize("box, expected, clamped", [
    ((100, 100, 50, 80), (70, 70, 110, 140), False),
    ((10, 10, 50, 80), (0, 0, 90, 120), True),
    ((800, 400, 40, 60), (770, 370, 82, 102), True),
])
def test_expand_bbox(box, expected, clamped):
    crop = expand_bbox(BBox(*box))
    assert crop.bbox == BBox(*expected)
    assert crop.clamped is clamped


def test_expand_bbox_custom_margin_and_size():
    assert expand_bbox(BBox(5, 5, 10, 10), 5, (20, 20)).bbox == BBox(0, 0, 20, 20)


# ------------------------------------------------------------ outlier detection

def test_constant_sequence_clean():
    assert detect_outlier_frames(seq_from(const(0, 10))) == frozenset()


def test_single_spike_flagged():
    arrays = const(0, 10)
    arrays[4] = arrays[4].copy()
    arrays[4][9] += [0.5, 0, 0]
    assert detect_outlier_frames(seq_from(arrays)) == {4}


def test_persistent_step_not_flagged():
    arrays = const(0, 5) + const(2, 5)
    assert detect_outlier_frames(seq_from(arrays)) == frozenset()


def test_invalid_pose_flagged():
    poses = [Pose3D(t, np.zeros((17, 3))) for t in range(5)]
    poses[2] = Pose3D.missing(2)
    assert detect_outlier_frames(PoseSequence(NEAR, poses)) == {2}


def test_synth_three_spikes():
    cfg = SceneConfig(seed=11, n_frames=200, pose_spike_rate=0.02)
    scene = generate_scene(cfg)
    for p in (Player.NEAR, Player.FAR):
        injected = scene.truth.injected_outlier_frames[p]
        assert injected
        assert detect_outlier_frames(PoseSequence(p, scene.noisy_poses[p])) == injected


def test_all_outliers():
    poses = [Pose3D.missing(t) for t in range(4)]
    poses[1] = Pose3D(1, np.zeros((17, 3)))
    with pytest.raises(AllFramesOutliers):
        detect_outlier_frames(PoseSequence(NEAR, poses))


# ------------------------------------------------------------ inbetween

def test_inbetween_single_frame():
    seq = seq_from([np.zeros((17, 3)), np.full((17, 3), 9.0), np.full((17, 3), 2.0)], outliers={1})
    out = inbetween(seq)
    np.testing.assert_allclose(out.poses[1].keypoints, 1.0)
    assert out.outliers == frozenset()


def test_inbetween_unfillable():
    with pytest.raises(UnfillableGap):
        inbetween(seq_from(const(0, 4), outliers={0}))
    with pytest.raises(UnfillableGap):
        inbetween(seq_from(const(0, 4), outliers={3}))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**31 - 1), st.integers(0, 50))
def test_inbetween_matches_direct_formula(gap, seed, start):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(17, 3)), rng.normal(size=(17, 3))
    arrays = [a] + [rng.normal(size=(17, 3)) * 50 for _ in range(gap)] + [b]
    seq = seq_from(arrays, start=start, outliers=range(start + 1, start + gap + 1))
    out = inbetween(seq)
    for k in range(1, gap + 1):
        want = a + (k / (gap + 1)) * (b - a)
        np.testing.assert_allclose(out.poses[k].keypoints, want, atol=1e-9, rtol=0)


def test_inbetween_preserves_keyframes_and_is_idempotent():
    rng = np.random.default_rng(3)
    arrays = [rng.normal(size=(17, 3)) for _ in range(12)]
    seq = seq_from(arrays, outliers={2, 3, 7, 8, 9})
    out = inbetween(seq)
    for t in (0, 1, 4, 5, 6, 10, 11):
        assert out.poses[t] == seq.poses[t]
    assert inbetween(out, {2, 3, 7, 8, 9}) == out
    assert inbetween(out) == out


def test_inbetween_monotone_per_coordinate():
    arrays = [np.zeros((17, 3))] + const(99, 6) + [np.full((17, 3), 7.0)]
    out = inbetween(seq_from(arrays, outliers=range(1, 7)))
    xs = [p.keypoints[0, 0] for p in out.poses]
    assert all(b >= a for a, b in zip(xs, xs[1:]))


def test_repair_trims_boundary_outliers():
    arrays = const(0, 8)
    arrays[0] = np.full((17, 3), 5.0)
    poses = [Pose3D(t, a) for t, a in enumerate(arrays)]
    poses[7] = Pose3D.missing(7)
    seq, replaced = repair(PoseSequence(NEAR, poses))
    assert seq.frame_ids[-1] == 6
    assert 7 not in replaced


def test_repair_fills_absent_frames():
    poses = [Pose3D(0, np.zeros((17, 3))), Pose3D(3, np.full((17, 3), 3.0))]
    seq, replaced = repair(PoseSequence(NEAR, poses), vmax=2.0)
    assert seq.frame_ids == [0, 1, 2, 3] and replaced == {1, 2}
    np.testing.assert_allclose(seq.poses[1].keypoints, 1.0)


def test_repair_then_clean():
    scene = generate_scene(SceneConfig(seed=7, n_frames=150, pose_spike_rate=0.05))
    seq, _ = repair(PoseSequence(NEAR, scene.noisy_poses[NEAR]))
    assert detect_outlier_frames(seq) == frozenset()


# ------------------------------------------------------------ features

def test_features_order_and_round_trip():
    kp = np.arange(51, dtype=float).reshape(17, 3)
    f = pose_features(Pose3D(0, kp))
    assert f.shape == (N_FEATURES,)
    assert list(f[:6]) == [0, 1, 2, 3, 4, 5]
    assert features_to_pose(f, 0) == Pose3D(0, kp)


def test_features_invalid():
    with pytest.raises(InvalidPose):
        pose_features(Pose3D.missing(0))
    with pytest.raises(ValueError):
        features_to_pose(np.zeros(50))


def test_features_csv_layout():
    text = format_features_csv([seq_from(const(1, 2))])
    lines = text.splitlines()
    assert lines[0].split(",")[:5] == ["frame", "player", "x1", "y1", "z1"]
    assert lines[0].split(",")[-1] == "z17"
    assert len(lines) == 3 and len(lines[1].split(",")) == 53


def test_inbetween_quarter_values():
    arrays = [np.zeros((17, 3))] + const(9, 3) + [np.ones((17, 3))]
    out = inbetween(seq_from(arrays, outliers={1, 2, 3}))
    assert [p.keypoints[5, 2] for p in out.poses[1:4]] == [0.25, 0.5, 0.75]
