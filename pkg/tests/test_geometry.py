import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from courtpose.errors import (
    DegenerateConfiguration,
    InsufficientPoints,
    ParseError,
    PointAtInfinity,
    SingularMatrix,
)
from courtpose.geometry import (
    TOL,
    Correspondence,
    Homography,
    Point2,
    apply_homography,
    apply_homography_array,
    canonicalize,
    estimate_homography,
    invert_homography,
    load_correspondences,
    local_scale,
    reprojection_error,
)

from conftest import direct_homography, grid, random_homography

COURT_WORLD = [(0.0, 0.0), (6.096, 0.0), (6.096, 13.411), (0.0, 13.411)]
COURT_IMAGE = [(226.0, 440.0), (626.0, 440.0), (546.0, 110.0), (306.0, 110.0)]


def corr(pairs):
    return [Correspondence(Point2(*c), Point2(*w)) for c, w in pairs]


def test_tolerance_record():
    assert TOL.eps_w == 1e-12
    assert TOL.eps_exact == 1e-9


# ------------------------------------------------------------ canonical form

def test_identity_canonical_form():
    h = Homography(np.eye(3))
    np.testing.assert_allclose(h.m, np.eye(3) / math.sqrt(3), rtol=0, atol=1e-15)
    assert np.linalg.norm(h.m) == pytest.approx(1.0)


def test_sign_flip_and_zero_pivot():
    assert Homography(-np.eye(3)) == Homography(np.eye(3))
    m = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    # det != 0 requires a nonzero third column somewhere
    m[1, 2] = 2.0
    c = canonicalize(m)
    assert c[2, 2] == 0.0
    assert c[0, 1] > 0  # first nonzero in row-major order


def test_canonical_matrix_is_read_only():
    h = Homography.identity()
    with pytest.raises(ValueError):
        h.m[0, 0] = 2.0


def test_singular_matrix_rejected():
    with pytest.raises(SingularMatrix):
        Homography(np.ones((3, 3)))
    with pytest.raises(SingularMatrix):
        Homography(np.zeros((3, 3)))


@pytest.mark.parametrize("lam", [2.0, -0.5, 1024.0, -8.0])
def test_projective_scale_invariance_exact(lam, rng):
    h = random_homography(rng)
    raw = h.m.copy()
    p = Point2(13.0, 57.0)
    # powers of two scale without rounding, so equality is exact
    assert Homography(lam * raw) == h
    assert apply_homography(Homography(lam * raw), p) == apply_homography(h, p)


@pytest.mark.parametrize("lam", [3.7, -1e-3, 1e5])
def test_projective_scale_invariance_general(lam, rng):
    h = random_homography(rng)
    np.testing.assert_allclose(canonicalize(lam * h.m), h.m, rtol=0, atol=1e-15)


# ------------------------------------------------------------ apply

def test_apply_identity():
    assert apply_homography(Homography.identity(), Point2(3, 4)) == Point2(3, 4)


def test_apply_pure_scale():
    h = Homography(np.diag([2.0, 2.0, 1.0]))
    q = apply_homography(h, Point2(1, 1))
    assert q.x == pytest.approx(2.0, abs=1e-15)
    assert q.y == pytest.approx(2.0, abs=1e-15)


def test_apply_point_at_infinity():
    m = np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0]])
    m[2, 2] = 0.0
    m[0, 2] = 1.0  # keep it nonsingular
    h = Homography(m)
    with pytest.raises(PointAtInfinity):
        apply_homography(h, Point2(0, 5))
    with pytest.raises(PointAtInfinity):
        apply_homography_array(h, [[1, 1], [0, 5]])


def test_apply_array_matches_scalar(rng):
    h = random_homography(rng)
    pts = rng.uniform(0, 100, size=(50, 2))
    vec = apply_homography_array(h, pts)
    for (x, y), (u, v) in zip(pts, vec):
        q = apply_homography(h, Point2(x, y))
        assert (q.x, q.y) == pytest.approx((u, v), abs=1e-12)


def test_point2_rejects_non_finite():
    with pytest.raises(ValueError):
        Point2(float("nan"), 0.0)
    with pytest.raises(ValueError):
        Point2(0.0, float("inf"))


# ------------------------------------------------------------ invert / compose

def test_invert_identity():
    np.testing.assert_allclose(invert_homography(Homography.identity()).m,
                               Homography.identity().m, rtol=0, atol=1e-15)


def test_invert_translation():
    t = Homography(np.array([[1.0, 0, 3], [0, 1, 5], [0, 0, 1]]))
    expected = Homography(np.array([[1.0, 0, -3], [0, 1, -5], [0, 0, 1]]))
    np.testing.assert_allclose(invert_homography(t).m, expected.m, atol=1e-15)


def test_invert_round_trip_100_points():
    rng = np.random.default_rng(7)
    h = random_homography(rng)
    inv = invert_homography(h)
    pts = rng.uniform(0, 100, size=(100, 2))
    back = apply_homography_array(inv, apply_homography_array(h, pts))
    assert np.max(np.abs(back - pts)) < 1e-9


def test_composition(rng):
    h1, h2 = random_homography(rng), random_homography(rng)
    comp = h2 @ h1
    for x, y in rng.uniform(0, 100, size=(20, 2)):
        p = Point2(x, y)
        a = apply_homography(h2, apply_homography(h1, p))
        b = apply_homography(comp, p)
        assert a.dist(b) < 1e-9


def test_local_scale_of_similarity():
    h = Homography(np.array([[0.0, -3.0, 10.0], [3.0, 0.0, -2.0], [0.0, 0.0, 1.0]]))
    assert local_scale(h, Point2(5, 5)) == pytest.approx(3.0)


# ------------------------------------------------------------ estimation

def test_estimate_identity_unit_square():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    h = estimate_homography(corr(zip(sq, sq)))
    np.testing.assert_allclose(h.m, np.eye(3) / math.sqrt(3), atol=1e-12)


def test_estimate_translation():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    dst = [(3, 5), (4, 5), (4, 6), (3, 6)]
    h = estimate_homography(corr(zip(sq, dst)))
    m = h.m / h.m[2, 2]
    np.testing.assert_allclose(m[2], [0, 0, 1], atol=1e-12)
    np.testing.assert_allclose(m[:2, :2], np.eye(2), atol=1e-12)
    np.testing.assert_allclose(m[:2, 2], [3, 5], atol=1e-12)


def test_estimate_court_corners_exact():
    c = corr(zip(COURT_IMAGE, COURT_WORLD))
    h = estimate_homography(c)
    stats = reprojection_error(h, c)
    assert stats.max < 1e-9
    # independent route: direct 8x8 solve
    direct = Homography(direct_homography(COURT_IMAGE, COURT_WORLD))
    np.testing.assert_allclose(h.m, direct.m, atol=1e-12)


def test_estimate_recovers_known_h_on_held_out_grid(rng):
    for _ in range(10):
        h_true = random_homography(rng)
        src = rng.uniform(0, 100, size=(6, 2))
        dst = apply_homography_array(h_true, src)
        h = estimate_homography(corr(zip(map(tuple, src), map(tuple, dst))))
        g = grid(0, 100)
        err = np.hypot(*(apply_homography_array(h, g) - apply_homography_array(h_true, g)).T)
        assert err.max() < 1e-9


def test_insufficient_points():
    with pytest.raises(InsufficientPoints):
        estimate_homography(corr([((0, 0), (0, 0)), ((1, 0), (1, 0)), ((0, 1), (0, 1))]))


def test_collinear_camera_points_rejected():
    cam = [(0, 0), (1, 1), (2, 2), (0, 5)]
    world = [(0, 0), (1, 0), (1, 1), (0, 1)]
    with pytest.raises(DegenerateConfiguration):
        estimate_homography(corr(zip(cam, world)))


def test_collinear_world_points_rejected():
    cam = [(0, 0), (1, 0), (1, 1), (0, 1)]
    world = [(0, 0), (1, 0), (2, 0), (0, 1)]
    with pytest.raises(DegenerateConfiguration):
        estimate_homography(corr(zip(cam, world)))


def test_coincident_points_rejected():
    cam = [(1, 1)] * 4
    world = [(0, 0), (1, 0), (1, 1), (0, 1)]
    with pytest.raises(DegenerateConfiguration):
        estimate_homography(corr(zip(cam, world)))


def test_overdetermined_allows_collinear_subsets():
    # corners plus sideline midpoints, as a real court calibration would use
    world = COURT_WORLD + [(0.0, 13.411 / 2), (6.096, 13.411 / 2)]
    h_true = Homography(direct_homography(COURT_IMAGE, COURT_WORLD))
    cam_pts = COURT_IMAGE + [tuple(apply_homography_array(invert_homography(h_true), [w])[0])
                             for w in world[4:]]
    h = estimate_homography(corr(zip(cam_pts, world)))
    assert reprojection_error(h, corr(zip(cam_pts, world))).max < 1e-9


def test_all_collinear_overdetermined_rejected():
    cam = [(i, 2 * i) for i in range(6)]
    world = [(i, 0.5 * i * i) for i in range(6)]
    with pytest.raises(DegenerateConfiguration):
        estimate_homography(corr(zip(cam, world)))


def test_normalization_invariance(rng):
    h_true = random_homography(rng)
    src = rng.uniform(0, 100, size=(12, 2))
    dst = apply_homography_array(h_true, src) + rng.normal(0, 0.3, size=(12, 2))
    h1 = estimate_homography(corr(zip(map(tuple, src), map(tuple, dst))))
    s, t = 3.5, np.array([-40.0, 250.0])
    src2 = src * s + t
    h2 = estimate_homography(corr(zip(map(tuple, src2), map(tuple, dst))))
    probe = rng.uniform(0, 100, size=(25, 2))
    a = apply_homography_array(h1, probe)
    b = apply_homography_array(h2, probe * s + t)
    assert np.max(np.abs(a - b)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_estimation_consistency_property(seed):
    rng = np.random.default_rng(seed)
    h_true = random_homography(rng)
    src = rng.uniform(0, 100, size=(int(rng.integers(4, 10)), 2))
    dst = apply_homography_array(h_true, src)
    h = estimate_homography(corr(zip(map(tuple, src), map(tuple, dst))))
    g = grid(0, 100)
    assert np.max(np.hypot(*(apply_homography_array(h, g) - apply_homography_array(h_true, g)).T)) < 1e-9


# ------------------------------------------------------------ reprojection error

def test_reprojection_exact_is_zero():
    c = corr(zip(COURT_IMAGE, COURT_WORLD))
    stats = reprojection_error(estimate_homography(c), c)
    assert len(stats.per_point) == 4
    assert all(e < 1e-9 for e in stats.per_point)


def test_reprojection_three_four_five():
    stats = reprojection_error(Homography.identity(), corr([((1, 1), (4, 5))]))
    assert stats.per_point == (5.0,)
    assert stats.rms == stats.max == stats.mean == 5.0


def test_reprojection_needs_one_point():
    with pytest.raises(InsufficientPoints):
        reprojection_error(Homography.identity(), [])


def test_reprojection_noise_monte_carlo():
    rng = np.random.default_rng(2024)
    sigma = 0.5
    h_true = Homography(direct_homography(COURT_IMAGE, COURT_WORLD))
    inv = invert_homography(h_true)
    world = np.column_stack([rng.uniform(0, 6.096, 20), rng.uniform(0, 13.411, 20)])
    cam = apply_homography_array(inv, world) + rng.normal(0, sigma, size=(20, 2))
    c = corr(zip(map(tuple, cam), map(tuple, world)))
    h = estimate_homography(c)
    stats = reprojection_error(h, c)
    # direct recomputation
    d = []
    for (cx, cy), (wx, wy) in zip(cam, world):
        m = h.m
        w = m[2, 0] * cx + m[2, 1] * cy + m[2, 2]
        d.append(math.hypot((m[0, 0] * cx + m[0, 1] * cy + m[0, 2]) / w - wx,
                            (m[1, 0] * cx + m[1, 1] * cy + m[1, 2]) / w - wy))
    assert stats.rms == pytest.approx(math.sqrt(sum(v * v for v in d) / 20), rel=1e-12)
    assert stats.mean == pytest.approx(sum(d) / 20, rel=1e-12)
    scale = np.mean([local_scale(h_true, Point2(*p)) for p in cam])
    assert 0.2 * sigma * scale <= stats.rms <= 1.5 * sigma * scale
    assert stats.max >= stats.mean


# ------------------------------------------------------------ file format

def test_load_correspondences(tmp_path):
    f = tmp_path / "court.txt"
    f.write_text("# court corners\n226 440 0 0\n626 440 6.096 0  # near right\n\n"
                 "546 110 6.096 13.411\n306 110 0 13.411\n")
    c = load_correspondences(f)
    assert len(c) == 4
    assert c[1] == Correspondence(Point2(626, 440), Point2(6.096, 0))


def test_load_correspondences_bad_line(tmp_path):
    f = tmp_path / "court.txt"
    f.write_text("1 2 3 4\n1 2 3\n")
    with pytest.raises(ParseError, match=":2:"):
        load_correspondences(f)
