"""Planar projective geometry: homography estimation, application and inversion.

Homographies are stored in a canonical form (unit Frobenius norm, sign fixed
so the bottom-right entry is nonnegative) so that two matrices describing the
same projective map compare equal.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InsufficientPoints,
    ParseError,
    PointAtInfinity,
    SingularMatrix,
)


@dataclass(frozen=True)
class Tolerances:
    eps_w: float = 1e-12  # |w| below this is a point at infinity
    eps_exact: float = 1e-9  # exact-fit reprojection bound
    eps_det: float = 1e-12  # |det| of a canonical matrix below this is singular
    eps_collinear: float = 1e-9  # twice-triangle-area bound on Hartley-normalized points
    eps_rank: float = 1e-10  # relative singular value gap of the DLT system


TOL = Tolerances()


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def dist(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, slots=True)
class Correspondence:
    camera: Point2
    world: Point2


@dataclass(frozen=True)
class ReprojStats:
    per_point: tuple[float, ...]
    rms: float
    max: float
    mean: float

    def to_dict(self) -> dict:
        return {
            "per_point": list(self.per_point),
            "rms": self.rms,
            "max": self.max,
            "mean": self.mean,
        }


def canonicalize(m) -> np.ndarray:
    """Scale a 3x3 matrix to unit Frobenius norm with a fixed sign.

    The sign makes ``m[2, 2]`` nonnegative; when that entry is exactly zero the
    first nonzero entry in row-major order is made positive instead.
    """
    m = np.array(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise SingularMatrix("homography has non-finite entries")
    norm = np.linalg.norm(m)
    if norm == 0.0:
        raise SingularMatrix("zero matrix")
    m = m / norm
    pivot = m[2, 2]
    if pivot == 0.0:
        nz = np.flatnonzero(m)
        pivot = m.flat[nz[0]]
    if pivot < 0:
        m = -m
    # -0.0 entries would make byte-level output depend on the sign path taken
    m = m + 0.0
    return m


@dataclass(frozen=True, eq=False)
class Homography:
    """A nonsingular 3x3 projective map, always held in canonical form.

    Construct from any nonzero multiple of the matrix; the stored ``m`` is the
    canonical representative and is read-only.
    """

    m: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = canonicalize(self.m)
        if abs(np.linalg.det(m)) <= TOL.eps_det:
            raise SingularMatrix(f"|det| = {abs(np.linalg.det(m)):.3g} after normalization")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def __eq__(self, other):
        if not isinstance(other, Homography):
            return NotImplemented
        return bool(np.array_equal(self.m, other.m))

    def __hash__(self):
        return hash(self.m.tobytes())

    def __repr__(self):
        return f"Homography({self.m.tolist()!r})"

    def __matmul__(self, other: "Homography") -> "Homography":
        """Composition: ``(a @ b)`` applies ``b`` first, then ``a``."""
        return Homography(self.m @ other.m)

    def tolist(self) -> list[list[float]]:
        return self.m.tolist()


def apply_homography_array(h: Homography, xy) -> np.ndarray:
    """Vectorised :func:`apply_homography` over an ``(N, 2)`` array."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    ones = np.ones((xy.shape[0], 1))
    uvw = np.hstack([xy, ones]) @ h.m.T
    w = uvw[:, 2]
    bad = np.abs(w) < TOL.eps_w
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise PointAtInfinity(
            f"point ({xy[i, 0]}, {xy[i, 1]}) maps to infinity (|w| = {abs(w[i]):.3g})"
        )
    return uvw[:, :2] / w[:, None]


def apply_homography(h: Homography, p: Point2) -> Point2:
    """Map ``p`` through ``h``: ``(u/w, v/w)`` where ``(u, v, w) = h @ (x, y, 1)``."""
    m = h.m
    u = m[0, 0] * p.x + m[0, 1] * p.y + m[0, 2]
    v = m[1, 0] * p.x + m[1, 1] * p.y + m[1, 2]
    w = m[2, 0] * p.x + m[2, 1] * p.y + m[2, 2]
    if abs(w) < TOL.eps_w:
        raise PointAtInfinity(f"point ({p.x}, {p.y}) maps to infinity (|w| = {abs(w):.3g})")
    return Point2(float(u / w), float(v / w))


def invert_homography(h: Homography) -> Homography:
    try:
        inv = np.linalg.inv(h.m)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from None
    return Homography(inv)


def local_scale(h: Homography, p: Point2) -> float:
    """Area-equivalent linear magnification of ``h`` at ``p`` (sqrt |det J|)."""
    m = h.m
    q = apply_homography(h, p)
    w = m[2, 0] * p.x + m[2, 1] * p.y + m[2, 2]
    jac = np.array([
        [m[0, 0] - q.x * m[2, 0], m[0, 1] - q.x * m[2, 1]],
        [m[1, 0] - q.y * m[2, 0], m[1, 1] - q.y * m[2, 1]],
    ]) / w
    return math.sqrt(abs(np.linalg.det(jac)))


def hartley_normalization(xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity moving the centroid to the origin and mean distance to sqrt(2).

    Returns the normalized points and the 3x3 transform that produced them.
    """
    centroid = xy.mean(axis=0)
    centred = xy - centroid
    mean_dist = np.mean(np.hypot(centred[:, 0], centred[:, 1]))
    if mean_dist < TOL.eps_w:
        raise DegenerateConfiguration("points are coincident")
    s = math.sqrt(2.0) / mean_dist
    t = np.array([
        [s, 0.0, -s * centroid[0]],
        [0.0, s, -s * centroid[1]],
        [0.0, 0.0, 1.0],
    ])
    return centred * s, t


def _collinear_triple(xy: np.ndarray) -> tuple[int, int, int] | None:
    for i, j, k in itertools.combinations(range(len(xy)), 3):
        a, b, c = xy[i], xy[j], xy[k]
        cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(cross) <= TOL.eps_collinear:
            return i, j, k
    return None


def _is_collinear_set(xy: np.ndarray) -> bool:
    # second singular value of the centred cloud, relative to the first
    s = np.linalg.svd(xy - xy.mean(axis=0), compute_uv=False)
    return s[0] == 0.0 or s[1] / s[0] <= TOL.eps_collinear


def dlt_system(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Stack the 2n x 9 DLT constraints ``dst ~ H src`` row by row."""
    n = src.shape[0]
    a = np.zeros((2 * n, 9))
    x, y = src[:, 0], src[:, 1]
    u, v = dst[:, 0], dst[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -u * x
    a[0::2, 7] = -u * y
    a[0::2, 8] = -u
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -v * x
    a[1::2, 7] = -v * y
    a[1::2, 8] = -v
    return a


def estimate_homography(correspondences: Sequence[Correspondence]) -> Homography:
    """Fit the camera -> world homography by normalized DLT.

    Both point sets are Hartley-normalized, the stacked 2n x 9 system is solved
    for its smallest right singular vector, and the result is mapped back to
    the original coordinates. With more than four correspondences this is the
    algebraic least-squares fit; there is no robust outlier rejection.

    Raises:
        InsufficientPoints: fewer than four correspondences.
        DegenerateConfiguration: coincident or collinear points, or a point
            set that does not pin down a unique nonsingular homography.
    """
    n = len(correspondences)
    if n < 4:
        raise InsufficientPoints(f"need at least 4 correspondences, got {n}")
    cam = np.array([[c.camera.x, c.camera.y] for c in correspondences], dtype=float)
    world = np.array([[c.world.x, c.world.y] for c in correspondences], dtype=float)

    cam_n, t_cam = hartley_normalization(cam)
    world_n, t_world = hartley_normalization(world)

    for name, pts in (("camera", cam_n), ("world", world_n)):
        if n == 4:
            triple = _collinear_triple(pts)
            if triple is not None:
                raise DegenerateConfiguration(
                    f"{name} points {triple} are collinear or coincident"
                )
        elif _is_collinear_set(pts):
            raise DegenerateConfiguration(f"all {name} points are collinear")

    a = dlt_system(cam_n, world_n)
    _, s, vt = np.linalg.svd(a)
    # rank < 8 leaves a family of solutions
    if s[7] <= TOL.eps_rank * s[0]:
        raise DegenerateConfiguration("correspondences do not determine a unique homography")
    h_n = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t_world) @ h_n @ t_cam
    try:
        return Homography(m)
    except SingularMatrix:
        raise DegenerateConfiguration("best-fit homography is singular") from None


def reprojection_error(h: Homography, correspondences: Sequence[Correspondence]) -> ReprojStats:
    """Distances between ``h(camera_i)`` and ``world_i``, in world units."""
    if len(correspondences) < 1:
        raise InsufficientPoints("need at least one correspondence")
    cam = np.array([[c.camera.x, c.camera.y] for c in correspondences], dtype=float)
    world = np.array([[c.world.x, c.world.y] for c in correspondences], dtype=float)
    d = np.hypot(*(apply_homography_array(h, cam) - world).T)
    return ReprojStats(
        per_point=tuple(float(v) for v in d),
        rms=float(np.sqrt(np.mean(d**2))),
        max=float(d.max()),
        mean=float(d.mean()),
    )


def inverse_reprojection_error(h: Homography, correspondences: Sequence[Correspondence]) -> ReprojStats:
    """Like :func:`reprojection_error` but measured in the camera frame via ``h^-1``."""
    swapped = [Correspondence(camera=c.world, world=c.camera) for c in correspondences]
    return reprojection_error(invert_homography(h), swapped)


def parse_correspondences(lines: Iterable[str], path=None) -> list[Correspondence]:
    out = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 values 'cam_x cam_y world_x world_y', got {len(parts)}",
                             line=lineno, path=path)
        try:
            vals = [float(v) for v in parts]
            out.append(Correspondence(Point2(vals[0], vals[1]), Point2(vals[2], vals[3])))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=path) from None
    return out


def load_correspondences(path) -> list[Correspondence]:
    """Read a calibration file: ``cam_x cam_y world_x world_y`` per line, ``#`` comments."""
    path = Path(path)
    with path.open() as fh:
        return parse_correspondences(fh, path=path)


def format_correspondences(correspondences: Iterable[Correspondence]) -> str:
    rows = ["# cam_x cam_y world_x world_y"]
    for c in correspondences:
        rows.append(f"{c.camera.x!r} {c.camera.y!r} {c.world.x!r} {c.world.y!r}")
    return "\n".join(rows) + "\n"
