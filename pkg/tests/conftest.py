import numpy as np
import pytest

from courtpose.geometry import Homography

ACCEPTANCE_LINES = []


def record(criterion: str, ok: bool, detail: str = ""):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {criterion}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def direct_homography(src, dst) -> np.ndarray:
    """Exact 4-point homography with h33 = 1 from an 8x8 linear solve.

    Independent of the DLT/SVD route used by the package.
    """
    a, b = [], []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        b.append(u)
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        b.append(v)
    h = np.linalg.solve(np.array(a, float), np.array(b, float))
    return np.append(h, 1.0).reshape(3, 3)


def random_homography(rng: np.random.Generator, size: float = 100.0) -> Homography:
    """Map the square [0, size]^2 onto a randomly perturbed, convex-ish quad."""
    square = np.array([[0, 0], [size, 0], [size, size], [0, size]], float)
    quad = square * rng.uniform(0.5, 2.0) + rng.uniform(-0.2, 0.2, size=(4, 2)) * size
    quad += rng.uniform(-50, 50, size=2)
    return Homography(direct_homography(square, quad))


def grid(lo: float, hi: float, n: int = 5) -> np.ndarray:
    g = np.linspace(lo, hi, n)
    return np.array([[x, y] for x in g for y in g])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
