import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NonNumericToken, PointAtInfinity, SingularMatrix, WrongTokenCount

NORMALIZE_EPS = 1e-12
SINGULAR_EPS = 1e-12
INFINITY_EPS = 1e-9


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map from the reference image to a target image.

    Stored with the (3,3) entry scaled to 1 whenever it is not vanishingly small.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise SingularMatrix("Homography contains non-finite entries")
        if abs(m[2, 2]) > NORMALIZE_EPS:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= SINGULAR_EPS:
            raise SingularMatrix(f"Homography is singular (det={np.linalg.det(m):.3e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def is_identity(self, tol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, np.eye(3), rtol=0.0, atol=tol))

    def to_text(self) -> str:
        return "\n".join(" ".join(repr(float(v)) for v in row) for row in self.matrix) + "\n"


def identity() -> Homography:
    return Homography(np.eye(3))


def compose(a: Homography, b: Homography) -> Homography:
    """Map that applies `b` first and then `a`."""
    return Homography(a.matrix @ b.matrix)


def load_homography(text: str) -> Homography:
    tokens = text.split()
    if len(tokens) != 9:
        raise WrongTokenCount(f"Expected 9 homography entries, found {len(tokens)}")
    values = []
    for token in tokens:
        try:
            value = float(token)
        except ValueError:
            raise NonNumericToken(f"Homography entry {token!r} is not a number") from None
        if not math.isfinite(value):
            raise NonNumericToken(f"Homography entry {token!r} is not finite")
        values.append(value)
    return Homography(np.array(values).reshape(3, 3))


def project(H: Homography, p: Point) -> Point:
    m = H.matrix
    x, y = float(p[0]), float(p[1])
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) <= INFINITY_EPS:
        raise PointAtInfinity(f"Point ({x}, {y}) maps to infinity (w={w:.3e})")
    return Point(
        float((m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w),
        float((m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w),
    )


def project_many(H: Homography, points: np.ndarray) -> np.ndarray:
    """Vectorized project() over an (n, 2) array."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    m = H.matrix
    x, y = pts[:, 0], pts[:, 1]
    # same operation order as project() so both agree bit for bit
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if np.any(np.abs(w) <= INFINITY_EPS):
        raise PointAtInfinity("At least one point maps to infinity")
    px = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w
    py = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w
    return np.column_stack([px, py])


def reproj_dist(H: Homography, x: Point, x_prime: Point) -> float:
    px, py = project(H, x)
    return math.hypot(px - float(x_prime[0]), py - float(x_prime[1]))
