"""Planar geometry primitives: points, lines, polylines, minimax fitting.

Coordinates are continuous pixels with the origin at the top-left corner and
y increasing downward.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateTriple, EmptyPolyline, PointOffPolyline

DEGENERATE_SPREAD = 1e-9
DEFAULT_TANGENT_WINDOW = 7
DEFAULT_SNAP_DISTANCE = 10.0


class Point2D(namedtuple("Point2D", "x y")):
    __slots__ = ()

    def __new__(cls, x, y):
        x = float(x)
        y = float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError(f"non-finite coordinate ({x}, {y})")
        return super().__new__(cls, x, y)

    def __add__(self, other):
        return Point2D(self.x + other[0], self.y + other[1])

    def __sub__(self, other):
        return Point2D(self.x - other[0], self.y - other[1])

    def scaled(self, k: float) -> "Point2D":
        return Point2D(self.x * k, self.y * k)

    def distance(self, other) -> float:
        return math.hypot(self.x - other[0], self.y - other[1])


class UnitVector(namedtuple("UnitVector", "ux uy")):
    __slots__ = ()

    def __new__(cls, ux, uy):
        ux = float(ux)
        uy = float(uy)
        if abs(ux * ux + uy * uy - 1.0) > 1e-9:
            raise ValueError(f"({ux}, {uy}) is not unit length")
        return super().__new__(cls, ux, uy)

    @classmethod
    def from_vector(cls, dx: float, dy: float) -> "UnitVector":
        n = math.hypot(dx, dy)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite vector")
        return cls(dx / n, dy / n)

    def __neg__(self):
        return UnitVector(-self.ux, -self.uy)

    def dot(self, other) -> float:
        return self.ux * other[0] + self.uy * other[1]


class Box(namedtuple("Box", "x1 y1 x2 y2")):
    """Axis-aligned rectangle given by its min and max corners."""

    __slots__ = ()

    def __new__(cls, x1, y1, x2, y2):
        vals = [float(v) for v in (x1, y1, x2, y2)]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("non-finite box coordinate")
        return super().__new__(cls, *vals)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return max(self.width, 0.0) * max(self.height, 0.0)

    @property
    def center(self) -> Point2D:
        return Point2D((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)

    @classmethod
    def around(cls, p, half: float) -> "Box":
        return cls(p[0] - half, p[1] - half, p[0] + half, p[1] + half)


@dataclass(frozen=True)
class Line2D:
    """Line ``b = m*a + c`` in fit coordinates.

    When ``swapped`` is false the fit coordinates are (x, y); otherwise they
    are (y, x), i.e. the line is ``x = m*y + c`` in image coordinates.
    """

    m: float
    c: float
    swapped: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.m) and math.isfinite(self.c)):
            raise ValueError("line parameters must be finite")

    @property
    def anchor(self) -> Point2D:
        return Point2D(self.c, 0.0) if self.swapped else Point2D(0.0, self.c)

    @property
    def direction(self) -> UnitVector:
        n = math.hypot(1.0, self.m)
        if self.swapped:
            return UnitVector(self.m / n, 1.0 / n)
        return UnitVector(1.0 / n, self.m / n)

    def to_fit(self, p) -> tuple[float, float]:
        return (p[1], p[0]) if self.swapped else (p[0], p[1])

    def residual(self, p) -> float:
        a, b = self.to_fit(p)
        return b - (self.m * a + self.c)


def _orient(points: Sequence) -> tuple[bool, list[tuple[float, float]]]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_spread = max(xs) - min(xs)
    y_spread = max(ys) - min(ys)
    if max(x_spread, y_spread) < DEGENERATE_SPREAD:
        raise DegenerateTriple("points coincide; no line is defined")
    swapped = y_spread > x_spread
    fit = [(p[1], p[0]) if swapped else (p[0], p[1]) for p in points]
    return swapped, fit


def minimax_line(p1, p2, p3) -> Line2D:
    """Fit the line minimizing the maximum vertical error of three points.

    The fit runs along whichever axis has the larger spread so near-vertical
    triples stay well conditioned. Points are ordered by abscissa (ties by
    ordinate) before applying the closed form, so the residuals come out
    equal-ripple: ``e1 == e3 == -e2``.
    """
    swapped, fit = _orient((p1, p2, p3))
    (a1, b1), (a2, b2), (a3, b3) = sorted(fit)
    span = a3 - a1
    m = (b3 - b1) / span
    c = (b1 * (a2 + a3) + b2 * (a3 - a1) - b3 * (a1 + a2)) / (2 * span)
    return Line2D(m, c, swapped)


def fit_residuals(points: Iterable, line: Line2D) -> list[float]:
    """Vertical residuals in fit coordinates, in abscissa order."""
    fit = sorted(line.to_fit(p) for p in points)
    return [b - (line.m * a + line.c) for a, b in fit]


def arclength_parameter(p, line: Line2D) -> float:
    """Signed distance from the line's anchor to the foot of ``p``."""
    ax, ay = line.anchor
    d = line.direction
    return (p[0] - ax) * d.ux + (p[1] - ay) * d.uy


def project_onto_line(p, line: Line2D) -> Point2D:
    t = arclength_parameter(p, line)
    ax, ay = line.anchor
    d = line.direction
    return Point2D(ax + t * d.ux, ay + t * d.uy)


def angle_between(u, v) -> float:
    """Angle in degrees between two unit vectors, in [0, 180]."""
    dot = u[0] * v[0] + u[1] * v[1]
    return math.degrees(math.acos(min(1.0, max(-1.0, dot))))


def principal_direction(points) -> UnitVector:
    """Total-least-squares direction of a point cloud.

    The sign is chosen so the direction points from the first point toward
    the last one, which keeps results stable for ordered chains.
    """
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    _, vecs = np.linalg.eigh(centered.T @ centered)
    d = vecs[:, -1]
    if np.dot(d, pts[-1] - pts[0]) < 0:
        d = -d
    return UnitVector.from_vector(d[0], d[1])


class Polyline:
    """Ordered vertex chain with at least two distinct vertices.

    Consecutive duplicates are dropped on construction. A chain whose last
    vertex repeats the first is stored open-ended with ``closed=True``.
    """

    __slots__ = ("_v", "closed")

    def __init__(self, vertices, closed: bool = False):
        v = np.array(vertices, dtype=float).reshape(-1, 2) if len(vertices) else np.zeros((0, 2))
        if not np.all(np.isfinite(v)):
            raise ValueError("polyline has non-finite vertices")
        if len(v) > 1:
            keep = np.ones(len(v), dtype=bool)
            keep[1:] = np.any(v[1:] != v[:-1], axis=1)
            v = v[keep]
        if len(v) > 2 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
            closed = True
        if len(v) < 2:
            raise EmptyPolyline(f"polyline needs at least 2 distinct vertices, got {len(v)}")
        v.setflags(write=False)
        self._v = v
        self.closed = bool(closed)

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    def points(self) -> list[Point2D]:
        return [Point2D(x, y) for x, y in self._v]

    def __len__(self):
        return len(self._v)

    def __eq__(self, other):
        if not isinstance(other, Polyline):
            return NotImplemented
        return self.closed == other.closed and np.array_equal(self._v, other._v)

    def __repr__(self):
        return f"Polyline(n={len(self._v)}, closed={self.closed})"

    def chain(self) -> np.ndarray:
        """Vertices with the first repeated at the end for closed chains."""
        return np.vstack([self._v, self._v[:1]]) if self.closed else self._v

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.chain(), axis=0), axis=1)))

    def nearest(self, p) -> tuple[int, float, np.ndarray, float]:
        """Closest point on the chain: (segment index, fraction, point, distance)."""
        ch = self.chain()
        a = ch[:-1]
        ab = ch[1:] - a
        q = np.asarray(p, dtype=float)
        denom = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", q - a, ab) / denom, 0.0, 1.0)
        foot = a + ab * t[:, None]
        d = np.linalg.norm(foot - q, axis=1)
        i = int(np.argmin(d))
        return i, float(t[i]), foot[i], float(d[i])

    def distance_to(self, p) -> float:
        return self.nearest(p)[3]

    def resample(self, count: int) -> "Polyline":
        """Return ``count`` vertices equally spaced in arclength (open chains)."""
        v = self._v
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        targets = np.linspace(0.0, s[-1], count)
        x = np.interp(targets, s, v[:, 0])
        y = np.interp(targets, s, v[:, 1])
        return Polyline(np.column_stack([x, y]))

    def reversed(self) -> "Polyline":
        return Polyline(self._v[::-1], closed=self.closed)

    def transformed(self, fn) -> "Polyline":
        """Apply ``fn`` to an (n, 2) vertex array."""
        return Polyline(fn(self._v.copy()), closed=self.closed)


def as_polyline(poly) -> Polyline:
    return poly if isinstance(poly, Polyline) else Polyline(poly)


def _window_indices(poly: Polyline, seg: int, frac: float, window: int) -> list[int]:
    v = poly.vertices
    n = len(v)
    ch = poly.chain()
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(ch, axis=0), axis=1))])
    s_q = s[seg] + frac * (s[seg + 1] - s[seg])
    offset = s[:n] - s_q
    if poly.closed:
        total = s[-1]
        offset = (offset + total / 2) % total - total / 2
    k = min(window, n)
    order = np.lexsort((np.arange(n), np.abs(offset)))[:k]
    # chain order within the window, so the sign follows the vertex order
    return sorted(order.tolist(), key=lambda i: offset[i])


def tangent_at(
    poly,
    p,
    window: int = DEFAULT_TANGENT_WINDOW,
    snap: float = DEFAULT_SNAP_DISTANCE,
) -> UnitVector:
    """Local direction of ``poly`` near ``p``.

    Takes the ``window`` vertices closest to the foot of ``p`` measured along
    the chain and returns their principal direction, signed to follow the
    chain order.
    """
    if window < 2:
        raise ValueError("tangent window must be at least 2 vertices")
    poly = as_polyline(poly)
    seg, frac, _, dist = poly.nearest(p)
    if dist > snap:
        raise PointOffPolyline(f"point ({p[0]:.3f}, {p[1]:.3f}) is {dist:.3f} px from the polyline (snap {snap})")
    idx = _window_indices(poly, seg, frac, window)
    return principal_direction(poly.vertices[idx])


def point_in_polygon(p, vertices) -> bool:
    """Even-odd test of ``p`` against the closed ring ``vertices``."""
    v = np.asarray(vertices, dtype=float)
    x, y = float(p[0]), float(p[1])
    xi, yi = v[:, 0], v[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)
    crosses = (yi > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_at = xi + (y - yi) * (xj - xi) / (yj - yi)
    return bool(np.count_nonzero(crosses & (x < x_at)) % 2)


def signed_distance(p, ring: Polyline) -> float:
    """Distance from ``p`` to a closed outline, negative inside it."""
    d = ring.distance_to(p) if ring.closed else Polyline(ring.vertices, closed=True).distance_to(p)
    return -d if point_in_polygon(p, ring.vertices) else d
