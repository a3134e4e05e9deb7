"""Conversion between bone-level polylines and binary raster masks.

Pixel (col, row) covers ``[col, col+1) x [row, row+1)``; its centre is at
``(col + 0.5, row + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, MultipleComponents
from .geom import Polyline, as_polyline

DEFAULT_THICKNESS = 10.0
RESAMPLE_COUNT = 64

# clockwise in image coordinates (y down), starting west
_NEIGHBOURS = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray  # (height, width) bool, row-major

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {b.shape}")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def blank(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def contains(self, x: float, y: float) -> bool:
        """True if a foreground pixel's closed square contains (x, y)."""
        cols = {int(np.floor(x)), int(np.ceil(x)) - 1}
        rows = {int(np.floor(y)), int(np.ceil(y)) - 1}
        return any(
            0 <= r < self.height and 0 <= c < self.width and self.bits[r, c]
            for r in rows
            for c in cols
        )

    def to_rle(self) -> list[int]:
        """Run lengths over the row-major bits, starting with a background run."""
        flat = self.bits.ravel()
        edges = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
        bounds = np.concatenate([[0], edges, [flat.size]])
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0]:
            runs.insert(0, 0)
        return [int(r) for r in runs]

    @classmethod
    def from_rle(cls, width: int, height: int, runs) -> "BinaryMask":
        if sum(runs) != width * height:
            raise ValueError(f"run lengths sum to {sum(runs)}, expected {width * height}")
        values = np.arange(len(runs)) % 2 == 1
        flat = np.repeat(values, runs)
        return cls(flat.reshape(height, width))

    def flipped_lr(self) -> "BinaryMask":
        return BinaryMask(self.bits[:, ::-1])


def write_pgm(mask: BinaryMask, path) -> None:
    """Binary PGM (P5): foreground 255, background 0."""
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (mask.bits.astype(np.uint8) * 255).tobytes())


def read_pgm(path) -> BinaryMask:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pixels = np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)
    return BinaryMask(pixels > maxval // 2)


def rasterize_polyline(poly, thickness: float, canvas: tuple[int, int]) -> BinaryMask:
    """Stroke ``poly`` with round caps and joins onto a ``(width, height)`` canvas.

    A pixel is set iff its centre lies within ``thickness / 2`` of the chain.
    Parts of the stroke outside the canvas are clipped.
    """
    if thickness < 1:
        raise ValueError(f"thickness must be >= 1, got {thickness}")
    poly = as_polyline(poly)
    width, height = canvas
    bits = np.zeros((height, width), dtype=bool)
    r = thickness / 2.0
    ch = poly.chain()
    lo = np.floor(ch.min(axis=0) - r).astype(int)
    hi = np.ceil(ch.max(axis=0) + r).astype(int)
    c0, r0 = max(lo[0], 0), max(lo[1], 0)
    c1, r1 = min(hi[0] + 1, width), min(hi[1] + 1, height)
    if c0 >= c1 or r0 >= r1:
        return BinaryMask(bits)
    cx = np.arange(c0, c1) + 0.5
    cy = np.arange(r0, r1) + 0.5
    px, py = np.meshgrid(cx, cy)
    best = np.full(px.shape, np.inf)
    for (ax, ay), (bx, by) in zip(ch[:-1], ch[1:]):
        dx, dy = bx - ax, by - ay
        t = np.clip(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
        d2 = (px - ax - t * dx) ** 2 + (py - ay - t * dy) ** 2
        np.minimum(best, d2, out=best)
    bits[r0:r1, c0:c1] = best <= r * r
    return BinaryMask(bits)


def trace_boundary(bits: np.ndarray) -> list[tuple[int, int]]:
    """Moore-neighbour boundary of the component holding the leftmost pixel.

    Returns the closed cycle of (col, row) pixels, starting at the leftmost
    foreground pixel (topmost among ties), without repeating the start.
    Pixels on one-pixel-wide parts appear once per pass.
    """
    rows, cols = np.nonzero(bits)
    if rows.size == 0:
        raise EmptyMask("mask has no foreground pixels")
    first = np.lexsort((rows, cols))[0]
    start = (int(cols[first]), int(rows[first]))
    h, w = bits.shape

    def fg(c, r):
        return 0 <= r < h and 0 <= c < w and bits[r, c]

    def step(p, back):
        # scan clockwise from the backtrack direction
        k = back
        for i in range(8):
            d = (k + i) % 8
            dc, dr = _NEIGHBOURS[d]
            q = (p[0] + dc, p[1] + dr)
            if fg(*q):
                # new backtrack: the neighbour checked just before q, seen from q
                prev = (k + i - 1) % 8
                pc = p[0] + _NEIGHBOURS[prev][0]
                pr = p[1] + _NEIGHBOURS[prev][1]
                back_q = _NEIGHBOURS.index((pc - q[0], pr - q[1]))
                return q, back_q
        return None, back

    nxt, back = step(start, 0)
    if nxt is None:
        return [start]
    cycle = [start]
    first_move = (start, nxt)
    p = nxt
    limit = 8 * int(bits.sum()) + 8
    while len(cycle) <= limit:
        cycle.append(p)
        q, back = step(p, back)
        if (p, q) == first_move:
            cycle.pop()
            break
        p = q
    return cycle


def _pair_midpoints(cycle: np.ndarray, start: int) -> np.ndarray:
    n = len(cycle)
    k = np.arange(n // 2 + 1)
    before = cycle[(start - k) % n]
    after = cycle[(start + k) % n]
    return (before + after) / 2.0


def _stroke_axis(bits: np.ndarray) -> np.ndarray:
    """Principal direction of the foreground pixel centres, pointing to +x (or +y)."""
    rows, cols = np.nonzero(bits)
    pts = np.column_stack([cols, rows]).astype(float)
    centered = pts - pts.mean(axis=0)
    _, vecs = np.linalg.eigh(centered.T @ centered)
    d = vecs[:, -1]
    if d[0] < 0 or (d[0] == 0 and d[1] < 0):
        d = -d
    return d


def _first_extreme(cycle: np.ndarray, axis: np.ndarray, far: bool) -> int:
    s = np.round(cycle @ axis, 9)
    if far:
        s = -s
    order = np.lexsort((np.arange(len(cycle)), cycle[:, 1], s))
    return int(order[0])


def centerline_from_mask(mask: BinaryMask, count: int = RESAMPLE_COUNT) -> Polyline:
    """Recover the medial line of a single elongated blob.

    The stroke ends are taken as the boundary points lying furthest along
    the blob's principal axis. Boundary pixels are paired symmetrically
    around one end and their midpoints form one line; the same is done
    around the other end. Both lines are resampled to ``count`` vertices and
    averaged point by point.
    """
    bits = mask.bits
    if not bits.any():
        raise EmptyMask("mask has no foreground pixels")
    _, ncomp = ndimage.label(bits, structure=np.ones((3, 3), dtype=int))
    if ncomp > 1:
        raise MultipleComponents(ncomp)
    cycle = np.asarray(trace_boundary(bits), dtype=float) + 0.5
    if len(cycle) < 2:
        raise EmptyMask("mask needs at least 2 boundary pixels")
    axis = _stroke_axis(bits)
    left = Polyline(_pair_midpoints(cycle, _first_extreme(cycle, axis, False)))
    right = Polyline(_pair_midpoints(cycle, _first_extreme(cycle, axis, True)))
    a = left.resample(count).vertices
    b = right.resample(count).vertices[::-1]
    return Polyline((a + b) / 2.0)


def mean_deviation(reference, line, exclude: float = DEFAULT_THICKNESS / 2) -> float:
    """Mean distance from ``line`` vertices to ``reference``.

    Vertices within ``exclude`` of either reference endpoint are skipped,
    since the stroke caps blur the ends.
    """
    reference = as_polyline(reference)
    ends = reference.vertices[[0, -1]]
    dists = [
        reference.distance_to(p)
        for p in as_polyline(line).vertices
        if np.min(np.hypot(*(ends - p).T)) >= exclude
    ]
    if not dists:
        raise ValueError("no vertices outside the excluded end zones")
    return float(np.mean(dists))
