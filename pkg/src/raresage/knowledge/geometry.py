"""Planar polygon tests and brain-boundary extraction from a grayscale slice.

Coordinates are ``(x, y)`` = ``(column, row)`` with pixel centers at integer
positions.  Polygons are vertex sequences; the closing edge is implicit.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from ..errors import ValidationError

Polygon = Sequence[Sequence[float]]


def as_polygon(polygon: Polygon) -> np.ndarray:
    P = np.asarray(polygon, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValidationError("polygon must be a sequence of (x, y) vertices")
    if len(P) > 1 and np.array_equal(P[0], P[-1]):
        P = P[:-1]
    if len(P) < 3:
        raise ValidationError(f"polygon needs at least 3 vertices, got {len(P)}")
    return P


def _is_left(x0, y0, x1, y1, px, py):
    return (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)


def winding_number(point: Sequence[float], polygon: Polygon) -> int:
    """Signed number of times the polygon winds around ``point``.

    Counter-clockwise loops (in a y-up frame) count positive.  Points lying on
    an edge get an arbitrary but deterministic answer.
    """
    P = as_polygon(polygon)
    px, py = float(point[0]), float(point[1])
    wn = 0
    n = len(P)
    for i in range(n):
        x0, y0 = P[i]
        x1, y1 = P[(i + 1) % n]
        if y0 <= py:
            if y1 > py and _is_left(x0, y0, x1, y1, px, py) > 0:
                wn += 1
        elif y1 <= py and _is_left(x0, y0, x1, y1, px, py) < 0:
            wn -= 1
    return wn


def winding_numbers(points, polygon: Polygon) -> np.ndarray:
    """Vectorised :func:`winding_number` over an ``(m, 2)`` array of points."""
    P = as_polygon(polygon)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    px, py = pts[:, 0], pts[:, 1]
    wn = np.zeros(len(pts), dtype=int)
    Q = np.roll(P, -1, axis=0)
    for (x0, y0), (x1, y1) in zip(P, Q):
        left = _is_left(x0, y0, x1, y1, px, py)
        if y0 <= y1:
            wn += ((y0 <= py) & (y1 > py) & (left > 0)).astype(int)
        if y0 > y1:
            wn -= ((y1 <= py) & (y0 > py) & (left < 0)).astype(int)
    return wn


def inside_any(points, polygons: Sequence[Polygon]) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    hit = np.zeros(len(pts), dtype=bool)
    for poly in polygons:
        hit |= winding_numbers(pts, poly) != 0
    return hit


def is_simple(polygon: Polygon) -> bool:
    """True when no two non-adjacent edges touch."""
    P = as_polygon(polygon)
    n = len(P)
    A, B = P, np.roll(P, -1, axis=0)

    def orient(p, q, r):
        return np.sign((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                       - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))

    a1, b1 = A[:, None, :], B[:, None, :]
    a2, b2 = A[None, :, :], B[None, :, :]
    o1, o2 = orient(a1, b1, a2), orient(a1, b1, b2)
    o3, o4 = orient(a2, b2, a1), orient(a2, b2, b1)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)

    def on_seg(p, q, r):
        return ((np.minimum(p[..., 0], q[..., 0]) <= r[..., 0])
                & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
                & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1])
                & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1])))

    touch = (((o1 == 0) & on_seg(a1, b1, a2)) | ((o2 == 0) & on_seg(a1, b1, b2))
             | ((o3 == 0) & on_seg(a2, b2, a1)) | ((o4 == 0) & on_seg(a2, b2, b1)))
    hit = proper | touch
    i, j = np.indices((n, n))
    adjacent = (np.abs(i - j) <= 1) | (np.abs(i - j) == n - 1)
    return not np.any(hit & ~adjacent)


def polygon_mask(polygon: Polygon, width: int, height: int) -> np.ndarray:
    """Boolean ``(height, width)`` raster of pixel centers inside ``polygon``."""
    ys, xs = np.mgrid[0:height, 0:width]
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    return (winding_numbers(pts, polygon) != 0).reshape(height, width)


# clockwise in image coordinates (row grows downward), starting west
_MOORE = [(0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1)]
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def moore_trace(mask: np.ndarray) -> list[tuple[int, int]]:
    """Outer boundary of the first foreground component met in raster order.

    Moore-neighbour tracing with Jacob's stopping criterion; returns
    ``(row, col)`` pixels in clockwise order.
    """
    mask = np.asarray(mask, dtype=bool)
    fg = np.argwhere(mask)
    if len(fg) == 0:
        raise ValidationError("nothing to trace")
    h, w = mask.shape
    start = (int(fg[0][0]), int(fg[0][1]))

    def on(p):
        return 0 <= p[0] < h and 0 <= p[1] < w and mask[p]

    start_back = 0  # entered from the west
    boundary = [start]
    p, back = start, start_back
    limit = 4 * mask.size + 8
    for _ in range(limit):
        found = None
        for step in range(1, 9):
            d = (back + step) % 8
            q = (p[0] + _MOORE[d][0], p[1] + _MOORE[d][1])
            if on(q):
                prev = (back + step - 1) % 8
                b_abs = (p[0] + _MOORE[prev][0], p[1] + _MOORE[prev][1])
                found = (q, _MOORE_INDEX[(b_abs[0] - q[0], b_abs[1] - q[1])])
                break
        if found is None:
            return boundary  # isolated pixel
        p, back = found
        if p == start and back == start_back:
            break
        boundary.append(p)
    return boundary


def extract_brain_contour(image) -> list[tuple[float, float]]:
    """Brain periphery as a closed polygon of ``(x, y)`` pixel coordinates.

    Sobel gradient magnitude is thresholded with Otsu's method, holes in the
    edge map are filled, and the largest region's outer boundary is traced.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValidationError("image must be a non-empty 2-D array")
    mag = np.hypot(ndimage.sobel(img, axis=1), ndimage.sobel(img, axis=0))
    if not np.any(mag > 0):
        raise ValidationError("empty contour: image has no edges")
    edges = mag > threshold_otsu(mag)
    if not np.any(edges):
        raise ValidationError("empty contour: no pixel passes the edge threshold")
    filled = ndimage.binary_fill_holes(edges)
    labels, count = ndimage.label(filled, structure=np.ones((3, 3)))
    sizes = ndimage.sum_labels(filled, labels, index=np.arange(1, count + 1))
    region = labels == (int(np.argmax(sizes)) + 1)
    trace = moore_trace(region)
    poly = [(float(c), float(r)) for r, c in trace]
    if len(poly) < 3:
        raise ValidationError("empty contour: boundary has fewer than 3 pixels")
    return poly
