"""Exact 2-D point and polygon primitives.

All coordinates are image-style: +x right, +y down, units of pixels.

Orientation convention: a contour is *clockwise* when it looks clockwise on
screen with +y pointing down.  In raw coordinates that is equivalent to a
positive shoelace signed area, which is what :func:`signed_area` returns.
The canonical contour form used throughout the package is: clockwise
traversal, starting at the vertex with minimum x (ties broken by minimum y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Rays shorter than this are treated as collapsed (angle defined as pi).
EPS_DEGENERATE = 1e-12
# Signed areas with |A| at or below this count as degenerate polygons.
EPS_AREA = 1e-12


class GeometryError(ValueError):
    """Invalid geometric input (degenerate or self-intersecting)."""


@dataclass(frozen=True)
class Point2:
    """A single 2-D point with finite coordinates."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True, eq=False)
class PointSequence:
    """An ordered sequence of 2-D points, optionally closed.

    ``points`` is stored as a read-only (K, 2) float64 array.  ``cyclic``
    marks a closed contour: neighbour indices wrap modulo K.
    """

    points: np.ndarray
    cyclic: bool = False

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise GeometryError(f"expected (K, 2) points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("points contain NaN or Inf")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def point(self, i: int) -> Point2:
        return Point2(float(self.points[i, 0]), float(self.points[i, 1]))

    def allclose(self, other: "PointSequence", atol: float = 1e-12) -> bool:
        return (
            self.cyclic == other.cyclic
            and len(self) == len(other)
            and bool(np.allclose(self.points, other.points, rtol=0.0, atol=atol))
        )


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner plus non-negative size."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box {vals}")
        if self.w < 0 or self.h < 0:
            raise GeometryError(f"negative box size ({self.w}, {self.h})")

    @property
    def center(self) -> Point2:
        return Point2(self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h


def hop_angle(seq: PointSequence, i: int, n: int = 1, eps: float = EPS_DEGENERATE) -> float:
    """Unsigned angle at vertex ``i`` between the rays to vertices i-n and i+n.

    Returned in radians within [0, pi].  If either ray is shorter than
    ``eps`` the angle is defined as pi (a collapsed ray is treated as
    straight).  For cyclic sequences the neighbour indices wrap; for open
    sequences both i-n and i+n must be in range.
    """
    k = len(seq)
    if n < 1:
        raise GeometryError(f"hop must be >= 1, got {n}")
    if not 0 <= i < k:
        raise IndexError(f"vertex index {i} out of range for length {k}")
    if seq.cyclic:
        if n >= k:
            raise GeometryError(f"hop {n} >= sequence length {k}")
        lo, hi = (i - n) % k, (i + n) % k
    else:
        if i - n < 0 or i + n >= k:
            raise IndexError(f"hop {n} at vertex {i} leaves open sequence of length {k}")
        lo, hi = i - n, i + n
    p = seq.points
    ux, uy = p[lo, 0] - p[i, 0], p[lo, 1] - p[i, 1]
    vx, vy = p[hi, 0] - p[i, 0], p[hi, 1] - p[i, 1]
    if math.hypot(ux, uy) < eps or math.hypot(vx, vy) < eps:
        return math.pi
    cross = ux * vy - uy * vx
    dot = ux * vx + uy * vy
    return math.atan2(abs(cross), dot)


def perimeter(seq: PointSequence) -> float:
    """Total edge length; includes the closing edge for cyclic sequences."""
    p = seq.points
    if seq.cyclic:
        p = np.vstack([p, p[:1]])
    return float(np.sum(np.hypot(np.diff(p[:, 0]), np.diff(p[:, 1]))))


def signed_area(seq: PointSequence) -> float:
    """Shoelace signed area in px^2.

    Positive means clockwise on screen in image coordinates (+y down).
    """
    p = seq.points
    if len(seq) < 3:
        raise GeometryError(f"signed area needs >= 3 points, got {len(seq)}")
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(0.5 * np.sum(x * yn - xn * y))


def resample_contour(seq: PointSequence, m: int) -> PointSequence:
    """Resample a closed contour to ``m`` points at equal arc-length spacing.

    Point 0 of the output coincides with point 0 of the input and the
    traversal direction is preserved.  The k-th output point sits at arc
    length k * perimeter / m along the input boundary.
    """
    if not seq.cyclic:
        raise GeometryError("resample_contour requires a cyclic sequence")
    if m < 3:
        raise GeometryError(f"target count must be >= 3, got {m}")
    p = np.vstack([seq.points, seq.points[:1]])
    seg = np.hypot(np.diff(p[:, 0]), np.diff(p[:, 1]))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= EPS_DEGENERATE:
        raise GeometryError("zero-perimeter contour (all points coincident)")
    targets = np.arange(m, dtype=np.float64) * (total / m)
    out = np.column_stack([np.interp(targets, cum, p[:, 0]), np.interp(targets, cum, p[:, 1])])
    return PointSequence(out, cyclic=True)


def canonicalize_contour(seq: PointSequence) -> PointSequence:
    """Rewrite a closed contour in canonical form.

    Output traverses clockwise (positive signed area) and starts at the
    vertex with minimum x, ties broken by minimum y.  The point multiset is
    unchanged.
    """
    if not seq.cyclic:
        raise GeometryError("canonicalize_contour requires a cyclic sequence")
    area = signed_area(seq)
    if abs(area) <= EPS_AREA:
        raise GeometryError("degenerate polygon: zero signed area")
    pts = seq.points
    if area < 0:
        pts = pts[::-1]
    start = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
    return PointSequence(np.roll(pts, -start, axis=0), cyclic=True)


def bbox_of(seq: PointSequence) -> BBox:
    """Tight axis-aligned bounding box of the points."""
    p = seq.points
    x0, y0 = float(p[:, 0].min()), float(p[:, 1].min())
    x1, y1 = float(p[:, 0].max()), float(p[:, 1].max())
    return BBox(x0, y0, x1 - x0, y1 - y0)


def box_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two axis-aligned boxes; 0 when disjoint."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def rect_contour(b: BBox) -> PointSequence:
    """Four-corner contour of a box, clockwise from the top-left corner."""
    if b.w <= 0 or b.h <= 0:
        raise GeometryError(f"degenerate box ({b.w} x {b.h})")
    pts = [(b.x, b.y), (b.x + b.w, b.y), (b.x + b.w, b.y + b.h), (b.x, b.y + b.h)]
    return PointSequence(np.array(pts), cyclic=True)


# ---------------------------------------------------------------------------
# Exact polygon intersection
#
# The intersection area of two simple polygons is computed from the signed
# triangle-fan decomposition: for a simple polygon P with vertices p0..p_{K-1}
# and fan triangles T_i = (p0, p_i, p_{i+1}),
#
#     1_P(x) = sign(area(P)) * sum_i sign(area(T_i)) * 1_{T_i}(x)
#
# almost everywhere, so |P ∩ Q| reduces to a signed sum of triangle-triangle
# intersection areas.  Triangles are convex, so each pairwise intersection is
# an exact Sutherland-Hodgman clip.  This handles concave simple polygons
# without any general clipping machinery.
# ---------------------------------------------------------------------------


def _edges_properly_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    # Collinear overlap counts as a self-intersection as well.
    if d1 == 0 and d2 == 0 and d3 == 0 and d4 == 0:
        lo = max(min(p1[0], p2[0]), min(q1[0], q2[0]))
        hi = min(max(p1[0], p2[0]), max(q1[0], q2[0]))
        lo_y = max(min(p1[1], p2[1]), min(q1[1], q2[1]))
        hi_y = min(max(p1[1], p2[1]), max(q1[1], q2[1]))
        return lo < hi or lo_y < hi_y
    return False


def is_simple_polygon(seq: PointSequence) -> bool:
    """True when no two non-adjacent edges of the closed contour cross."""
    if not seq.cyclic or len(seq) < 3:
        return False
    pts = [tuple(p) for p in seq.points]
    k = len(pts)
    edges = [(pts[i], pts[(i + 1) % k]) for i in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            if j == i or (j - i) % k == 1 or (i - j) % k == 1:
                continue
            if _edges_properly_intersect(*edges[i], *edges[j]):
                return False
    return True


def _tri_signed_area(a, b, c) -> float:
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _clip_convex(subject: list, clip: list) -> list:
    """Sutherland-Hodgman clip of a convex subject by a CCW convex clip."""
    output = subject
    cx1, cy1 = clip[-1]
    for cx2, cy2 in clip:
        if not output:
            return []
        ex, ey = cx2 - cx1, cy2 - cy1
        inputs = output
        output = []
        sx, sy = inputs[-1]
        s_in = ex * (sy - cy1) - ey * (sx - cx1) >= 0
        for px, py in inputs:
            p_in = ex * (py - cy1) - ey * (px - cx1) >= 0
            if p_in != s_in:
                dx, dy = px - sx, py - sy
                denom = ex * dy - ey * dx
                if denom != 0:
                    t = (ex * (cy1 - sy) - ey * (cx1 - sx)) / denom
                    output.append((sx + t * dx, sy + t * dy))
            if p_in:
                output.append((px, py))
            sx, sy, s_in = px, py, p_in
        cx1, cy1 = cx2, cy2
    return output


def _polygon_area_abs(poly: list) -> float:
    if len(poly) < 3:
        return 0.0
    area = 0.0
    x0, y0 = poly[0]
    for i in range(1, len(poly) - 1):
        area += _tri_signed_area((x0, y0), poly[i], poly[i + 1])
    return abs(area)


def _fan(points: np.ndarray) -> list:
    p0 = tuple(points[0])
    tris = []
    for i in range(1, len(points) - 1):
        a, b = tuple(points[i]), tuple(points[i + 1])
        s = _tri_signed_area(p0, a, b)
        if s == 0.0:
            continue
        tri = [p0, a, b] if s > 0 else [p0, b, a]
        tris.append((1.0 if s > 0 else -1.0, tri))  # tri is stored CCW
    return tris


def polygon_intersection_area(a: PointSequence, b: PointSequence) -> float:
    """Exact |A ∩ B| for two simple polygons (convex or concave)."""
    fan_a = _fan(a.points)
    fan_b = _fan(b.points)
    sign = math.copysign(1.0, signed_area(a)) * math.copysign(1.0, signed_area(b))
    total = 0.0
    for sa, ta in fan_a:
        for sb, tb in fan_b:
            clipped = _clip_convex(ta, tb)
            if len(clipped) >= 3:
                total += sa * sb * _polygon_area_abs(clipped)
    return max(sign * total, 0.0)


def polygon_iou(a: PointSequence, b: PointSequence) -> float:
    """|A ∩ B| / |A ∪ B| for two simple polygons, via exact clipping.

    Self-intersecting inputs are rejected rather than silently clipped.
    """
    for name, seq in (("first", a), ("second", b)):
        if not seq.cyclic:
            raise GeometryError(f"{name} polygon is not cyclic")
        if abs(signed_area(seq)) <= EPS_AREA:
            raise GeometryError(f"{name} polygon has zero area")
        if not is_simple_polygon(seq):
            raise GeometryError(f"{name} polygon is self-intersecting")
    inter = polygon_intersection_area(a, b)
    union = abs(signed_area(a)) + abs(signed_area(b)) - inter
    if union <= 0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)
