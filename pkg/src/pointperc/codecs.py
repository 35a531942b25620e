"""Task annotation <-> canonical point set codecs.

Every task output is an ordered list of 2-D points:

  * detect  - points sampled uniformly along the box perimeter (cyclic)
  * segment - points sampled uniformly along the mask contour (cyclic)
  * pose    - one point per semantic keypoint, annotation order (open)
  * count   - the single box-center point (open)

Points may also be coded relative to a proposal anchor as normalized
offsets: p = (A_cx + dx * A_w, A_cy + dy * A_h).
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    BBox,
    GeometryError,
    PointSequence,
    bbox_of,
    canonicalize_contour,
    rect_contour,
    resample_contour,
    signed_area,
)

log = logging.getLogger(__name__)

DETECT_POINT_CHOICES = (4, 8, 16)
SEGMENT_POINT_CHOICES = (16, 32, 64)
DEFAULT_DETECT_POINTS = 16
DEFAULT_SEGMENT_POINTS = 32


class CodecError(ValueError):
    """Annotation cannot be converted to/from the point representation."""


class TaskKind(enum.Enum):
    DETECT = "detect"
    SEGMENT = "segment"
    POSE = "pose"
    COUNT = "count"


@dataclass(frozen=True)
class Anchor:
    """Proposal box as center plus strictly positive size."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise CodecError(f"non-finite anchor {vals}")
        if self.w <= 0 or self.h <= 0:
            raise CodecError(f"anchor size must be positive, got ({self.w}, {self.h})")


@dataclass(frozen=True, eq=False)
class OffsetSet:
    """Anchor-normalized (dx, dy) offsets, one row per point."""

    offsets: np.ndarray

    def __post_init__(self) -> None:
        off = np.asarray(self.offsets, dtype=np.float64)
        if off.ndim != 2 or off.shape[1] != 2 or off.shape[0] < 1:
            raise CodecError(f"expected (K, 2) offsets, got shape {off.shape}")
        if not np.all(np.isfinite(off)):
            raise CodecError("offsets contain NaN or Inf")
        off = off.copy()
        off.flags.writeable = False
        object.__setattr__(self, "offsets", off)

    def __len__(self) -> int:
        return self.offsets.shape[0]


def _validate_count(task: TaskKind, k: int) -> None:
    if task is TaskKind.DETECT and k not in DETECT_POINT_CHOICES:
        raise CodecError(f"detect point count must be one of {DETECT_POINT_CHOICES}, got {k}")
    if task is TaskKind.SEGMENT and k not in SEGMENT_POINT_CHOICES:
        raise CodecError(f"segment point count must be one of {SEGMENT_POINT_CHOICES}, got {k}")
    if task is TaskKind.COUNT and k != 1:
        raise CodecError(f"count task carries exactly 1 point, got {k}")
    if task is TaskKind.POSE and k < 1:
        raise CodecError("pose task needs at least 1 keypoint")


@dataclass(frozen=True, eq=False)
class CanonicalPointSet:
    """Unified per-instance output: a task tag plus its point sequence.

    Detect/segment sequences are cyclic; pose/count are open.  ``visibility``
    is a per-point boolean mask, used by the pose task only.
    """

    task: TaskKind
    points: PointSequence
    visibility: np.ndarray | None = None

    def __post_init__(self) -> None:
        cyclic_expected = self.task in (TaskKind.DETECT, TaskKind.SEGMENT)
        if self.points.cyclic != cyclic_expected:
            raise CodecError(
                f"{self.task.value} points must have cyclic={cyclic_expected}"
            )
        _validate_count(self.task, len(self.points))
        if self.visibility is not None:
            if self.task is not TaskKind.POSE:
                raise CodecError("visibility mask is only valid for the pose task")
            vis = np.asarray(self.visibility, dtype=bool)
            if vis.shape != (len(self.points),):
                raise CodecError(
                    f"visibility length {vis.shape} does not match {len(self.points)} points"
                )
            vis = vis.copy()
            vis.flags.writeable = False
            object.__setattr__(self, "visibility", vis)

    def __len__(self) -> int:
        return len(self.points)


def encode_box(b: BBox, m: int = DEFAULT_DETECT_POINTS) -> CanonicalPointSet:
    """Sample ``m`` points uniformly along the box perimeter.

    Clockwise from the top-left corner; ``m`` must be divisible by 4 so the
    far corner is always hit and the round trip through ``decode_box`` is
    exact.
    """
    if m % 4 != 0:
        raise CodecError(f"box point count must be divisible by 4, got {m}")
    _validate_count(TaskKind.DETECT, m)
    if b.w <= 0 or b.h <= 0:
        raise CodecError(f"degenerate box ({b.w} x {b.h})")
    pts = resample_contour(rect_contour(b), m)
    return CanonicalPointSet(TaskKind.DETECT, pts)


def decode_box(pts: CanonicalPointSet | PointSequence) -> BBox:
    """Tight bounding box of a predicted point set."""
    seq = pts.points if isinstance(pts, CanonicalPointSet) else pts
    return bbox_of(seq)


def encode_mask(poly: PointSequence, m: int = DEFAULT_SEGMENT_POINTS) -> CanonicalPointSet:
    """Resample a mask contour to ``m`` points in canonical form.

    The contour is first put in canonical orientation, resampled at equal
    arc length, then the canonical start (leftmost vertex, min-y tie-break)
    is re-applied because resampling may introduce a new leftmost point.
    """
    _validate_count(TaskKind.SEGMENT, m)
    canon = canonicalize_contour(poly)
    resampled = resample_contour(canon, m)
    p = resampled.points
    start = int(np.lexsort((p[:, 1], p[:, 0]))[0])
    out = PointSequence(np.roll(p, -start, axis=0), cyclic=True)
    return CanonicalPointSet(TaskKind.SEGMENT, out)


def largest_polygon(polys: list[PointSequence]) -> PointSequence:
    """Pick the largest-area component of a multi-polygon annotation.

    A single contour cannot represent several components, so instances
    annotated with multiple rings are reduced to their biggest one.
    """
    if not polys:
        raise CodecError("empty polygon list")
    if len(polys) > 1:
        log.info("multi-polygon mask: keeping largest of %d components", len(polys))
    return max(polys, key=lambda s: abs(signed_area(s)))


def encode_center(b: BBox) -> CanonicalPointSet:
    """Single point at the box midpoint (the counting representation)."""
    c = b.center
    return CanonicalPointSet(TaskKind.COUNT, PointSequence([(c.x, c.y)], cyclic=False))


def encode_pose(kpts: list[tuple[float, float, bool]]) -> CanonicalPointSet:
    """Keypoints in annotation order with their visibility flags preserved."""
    if not kpts:
        raise CodecError("empty keypoint list")
    pts = PointSequence([(x, y) for x, y, _ in kpts], cyclic=False)
    vis = np.array([bool(v) for _, _, v in kpts])
    return CanonicalPointSet(TaskKind.POSE, pts, visibility=vis)


def decode_pose(cps: CanonicalPointSet) -> list[tuple[float, float, bool]]:
    if cps.task is not TaskKind.POSE:
        raise CodecError(f"expected pose point set, got {cps.task.value}")
    vis = cps.visibility if cps.visibility is not None else np.ones(len(cps), dtype=bool)
    return [(float(x), float(y), bool(v)) for (x, y), v in zip(cps.points.points, vis)]


def anchor_decode(off: OffsetSet, a: Anchor, cyclic: bool = False) -> PointSequence:
    """p_x = A_cx + dx * A_w,  p_y = A_cy + dy * A_h."""
    pts = np.empty_like(off.offsets)
    pts[:, 0] = a.cx + off.offsets[:, 0] * a.w
    pts[:, 1] = a.cy + off.offsets[:, 1] * a.h
    return PointSequence(pts, cyclic=cyclic)


def anchor_encode(pts: PointSequence, a: Anchor) -> OffsetSet:
    """Exact inverse of :func:`anchor_decode` for positive-size anchors."""
    off = np.empty_like(pts.points)
    off[:, 0] = (pts.points[:, 0] - a.cx) / a.w
    off[:, 1] = (pts.points[:, 1] - a.cy) / a.h
    return OffsetSet(off)


# ---------------------------------------------------------------------------
# Line-oriented record serialization
# ---------------------------------------------------------------------------


def to_record(
    cps: CanonicalPointSet,
    category_id: int,
    **extras,
) -> dict:
    """Build the canonical JSON record {task, category_id, points, visibility?}.

    Extra fields (image_id, score, seed, ...) are appended after the fixed
    ones in the order given.
    """
    rec: dict = {
        "task": cps.task.value,
        "category_id": int(category_id),
        "points": [[float(x), float(y)] for x, y in cps.points.points],
    }
    if cps.visibility is not None:
        rec["visibility"] = [bool(v) for v in cps.visibility]
    for key, val in extras.items():
        if val is not None:
            rec[key] = val
    return rec


def from_record(rec: dict) -> tuple[CanonicalPointSet, int]:
    try:
        task = TaskKind(rec["task"])
        category_id = int(rec["category_id"])
        pts_raw = rec["points"]
    except (KeyError, ValueError) as exc:
        raise CodecError(f"malformed point record: {exc}") from exc
    cyclic = task in (TaskKind.DETECT, TaskKind.SEGMENT)
    try:
        pts = PointSequence(pts_raw, cyclic=cyclic)
    except GeometryError as exc:
        raise CodecError(f"malformed point record: {exc}") from exc
    vis = rec.get("visibility")
    if vis is not None:
        vis = np.asarray(vis, dtype=bool)
    return CanonicalPointSet(task, pts, visibility=vis), category_id


def dump_record_line(rec: dict) -> str:
    return json.dumps(rec, separators=(", ", ": "))


def write_records(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dump_record_line(rec) + "\n")


def read_records(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CodecError(f"{path}:{lineno}: invalid record: {exc}") from exc
    return out
