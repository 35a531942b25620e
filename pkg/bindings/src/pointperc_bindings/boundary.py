"""The boundary functions: validate buffers, delegate, convert back."""

from __future__ import annotations

import numpy as np

from pointperc import metrics as _metrics
from pointperc import sapl as _sapl
from pointperc.codecs import (
    CanonicalPointSet,
    CodecError,
    TaskKind,
    encode_mask,
)
from pointperc.geometry import GeometryError, PointSequence
from pointperc.metrics import Detection, GroundTruth, MetricError

ABI_VERSION = 1


def abi_version() -> int:
    return ABI_VERSION


class BoundaryError(Exception):
    """Carries a structured error record across the boundary."""

    def __init__(self, code: str, message: str, **details):
        super().__init__(message)
        self.record = {"error": code, "message": message, **details}


def flat_to_points(buf, cyclic: bool = False) -> PointSequence:
    """[x1, y1, ..., xK, yK] -> point sequence; length must be even."""
    arr = np.ascontiguousarray(buf, dtype=np.float64)
    if arr.ndim != 1:
        raise BoundaryError("bad_shape", f"expected a flat buffer, got shape {arr.shape}")
    if arr.size == 0 or arr.size % 2 != 0:
        raise BoundaryError("bad_length", f"buffer length must be even and > 0, got {arr.size}")
    try:
        return PointSequence(arr.reshape(-1, 2), cyclic=cyclic)
    except GeometryError as exc:
        raise BoundaryError("bad_values", str(exc)) from exc


def points_to_flat(seq: PointSequence) -> np.ndarray:
    return np.ascontiguousarray(seq.points.reshape(-1))


def bound_point_loss(
    pred,
    gt,
    n_hops: int = 2,
    cyclic: bool = True,
) -> tuple[float, float, float, np.ndarray]:
    """(total, l1, sapl, grad) of the combined point loss.

    ``pred`` and ``gt`` are flat coordinate buffers of equal length; the
    gradient comes back in the same flat layout.
    """
    pred_seq = flat_to_points(pred, cyclic=cyclic)
    gt_seq = flat_to_points(gt, cyclic=cyclic)
    if len(pred_seq) != len(gt_seq):
        raise BoundaryError(
            "length_mismatch",
            f"pred has {len(pred_seq)} points, gt has {len(gt_seq)}",
            pred_len=2 * len(pred_seq),
            gt_len=2 * len(gt_seq),
        )
    try:
        out = _sapl.point_loss(pred_seq, gt_seq, _sapl.SaplConfig(n_hops=n_hops, cyclic=cyclic))
    except _sapl.LossError as exc:
        raise BoundaryError("loss_error", str(exc)) from exc
    return out.total, out.l1_term, out.sapl_term, np.ascontiguousarray(out.per_point_grad.reshape(-1))


def bound_encode_mask(poly, m: int = 32) -> np.ndarray:
    """Canonical m-point contour of a flat polygon buffer, flat again."""
    seq = flat_to_points(poly, cyclic=True)
    try:
        return points_to_flat(encode_mask(seq, m).points)
    except (CodecError, GeometryError) as exc:
        raise BoundaryError("codec_error", str(exc)) from exc


def bound_oks(pred, gt, eval_mask, area: float, kappa: float = 0.1) -> float:
    pred_seq = flat_to_points(pred, cyclic=False)
    gt_seq = flat_to_points(gt, cyclic=False)
    if len(pred_seq) != len(gt_seq):
        raise BoundaryError(
            "length_mismatch",
            f"pred has {len(pred_seq)} keypoints, gt has {len(gt_seq)}",
            pred_len=2 * len(pred_seq),
            gt_len=2 * len(gt_seq),
        )
    try:
        pred_cps = CanonicalPointSet(TaskKind.POSE, pred_seq)
        gt_cps = CanonicalPointSet(TaskKind.POSE, gt_seq)
        return _metrics.oks(pred_cps, gt_cps, eval_mask, area, kappa)
    except (MetricError, CodecError) as exc:
        raise BoundaryError("metric_error", str(exc)) from exc


def bound_ap(detections, ground_truths, thresholds=None) -> dict:
    """Box AP over plain records.

    ``detections``: [{image_id, score, box: [x, y, w, h]}, ...]
    ``ground_truths``: [{image_id, box: [x, y, w, h]}, ...]
    Returns {"ap_per_threshold": {...}, "mean_ap": float}.
    """
    from pointperc.codecs import encode_box
    from pointperc.geometry import BBox

    def to_box(rec, what, i):
        try:
            return encode_box(BBox(*[float(v) for v in rec["box"]]))
        except (KeyError, TypeError, ValueError, CodecError, GeometryError) as exc:
            raise BoundaryError("bad_record", f"{what} #{i}: {exc}") from exc

    dets = [
        Detection(int(r["image_id"]), 1, float(r["score"]), to_box(r, "detection", i))
        for i, r in enumerate(detections)
    ]
    gts = [
        GroundTruth(int(r["image_id"]), 1, to_box(r, "ground truth", i))
        for i, r in enumerate(ground_truths)
    ]
    try:
        res = _metrics.average_precision(dets, gts, _metrics.box_similarity, thresholds)
    except MetricError as exc:
        raise BoundaryError("metric_error", str(exc)) from exc
    return {
        "ap_per_threshold": {f"{t:.2f}": v for t, v in res.ap_per_threshold.items()},
        "mean_ap": res.mean_ap,
    }
