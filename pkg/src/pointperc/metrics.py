"""Evaluation stack: AP over IoU thresholds, OKS keypoint similarity, and
per-class counting MSE.

Average precision follows the standard COCO procedure: detections sorted by
score (ties broken by insertion order), greedy matching per IoU threshold,
101-point interpolated area under the precision-envelope/recall curve, and
the mean over thresholds 0.50:0.05:0.95.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .codecs import CanonicalPointSet, TaskKind

DEFAULT_KAPPA = 0.1
DEFAULT_COUNT_SCORE_THRESHOLD = 0.5


def default_thresholds() -> tuple[float, ...]:
    # Integer ratios keep equality cases (e.g. IoU exactly 3/5) well defined.
    return tuple(t / 100.0 for t in range(50, 100, 5))


class MetricError(ValueError):
    """Invalid metric inputs."""


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    score: float
    points: CanonicalPointSet

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise MetricError(f"score must be finite in [0, 1], got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    category_id: int
    points: CanonicalPointSet
    area: float = 0.0

    def __post_init__(self) -> None:
        if self.area < 0:
            raise MetricError(f"area must be >= 0, got {self.area}")


@dataclass
class EvalResult:
    ap_per_threshold: dict[float, float]
    mean_ap: float
    per_class: dict[int, "EvalResult"] = field(default_factory=dict)
    count_mse: float | None = None


def oks(
    pred: CanonicalPointSet,
    gt: CanonicalPointSet,
    eval_mask: Sequence[bool] | np.ndarray,
    area: float,
    kappa: float = DEFAULT_KAPPA,
) -> float:
    """Object keypoint similarity in [0, 1].

    Mean over evaluable keypoints of exp(-d_i^2 / (2 * area * kappa^2)).
    ``eval_mask`` selects the keypoints that count: by protocol, those seen
    in at least one support image and present in the query annotation.
    """
    if pred.task is not TaskKind.POSE or gt.task is not TaskKind.POSE:
        raise MetricError("oks expects pose point sets")
    if len(pred) != len(gt):
        raise MetricError(f"keypoint count mismatch: {len(pred)} vs {len(gt)}")
    if area <= 0:
        raise MetricError(f"area must be positive, got {area}")
    mask = np.asarray(eval_mask, dtype=bool)
    if mask.shape != (len(gt),):
        raise MetricError(f"eval mask length {mask.shape} does not match {len(gt)} keypoints")
    if not mask.any():
        raise MetricError("no evaluable keypoints")
    d2 = ((pred.points.points - gt.points.points) ** 2).sum(axis=1)
    sims = np.exp(-d2[mask] / (2.0 * area * kappa * kappa))
    return float(np.mean(sims))


def _ap_from_flags(flags: list[bool], n_gt: int) -> float:
    """101-point interpolated AP from per-rank TP flags."""
    if n_gt == 0:
        return 0.0
    precisions = []
    recalls = []
    tp = 0
    for rank, is_tp in enumerate(flags, start=1):
        if is_tp:
            tp += 1
        precisions.append(tp / rank)
        recalls.append(tp / n_gt)
    # Precision envelope: running max from the high-recall end.
    envelope = precisions[:]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for k in range(101):
        r = k / 100.0
        p = 0.0
        for rec, env in zip(recalls, envelope):
            if rec >= r:
                p = env
                break
        total += p
    return total / 101.0


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    similarity: Callable[[Detection, GroundTruth], float],
    thresholds: Sequence[float] | None = None,
) -> EvalResult:
    """Greedy-matched AP for a single category.

    Each detection, in descending score order, matches the unmatched ground
    truth in its image with the highest similarity, provided that similarity
    clears the threshold.  An empty ground-truth set yields AP 0 (defined,
    not an error).
    """
    thresholds = tuple(thresholds) if thresholds is not None else default_thresholds()
    cats = {d.category_id for d in dets} | {g.category_id for g in gts}
    if len(cats) > 1:
        raise MetricError(f"average_precision handles one category at a time, got {sorted(cats)}")

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    gt_by_image: dict[int, list[int]] = {}
    for j, g in enumerate(gts):
        gt_by_image.setdefault(g.image_id, []).append(j)
    sim = {}
    for i in order:
        for j in gt_by_image.get(dets[i].image_id, []):
            sim[(i, j)] = similarity(dets[i], gts[j])

    ap_per_threshold: dict[float, float] = {}
    for thr in thresholds:
        matched: set[int] = set()
        flags: list[bool] = []
        for i in order:
            best_j = -1
            best_sim = -1.0
            for j in gt_by_image.get(dets[i].image_id, []):
                if j in matched:
                    continue
                s = sim[(i, j)]
                if s >= thr and s > best_sim:
                    best_sim = s
                    best_j = j
            if best_j >= 0:
                matched.add(best_j)
                flags.append(True)
            else:
                flags.append(False)
        ap_per_threshold[thr] = _ap_from_flags(flags, len(gts))

    mean_ap = sum(ap_per_threshold[t] for t in thresholds) / len(thresholds)
    return EvalResult(ap_per_threshold=ap_per_threshold, mean_ap=mean_ap)


def evaluate_by_class(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    similarity: Callable[[Detection, GroundTruth], float],
    thresholds: Sequence[float] | None = None,
) -> EvalResult:
    """Per-class AP plus the unweighted class mean (classes taken from GT)."""
    thresholds = tuple(thresholds) if thresholds is not None else default_thresholds()
    class_ids = sorted({g.category_id for g in gts})
    if not class_ids:
        raise MetricError("no ground-truth classes to evaluate")
    per_class = {}
    for cid in class_ids:
        per_class[cid] = average_precision(
            [d for d in dets if d.category_id == cid],
            [g for g in gts if g.category_id == cid],
            similarity,
            thresholds,
        )
    ap_per_threshold = {
        t: sum(per_class[c].ap_per_threshold[t] for c in class_ids) / len(class_ids)
        for t in thresholds
    }
    mean_ap = sum(r.mean_ap for r in per_class.values()) / len(class_ids)
    return EvalResult(ap_per_threshold=ap_per_threshold, mean_ap=mean_ap, per_class=per_class)


def counting_mse(per_class_pairs: Mapping, ) -> float:
    """Mean over classes of the per-class MSE of (predicted, true) counts.

    Classes weigh equally no matter how many images they have.
    """
    if not per_class_pairs:
        raise MetricError("no classes to evaluate")
    class_mses = []
    for cls in per_class_pairs:
        pairs = per_class_pairs[cls]
        if not pairs:
            raise MetricError(f"class {cls} has no image pairs")
        class_mses.append(sum((p - g) ** 2 for p, g in pairs) / len(pairs))
    return sum(class_mses) / len(class_mses)


def counts_from_detections(
    dets: Sequence[Detection],
    score_threshold: float = DEFAULT_COUNT_SCORE_THRESHOLD,
) -> dict[tuple[int, int], int]:
    """Predicted count per (image, class): detections at or above threshold."""
    counts: dict[tuple[int, int], int] = {}
    for d in dets:
        if d.score >= score_threshold:
            key = (d.image_id, d.category_id)
            counts[key] = counts.get(key, 0) + 1
    return counts


# ---------------------------------------------------------------------------
# Similarity functions for the three AP flavours
# ---------------------------------------------------------------------------


def box_similarity(det: Detection, gt: GroundTruth) -> float:
    from .codecs import decode_box
    from .geometry import box_iou

    return box_iou(decode_box(det.points), decode_box(gt.points))


def mask_similarity(det: Detection, gt: GroundTruth) -> float:
    from .geometry import polygon_iou

    return polygon_iou(det.points.points, gt.points.points)


def make_pose_similarity(
    kappa: float = DEFAULT_KAPPA,
    support_visible: np.ndarray | None = None,
) -> Callable[[Detection, GroundTruth], float]:
    """OKS similarity with the support/query visibility filter baked in.

    A keypoint is evaluable when it is visible in the query annotation and,
    if ``support_visible`` is given, also seen in at least one support crop.
    """

    def similarity(det: Detection, gt: GroundTruth) -> float:
        vis = gt.points.visibility
        mask = np.ones(len(gt.points), dtype=bool) if vis is None else vis.copy()
        if support_visible is not None:
            mask = mask & np.asarray(support_visible, dtype=bool)
        if not mask.any():
            return 0.0
        area = gt.area if gt.area > 0 else 1.0
        return oks(det.points, gt.points, mask, area, kappa)

    return similarity


# ---------------------------------------------------------------------------
# Line-oriented metric records
# ---------------------------------------------------------------------------


def metric_records(
    result: EvalResult,
    scenario: str,
    task: str,
    k_shots: int,
    seed: int,
) -> list[dict]:
    """Flatten an evaluation result into {scenario, task, class, K, seed,
    metric, value} records, one metric per line."""
    records = []

    def emit(class_id, metric, value):
        records.append(
            {
                "scenario": scenario,
                "task": task,
                "class": class_id,
                "K": k_shots,
                "seed": seed,
                "metric": metric,
                "value": float(value),
            }
        )

    targets = result.per_class if result.per_class else {"all": result}
    for class_id, res in targets.items():
        for thr, ap in res.ap_per_threshold.items():
            emit(class_id, f"ap@{thr:.2f}", ap)
        if res.ap_per_threshold:
            emit(class_id, "mean_ap", res.mean_ap)
    if result.per_class and result.ap_per_threshold:
        emit("all", "mean_ap", result.mean_ap)
    if result.count_mse is not None:
        emit("all", "count_mse", result.count_mse)
    return records
