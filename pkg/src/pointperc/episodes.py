"""Dataset ingestion, base/novel split, and K-shot episode sampling.

The annotation file is a JSON document with top-level arrays ``images``,
``annotations`` and ``categories``:

    images:      [{"id", "width", "height"}, ...]
    annotations: [{"id"?, "image_id", "category_id", "bbox": [x, y, w, h],
                   "segmentation": [[x1, y1, x2, y2, ...], ...]?,
                   "keypoints": [x1, y1, v1, ...]?, "area"?}, ...]
    categories:  [{"id", "name", "keypoint_names"?, "symmetry_pairs"?}, ...]

An episode fixes (class, K, seed): K support instances are drawn
deterministically, cropped to their margin-expanded boxes with annotations
shifted into crop coordinates, and every remaining image containing the
class becomes a query.  Support and query image sets never overlap.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .codecs import (
    TaskKind,
    encode_box,
    encode_center,
    encode_mask,
    encode_pose,
    largest_polygon,
)
from .geometry import BBox, Point2, PointSequence

DEFAULT_CROP_MARGIN = 0.1
DEFAULT_SEEDS = 10  # evaluation protocol averages over ten seeds


class DatasetError(ValueError):
    """Annotation file violates the schema."""


class EpisodeError(ValueError):
    """Episode cannot be sampled as requested."""


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    keypoint_names: tuple[str, ...] | None = None
    symmetry_pairs: tuple[tuple[int, int], ...] | None = None


@dataclass(frozen=True)
class InstanceAnnotation:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    segmentation: tuple[PointSequence, ...] | None = None
    keypoints: tuple[tuple[float, float, int], ...] | None = None
    area: float | None = None

    @property
    def center(self) -> Point2:
        return self.bbox.center

    def has_task(self, task: TaskKind) -> bool:
        if task is TaskKind.SEGMENT:
            return bool(self.segmentation)
        if task is TaskKind.POSE:
            return bool(self.keypoints)
        return True  # detect and count derive from the box


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageInfo, ...]
    annotations: tuple[InstanceAnnotation, ...]
    categories: tuple[Category, ...]
    image_by_id: dict = field(repr=False, default_factory=dict)
    category_by_id: dict = field(repr=False, default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "image_by_id", {im.id: im for im in self.images})
        object.__setattr__(self, "category_by_id", {c.id: c for c in self.categories})

    def class_ids(self) -> set[int]:
        return set(self.category_by_id)


@dataclass(frozen=True)
class Split:
    base_class_ids: frozenset[int]
    novel_class_ids: frozenset[int]


@dataclass(frozen=True)
class CropTransform:
    """Pure translation between image and crop coordinates."""

    origin_x: float
    origin_y: float
    width: float
    height: float

    def to_crop(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) - np.array([self.origin_x, self.origin_y])

    def to_image(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) + np.array([self.origin_x, self.origin_y])


@dataclass(frozen=True)
class SupportSample:
    annotation_id: int
    image_id: int
    crop: CropTransform
    encodings: dict  # TaskKind -> CanonicalPointSet, in crop coordinates


@dataclass(frozen=True)
class Episode:
    class_id: int
    k: int
    seed: int
    tasks: tuple[TaskKind, ...]
    support: tuple[SupportSample, ...]
    query_image_ids: tuple[int, ...]

    def manifest_record(self) -> dict:
        return {
            "class_id": self.class_id,
            "K": self.k,
            "seed": self.seed,
            "tasks": [t.value for t in self.tasks],
            "support": [
                {
                    "annotation_id": s.annotation_id,
                    "image_id": s.image_id,
                    "crop": {
                        "origin_x": s.crop.origin_x,
                        "origin_y": s.crop.origin_y,
                        "width": s.crop.width,
                        "height": s.crop.height,
                    },
                }
                for s in self.support
            ],
            "query_image_ids": list(self.query_image_ids),
        }

    def manifest_line(self) -> str:
        return json.dumps(self.manifest_record(), separators=(", ", ": "))


# ---------------------------------------------------------------------------
# Loading / saving
# ---------------------------------------------------------------------------


def _require(record: dict, key: str, where: str):
    if key not in record:
        raise DatasetError(f"{where}: missing required field '{key}'")
    return record[key]


def _parse_annotation(rec: dict, index: int, fallback_id: int) -> InstanceAnnotation:
    where = f"annotation #{index}"
    image_id = int(_require(rec, "image_id", where))
    category_id = int(_require(rec, "category_id", where))
    bbox_raw = _require(rec, "bbox", where)
    if not (isinstance(bbox_raw, (list, tuple)) and len(bbox_raw) == 4):
        raise DatasetError(f"{where}: bbox must be [x, y, w, h], got {bbox_raw!r}")
    try:
        bbox = BBox(*[float(v) for v in bbox_raw])
    except ValueError as exc:
        raise DatasetError(f"{where}: {exc}") from exc

    segmentation = None
    if rec.get("segmentation"):
        rings = []
        for ri, ring in enumerate(rec["segmentation"]):
            if len(ring) < 6 or len(ring) % 2 != 0:
                raise DatasetError(
                    f"{where}: segmentation ring {ri} needs an even number of >= 6 values"
                )
            pts = np.asarray(ring, dtype=np.float64).reshape(-1, 2)
            rings.append(PointSequence(pts, cyclic=True))
        segmentation = tuple(rings)

    keypoints = None
    if rec.get("keypoints"):
        flat = rec["keypoints"]
        if len(flat) % 3 != 0:
            raise DatasetError(f"{where}: keypoints must be [x1, y1, v1, ...] triples")
        keypoints = tuple(
            (float(flat[i]), float(flat[i + 1]), int(flat[i + 2]))
            for i in range(0, len(flat), 3)
        )

    area = float(rec["area"]) if "area" in rec else None
    return InstanceAnnotation(
        id=int(rec.get("id", fallback_id)),
        image_id=image_id,
        category_id=category_id,
        bbox=bbox,
        segmentation=segmentation,
        keypoints=keypoints,
        area=area,
    )


def loads_dataset(obj: dict) -> Dataset:
    for key in ("images", "annotations", "categories"):
        if key not in obj or not isinstance(obj[key], list):
            raise DatasetError(f"top level must carry the array '{key}'")

    images = []
    for i, rec in enumerate(obj["images"]):
        where = f"image #{i}"
        images.append(
            ImageInfo(
                id=int(_require(rec, "id", where)),
                width=int(_require(rec, "width", where)),
                height=int(_require(rec, "height", where)),
            )
        )
    categories = []
    for i, rec in enumerate(obj["categories"]):
        where = f"category #{i}"
        kp_names = rec.get("keypoint_names")
        sym = rec.get("symmetry_pairs")
        categories.append(
            Category(
                id=int(_require(rec, "id", where)),
                name=str(_require(rec, "name", where)),
                keypoint_names=tuple(kp_names) if kp_names else None,
                symmetry_pairs=tuple(tuple(p) for p in sym) if sym else None,
            )
        )
    image_ids = {im.id for im in images}
    if len(image_ids) != len(images):
        raise DatasetError("duplicate image ids")
    category_ids = {c.id for c in categories}
    if len(category_ids) != len(categories):
        raise DatasetError("duplicate category ids")
    cat_by_id = {c.id: c for c in categories}

    annotations = []
    for i, rec in enumerate(obj["annotations"]):
        ann = _parse_annotation(rec, i, fallback_id=i)
        if ann.image_id not in image_ids:
            raise DatasetError(f"annotation #{i}: unknown image_id {ann.image_id}")
        if ann.category_id not in category_ids:
            raise DatasetError(f"annotation #{i}: unknown category_id {ann.category_id}")
        cat = cat_by_id[ann.category_id]
        if ann.keypoints is not None and cat.keypoint_names is not None:
            if len(ann.keypoints) != len(cat.keypoint_names):
                raise DatasetError(
                    f"annotation #{i}: {len(ann.keypoints)} keypoints but category "
                    f"'{cat.name}' defines {len(cat.keypoint_names)}"
                )
        if ann.keypoints is not None and cat.keypoint_names is None:
            raise DatasetError(
                f"annotation #{i}: category '{cat.name}' has keypoints but no keypoint_names"
            )
        annotations.append(ann)
    return Dataset(tuple(images), tuple(annotations), tuple(categories))


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: not valid JSON: {exc}") from exc
    return loads_dataset(obj)


def dataset_to_obj(ds: Dataset) -> dict:
    def ann_obj(a: InstanceAnnotation) -> dict:
        rec = {
            "id": a.id,
            "image_id": a.image_id,
            "category_id": a.category_id,
            "bbox": [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
        }
        if a.segmentation:
            rec["segmentation"] = [
                [float(v) for v in ring.points.ravel()] for ring in a.segmentation
            ]
        if a.keypoints:
            rec["keypoints"] = [v for kp in a.keypoints for v in kp]
        if a.area is not None:
            rec["area"] = a.area
        return rec

    def cat_obj(c: Category) -> dict:
        rec = {"id": c.id, "name": c.name}
        if c.keypoint_names:
            rec["keypoint_names"] = list(c.keypoint_names)
        if c.symmetry_pairs:
            rec["symmetry_pairs"] = [list(p) for p in c.symmetry_pairs]
        return rec

    return {
        "images": [{"id": im.id, "width": im.width, "height": im.height} for im in ds.images],
        "annotations": [ann_obj(a) for a in ds.annotations],
        "categories": [cat_obj(c) for c in ds.categories],
    }


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_obj(ds), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------


def default_novel_class_ids() -> frozenset[int]:
    """The conventional VOC-overlap novel set, read from the editable config."""
    cfg = json.loads(
        resources.files("pointperc").joinpath("data/voc_novel_ids.json").read_text()
    )
    return frozenset(cfg["novel_class_ids"])


def make_split(ds: Dataset, novel_ids: Iterable[int] | None = None) -> Split:
    """Partition the dataset's classes into base and novel sets."""
    all_ids = ds.class_ids()
    if novel_ids is None:
        novel = frozenset(default_novel_class_ids() & all_ids)
    else:
        novel = frozenset(int(i) for i in novel_ids)
        unknown = novel - all_ids
        if unknown:
            raise DatasetError(f"unknown novel class ids: {sorted(unknown)}")
    return Split(base_class_ids=frozenset(all_ids - novel), novel_class_ids=novel)


# ---------------------------------------------------------------------------
# Episode sampling
# ---------------------------------------------------------------------------


def _episode_rng(class_id: int, k: int, seed: int) -> np.random.Generator:
    # Stable across processes: do not rely on Python's salted hash().
    digest = hashlib.sha256(f"episode:{class_id}:{k}:{seed}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _crop_for(ann: InstanceAnnotation, image: ImageInfo, margin: float) -> CropTransform:
    b = ann.bbox
    pad_x, pad_y = margin * b.w / 2.0, margin * b.h / 2.0
    x0 = max(0.0, b.x - pad_x)
    y0 = max(0.0, b.y - pad_y)
    x1 = min(float(image.width), b.x + b.w + pad_x)
    y1 = min(float(image.height), b.y + b.h + pad_y)
    return CropTransform(origin_x=x0, origin_y=y0, width=x1 - x0, height=y1 - y0)


def _encode_support(
    ann: InstanceAnnotation,
    crop: CropTransform,
    tasks: Sequence[TaskKind],
    det_points: int,
    seg_points: int,
) -> dict:
    shift = np.array([crop.origin_x, crop.origin_y])
    box = BBox(ann.bbox.x - shift[0], ann.bbox.y - shift[1], ann.bbox.w, ann.bbox.h)
    encodings = {}
    for task in tasks:
        if task is TaskKind.DETECT:
            encodings[task] = encode_box(box, det_points)
        elif task is TaskKind.COUNT:
            encodings[task] = encode_center(box)
        elif task is TaskKind.SEGMENT:
            ring = largest_polygon(list(ann.segmentation))
            encodings[task] = encode_mask(
                PointSequence(ring.points - shift, cyclic=True), seg_points
            )
        elif task is TaskKind.POSE:
            encodings[task] = encode_pose(
                [(x - shift[0], y - shift[1], v > 0) for x, y, v in ann.keypoints]
            )
    return encodings


def sample_episode(
    ds: Dataset,
    split: Split,
    class_id: int,
    k: int,
    seed: int,
    tasks: Sequence[TaskKind] = (TaskKind.DETECT,),
    margin: float = DEFAULT_CROP_MARGIN,
    det_points: int = 16,
    seg_points: int = 32,
) -> Episode:
    """Deterministic K-shot episode for one novel class.

    The same (class, K, seed) triple always yields the same episode.  Every
    support instance must carry annotations for every requested task.
    """
    if class_id not in split.novel_class_ids:
        raise EpisodeError(f"class {class_id} is not in the novel split")
    if k < 1:
        raise EpisodeError(f"K must be >= 1, got {k}")
    tasks = tuple(tasks)
    candidates = [
        a
        for a in ds.annotations
        if a.category_id == class_id and all(a.has_task(t) for t in tasks)
    ]
    candidates.sort(key=lambda a: (a.image_id, a.id))
    if len(candidates) < k:
        raise EpisodeError(
            f"class {class_id} has {len(candidates)} instances with "
            f"{[t.value for t in tasks]} annotations, need K={k}"
        )
    rng = _episode_rng(class_id, k, seed)
    chosen_idx = sorted(rng.choice(len(candidates), size=k, replace=False).tolist())
    chosen = [candidates[i] for i in chosen_idx]

    support = []
    for ann in chosen:
        crop = _crop_for(ann, ds.image_by_id[ann.image_id], margin)
        support.append(
            SupportSample(
                annotation_id=ann.id,
                image_id=ann.image_id,
                crop=crop,
                encodings=_encode_support(ann, crop, tasks, det_points, seg_points),
            )
        )
    support_images = {s.image_id for s in support}
    class_images = sorted(
        {a.image_id for a in ds.annotations if a.category_id == class_id}
    )
    queries = tuple(i for i in class_images if i not in support_images)
    return Episode(
        class_id=class_id,
        k=k,
        seed=seed,
        tasks=tasks,
        support=tuple(support),
        query_image_ids=queries,
    )


# ---------------------------------------------------------------------------
# Multi-seed aggregation
# ---------------------------------------------------------------------------


def aggregate_over_seeds(
    results_by_seed: Mapping[int, Mapping[str, float]],
) -> dict[str, tuple[float, float]]:
    """Unweighted mean and sample stddev per metric across seeds.

    All seeds must report the same metric keys.  A single seed yields
    stddev 0 by convention.
    """
    if not results_by_seed:
        raise EpisodeError("no seeds to aggregate")
    seeds = sorted(results_by_seed)
    keys = set(results_by_seed[seeds[0]])
    for s in seeds[1:]:
        if set(results_by_seed[s]) != keys:
            raise EpisodeError(
                f"seed {s} reports metrics {sorted(results_by_seed[s])}, "
                f"expected {sorted(keys)}"
            )
    out = {}
    for key in sorted(keys):
        vals = np.array([results_by_seed[s][key] for s in seeds], dtype=np.float64)
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[key] = (float(np.mean(vals)), std)
    return out


def aggregate_metric_records(records: Sequence[Mapping]) -> list[dict]:
    """Aggregate {scenario, task, class, K, seed, metric, value} records over
    seeds; one output row per (scenario, task, class, K, metric)."""
    grouped: dict[tuple, list[float]] = {}
    for rec in records:
        key = (rec["scenario"], rec["task"], rec["class"], rec["K"], rec["metric"])
        grouped.setdefault(key, []).append(float(rec["value"]))
    rows = []
    for key in sorted(grouped, key=lambda k: tuple(str(p) for p in k)):
        vals = np.array(grouped[key], dtype=np.float64)
        scenario, task, cls, k_shots, metric = key
        rows.append(
            {
                "scenario": scenario,
                "task": task,
                "class": cls,
                "K": k_shots,
                "metric": metric,
                "mean": float(np.mean(vals)),
                "stddev": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                "n_seeds": int(len(vals)),
            }
        )
    return rows
