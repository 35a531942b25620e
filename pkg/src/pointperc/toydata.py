"""Synthetic shapes and a toy annotated dataset.

Lets the full pipeline (encode, sample episodes, evaluate) run without any
external data.  Shapes are simple polygons with programmatic boxes,
contours, keypoints and centers; everything is a pure function of the seed.
"""

from __future__ import annotations

import numpy as np

from .episodes import Dataset, loads_dataset
from .geometry import PointSequence


def regular_polygon(sides: int, radius: float = 1.0, center=(0.0, 0.0), phase: float = 0.0) -> PointSequence:
    ang = phase + np.linspace(0.0, 2.0 * np.pi, sides, endpoint=False)
    pts = np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])
    return PointSequence(pts, cyclic=True)


def star_polygon(
    tips: int = 5,
    r_outer: float = 1.0,
    r_inner: float = 0.45,
    center=(0.0, 0.0),
    phase: float = 0.0,
) -> PointSequence:
    """Alternating outer/inner radii; 2 * tips vertices."""
    k = 2 * tips
    ang = phase + np.linspace(0.0, 2.0 * np.pi, k, endpoint=False)
    r = np.where(np.arange(k) % 2 == 0, r_outer, r_inner)
    pts = np.column_stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)])
    return PointSequence(pts, cyclic=True)


def blob_polygon(
    n_vertices: int,
    rng: np.random.Generator,
    radius: float = 1.0,
    wobble: float = 0.25,
    center=(0.0, 0.0),
) -> PointSequence:
    """Star-shaped (radially monotone) random polygon; always simple."""
    ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=n_vertices))
    # Keep consecutive angles distinct so no zero-length edges appear.
    ang = ang + np.linspace(0.0, 1e-6, n_vertices)
    r = radius * (1.0 + wobble * rng.uniform(-1.0, 1.0, size=n_vertices))
    pts = np.column_stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)])
    return PointSequence(pts, cyclic=True)


def smooth_blob(
    rng: np.random.Generator,
    n_vertices: int = 64,
    radius: float = 1.0,
    center=(0.0, 0.0),
) -> PointSequence:
    """Dense low-frequency radial contour: bounded curvature, many vertices."""
    ang = np.linspace(0.0, 2.0 * np.pi, n_vertices, endpoint=False)
    r = np.full(n_vertices, radius)
    for harmonic in (2, 3, 5):
        amp = 0.12 * radius / harmonic
        r = r + amp * np.sin(harmonic * ang + rng.uniform(0, 2 * np.pi))
    pts = np.column_stack([center[0] + r * np.cos(ang), center[1] + r * np.sin(ang)])
    return PointSequence(pts, cyclic=True)


# ---------------------------------------------------------------------------
# Toy dataset
# ---------------------------------------------------------------------------

_SHAPES = {
    1: ("triangle", 3),
    2: ("square", 4),
    3: ("pentagon", 5),
    4: ("star", None),
    5: ("hexagon", 6),
}


def _shape_contour(cat_id: int, radius: float, center, phase: float) -> PointSequence:
    name, sides = _SHAPES[cat_id]
    if name == "star":
        return star_polygon(5, radius, 0.45 * radius, center, phase)
    return regular_polygon(sides, radius, center, phase)


def _shape_keypoints(contour: PointSequence, rng: np.random.Generator) -> list:
    """Keypoints are the contour vertices; a vertex is occasionally unlabeled."""
    kps = []
    for x, y in contour.points:
        vis = 2 if rng.uniform() > 0.15 else 0
        kps.append((float(x), float(y), vis))
    if all(v == 0 for _, _, v in kps):
        kps[0] = (kps[0][0], kps[0][1], 2)
    return kps


def toy_dataset(
    seed: int = 0,
    n_images: int = 16,
    image_size: int = 96,
    max_instances_per_image: int = 3,
) -> Dataset:
    """Small deterministic dataset covering all four task annotations."""
    rng = np.random.default_rng(seed)
    images = [
        {"id": i + 1, "width": image_size, "height": image_size} for i in range(n_images)
    ]
    categories = []
    for cid, (name, sides) in _SHAPES.items():
        n_kp = 10 if name == "star" else sides
        categories.append(
            {
                "id": cid,
                "name": name,
                "keypoint_names": [f"{name}_v{i}" for i in range(n_kp)],
                "symmetry_pairs": [[0, n_kp - 1]] if n_kp >= 2 else [],
            }
        )
    annotations = []
    ann_id = 1
    for im in images:
        for _ in range(int(rng.integers(1, max_instances_per_image + 1))):
            cat_id = int(rng.integers(1, len(_SHAPES) + 1))
            radius = float(rng.uniform(8.0, 16.0))
            margin = radius * 1.3
            center = (
                float(rng.uniform(margin, image_size - margin)),
                float(rng.uniform(margin, image_size - margin)),
            )
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            contour = _shape_contour(cat_id, radius, center, phase)
            pts = contour.points
            x0, y0 = pts[:, 0].min(), pts[:, 1].min()
            w, h = pts[:, 0].max() - x0, pts[:, 1].max() - y0
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": im["id"],
                    "category_id": cat_id,
                    "bbox": [float(x0), float(y0), float(w), float(h)],
                    "segmentation": [[float(v) for v in pts.ravel()]],
                    "keypoints": [v for kp in _shape_keypoints(contour, rng) for v in kp],
                    "area": float(w * h * 0.7),
                }
            )
            ann_id += 1
    return loads_dataset(
        {"images": images, "annotations": annotations, "categories": categories}
    )
