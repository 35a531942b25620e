"""Acceptance suite: one test per release criterion, each printing a
PASS line with its measured numbers (run with ``pytest -s`` to see them
on success)."""

import math
import time

import numpy as np

from pointperc import decoder as dec
from pointperc import episodes as E
from pointperc import metrics as M
from pointperc import sapl
from pointperc.cli import diamond_ambiguity_report, run_fitdemo
from pointperc.codecs import (
    Anchor,
    OffsetSet,
    anchor_decode,
    anchor_encode,
    encode_box,
    encode_mask,
    encode_pose,
)
from pointperc.geometry import (
    BBox,
    PointSequence,
    box_iou,
    polygon_iou,
    signed_area,
    resample_contour,
)
from pointperc.toydata import blob_polygon, smooth_blob, star_polygon, toy_dataset

from oracles import brute_force_ap, raster_iou


def report(name: str, detail: str) -> None:
    print(f"PASS  {name}: {detail}")


def test_sapl_gradcheck_accuracy_and_speed():
    rng = np.random.default_rng(42)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(100):
        n_hops = 1 + trial % 4
        for k, cyclic in ((32, True), (8, False)):
            pred, gt = sapl.random_gradcheck_pair(k, cyclic, rng)
            cfg = sapl.SaplConfig(n_hops=n_hops)
            analytic = sapl.point_loss(pred, gt, cfg).per_point_grad
            numeric = sapl.finite_difference_grad(pred, gt, cfg, h=1e-6)
            scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
            worst = max(worst, float(np.abs(analytic - numeric).max() / scale))
    elapsed = time.perf_counter() - start
    assert worst < 1e-6, f"max relative error {worst}"
    assert elapsed < 5.0, f"runtime {elapsed:.2f}s"
    report("sapl gradcheck", f"max rel err {worst:.2e} over 100+100 pairs, N in 1..4, {elapsed:.2f}s")


def test_diamond_disambiguation():
    rep = diamond_ambiguity_report(hops=2)
    assert rep["l1_gap"] < 1e-12
    assert rep["total_gap"] > 0.0
    assert rep["total_at_gt"] == 0.0
    assert rep["total_a"] > 0.0 and rep["total_b"] > 0.0
    report(
        "diamond disambiguation",
        f"l1 gap {rep['l1_gap']:.1e}, total gap {rep['total_gap']:.2e}, total at gt {rep['total_at_gt']}",
    )


def test_anchor_codec_inverse():
    a = Anchor(10, 20, 4, 8)
    decoded = anchor_decode(OffsetSet(np.array([[0.5, -0.25]])), a)
    assert tuple(decoded.points[0]) == (12.0, 18.0)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        anchor = Anchor(*rng.uniform(-50, 50, 2), *rng.uniform(0.1, 80, 2))
        pts = PointSequence(rng.uniform(-100, 100, size=(int(rng.integers(1, 33)), 2)))
        back = anchor_decode(anchor_encode(pts, anchor), anchor)
        worst = max(worst, float(np.abs(back.points - pts.points).max()))
    assert worst < 1e-12
    report("anchor codec", f"worked example exact; 1000 round trips, worst |err| {worst:.2e}")


def test_contour_pipeline():
    square = PointSequence([(0, 0), (4, 0), (4, 4), (0, 4)], cyclic=True)
    once = resample_contour(square, 32)
    twice = resample_contour(once, 32)
    idem = float(np.abs(once.points - twice.points).max())
    assert idem < 1e-9

    rng = np.random.default_rng(11)
    for _ in range(100):
        poly = blob_polygon(int(rng.integers(4, 16)), rng, radius=4.0, center=(6, 6))
        cps = encode_mask(poly, 32)
        assert signed_area(cps.points) > 0
        p = cps.points.points
        assert np.lexsort((p[:, 1], p[:, 0]))[0] == 0

    worst_iou = 1.0
    for _ in range(25):
        src = smooth_blob(rng, n_vertices=80, radius=8.0, center=(12, 12))
        cps = encode_mask(src, 32)
        worst_iou = min(worst_iou, polygon_iou(src, cps.points))
    assert worst_iou >= 0.95
    report(
        "contour pipeline",
        f"idempotence {idem:.1e}; canonical form on 100 polygons; worst 32-gon IoU {worst_iou:.4f}",
    )


def test_geometry_against_raster_oracle():
    assert box_iou(BBox(0, 0, 2, 2), BBox(0, 0, 2, 2)) == 1.0
    assert box_iou(BBox(0, 0, 2, 2), BBox(1, 1, 2, 2)) == 1.0 / 7.0

    rng = np.random.default_rng(13)
    worst = 0.0
    for trial in range(50):
        if trial % 3 == 0:
            a = star_polygon(5, 4.0, 1.7, center=(5, 5), phase=rng.uniform(0, 2))
        else:
            a = blob_polygon(int(rng.integers(5, 12)), rng, radius=4.0, center=(5, 5))
        b = blob_polygon(int(rng.integers(5, 12)), rng, radius=3.5, center=(6, 4.6))
        exact = polygon_iou(a, b)
        approx = raster_iou(a.points, b.points, resolution=2048)
        worst = max(worst, abs(exact - approx))
    assert worst < 0.005
    report("geometry oracles", f"box examples exact; 50 raster pairs, worst |diff| {worst:.4f}")


def _random_ap_case(rng):
    from pointperc.codecs import decode_box

    n_gt = int(rng.integers(0, 6))
    n_det = int(rng.integers(0, 11))
    gts, dets = [], []
    for _ in range(n_gt):
        img = int(rng.integers(1, 4))
        gts.append(
            M.GroundTruth(img, 1, encode_box(BBox(rng.uniform(0, 10), rng.uniform(0, 10),
                                                  rng.uniform(1, 6), rng.uniform(1, 6))))
        )
    for _ in range(n_det):
        img = int(rng.integers(1, 4))
        if gts and rng.uniform() < 0.7:
            target = gts[int(rng.integers(0, len(gts)))]
            b = decode_box(target.points)
            j = rng.uniform(-1.5, 1.5, 4)
            box = BBox(b.x + j[0], b.y + j[1], max(0.5, b.w + j[2]), max(0.5, b.h + j[3]))
            img = target.image_id
        else:
            box = BBox(rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(1, 6), rng.uniform(1, 6))
        dets.append(M.Detection(img, 1, float(rng.uniform(0.05, 1.0)), encode_box(box)))
    return dets, gts


def test_metrics_oracles():
    thresholds = M.default_thresholds()
    rng = np.random.default_rng(17)
    for _ in range(20):
        dets, gts = _random_ap_case(rng)
        got = M.average_precision(dets, gts, M.box_similarity, thresholds)
        sim = {
            (i, j): M.box_similarity(dets[i], gts[j])
            for i in range(len(dets))
            for j in range(len(gts))
            if dets[i].image_id == gts[j].image_id
        }
        want = brute_force_ap(
            [(d.image_id, d.score) for d in dets], [g.image_id for g in gts], sim, thresholds
        )
        for t in thresholds:
            assert got.ap_per_threshold[t] == want[t]

    single = M.average_precision(
        [M.Detection(1, 1, 0.9, encode_box(BBox(0, 0, 5, 1)))],
        [M.GroundTruth(1, 1, encode_box(BBox(0, 0, 3, 1)))],
        M.box_similarity,
        thresholds,
    )
    assert single.mean_ap == 3.0 / 10.0

    assert M.counting_mse({"A": [(3, 3), (5, 4)], "B": [(2, 0)]}) == 2.25

    area, kappa = 41.0, 0.1
    d = math.sqrt(2 * area * kappa * kappa)
    one = M.oks(
        encode_pose([(0.0, 0.0, True)]), encode_pose([(d, 0.0, True)]), [True], area, kappa
    )
    assert abs(one - math.exp(-1)) < 1e-12
    report(
        "metrics oracles",
        "AP == brute force on 20 cases; IoU-0.6 mean AP 3/10; counting 2.25; OKS e^-1",
    )


def test_decoder_gradcheck_and_training():
    tiny = dec.DecoderConfig(d=8, d_ff=16, n_layers=1, roi_grid=3)
    scfg = sapl.SaplConfig(n_hops=2)
    start = time.perf_counter()
    params, batch = dec.gradcheck_batch(tiny, scfg, seed=0)
    err = dec.parameter_gradcheck(params, batch, scfg, h=1e-5)
    grad_elapsed = time.perf_counter() - start
    assert err < 1e-6, f"gradcheck rel err {err}"
    assert grad_elapsed < 60.0

    start = time.perf_counter()
    cfg = dec.DecoderConfig()
    train_params = dec.init_params(cfg, seed=0)
    train_batch = dec.make_toy_batch(cfg, seed=0)
    first = last = None
    for _ in range(200):
        train_params, breakdown = dec.train_step(train_params, train_batch, scfg, lr=0.005)
        if first is None:
            first = breakdown.total
        last = breakdown.total
    train_elapsed = time.perf_counter() - start
    assert last <= 0.5 * first, f"loss {first:.3f} -> {last:.3f}"
    assert train_elapsed < 30.0
    report(
        "decoder",
        f"gradcheck rel err {err:.2e} in {grad_elapsed:.1f}s; "
        f"training {first:.3f} -> {last:.3f} ({last / first:.0%}) in {train_elapsed:.1f}s",
    )


def test_sapl_benefit_on_star_fit():
    result = run_fitdemo("star", hops=2, steps=150, lr=0.05, seed=0)
    err_sapl = result["arms"]["l1+sapl"]["mean_point_error"]
    err_l1 = result["arms"]["l1"]["mean_point_error"]
    assert err_sapl <= err_l1
    report("sapl benefit", f"star fit: l1+sapl {err_sapl:.4f} <= l1-only {err_l1:.4f}")


def test_protocol_determinism():
    ds = toy_dataset(seed=0)
    split = E.make_split(ds, novel_ids={4, 5})
    from pointperc.codecs import TaskKind

    all_tasks = (TaskKind.DETECT, TaskKind.SEGMENT, TaskKind.POSE, TaskKind.COUNT)
    lines = set()
    for _ in range(3):
        ep = E.sample_episode(ds, split, 4, 3, seed=9, tasks=all_tasks)
        lines.add(ep.manifest_line().encode())
    assert len(lines) == 1

    rng = np.random.default_rng(23)
    per_seed = {s: {"mean_ap": float(rng.uniform()), "count_mse": float(rng.uniform())} for s in range(10)}
    forward = E.aggregate_over_seeds(per_seed)
    backward = E.aggregate_over_seeds(dict(reversed(list(per_seed.items()))))
    assert forward == backward
    report(
        "protocol determinism",
        "episodes byte-identical across runs; 10-seed aggregation order-invariant",
    )
