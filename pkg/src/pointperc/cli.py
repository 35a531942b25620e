"""Command-line front door: encode annotations, run gradient checks, fit
demo shapes, train the toy decoder, and evaluate predictions.

All randomness flows through explicit ``--seed`` flags; identical
invocations produce byte-identical outputs.  Exit codes: 0 success,
1 validation error, 2 numerical failure.  ``POINTPERC_THREADS`` caps the
per-class worker threads used during evaluation.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import codecs, decoder, episodes, metrics, sapl, toydata
from .codecs import TaskKind
from .geometry import GeometryError, PointSequence

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

GRADCHECK_TOLERANCE = 1e-6


class CliError(Exception):
    """Validation failure; maps to exit code 1."""


class NumericalFailure(Exception):
    """Numerical failure; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the CLI contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(message)


def _max_workers() -> int:
    raw = os.environ.get("POINTPERC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError(f"POINTPERC_THREADS must be an integer, got {raw!r}")


def _task_from_flag(value: str) -> TaskKind:
    try:
        return TaskKind(value)
    except ValueError:
        raise CliError(
            f"unknown task {value!r}; expected one of "
            f"{[t.value for t in TaskKind]}"
        )


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------


def run_encode(annotations_path: str, task: TaskKind, n_points: int | None, out_path: str) -> int:
    ds = episodes.load_dataset(annotations_path)
    records = []
    for ann in ds.annotations:
        try:
            if task is TaskKind.DETECT:
                cps = codecs.encode_box(ann.bbox, n_points or codecs.DEFAULT_DETECT_POINTS)
            elif task is TaskKind.COUNT:
                cps = codecs.encode_center(ann.bbox)
            elif task is TaskKind.SEGMENT:
                if not ann.segmentation:
                    continue
                ring = codecs.largest_polygon(list(ann.segmentation))
                cps = codecs.encode_mask(ring, n_points or codecs.DEFAULT_SEGMENT_POINTS)
            else:
                if not ann.keypoints:
                    continue
                cps = codecs.encode_pose([(x, y, v > 0) for x, y, v in ann.keypoints])
        except (codecs.CodecError, GeometryError) as exc:
            raise CliError(f"annotation id {ann.id}: {exc}") from exc
        records.append(
            codecs.to_record(cps, ann.category_id, image_id=ann.image_id, annotation_id=ann.id)
        )
    codecs.write_records(out_path, records)
    print(f"wrote {len(records)} {task.value} records to {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def run_gradcheck(seed: int = 0, n_pairs: int = 16, inject_error: float = 0.0) -> tuple[float, float]:
    """Max relative gradient errors for (point loss, decoder parameters)."""
    rng = np.random.default_rng(seed)
    worst_sapl = 0.0
    for trial in range(n_pairs):
        cyclic = trial % 2 == 0
        k = 32 if cyclic else 8
        cfg = sapl.SaplConfig(n_hops=1 + trial % 4)
        pred, gt = sapl.random_gradcheck_pair(k, cyclic, rng, n_hops=4)
        analytic = sapl.point_loss(pred, gt, cfg).per_point_grad + inject_error
        numeric = sapl.finite_difference_grad(pred, gt, cfg, h=1e-6)
        scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
        worst_sapl = max(worst_sapl, float(np.abs(analytic - numeric).max() / scale))

    tiny = decoder.DecoderConfig(d=8, d_ff=16, n_layers=1, roi_grid=3)
    scfg = sapl.SaplConfig(n_hops=2)
    params, batch = decoder.gradcheck_batch(tiny, scfg, seed=seed)
    worst_decoder = decoder.parameter_gradcheck(
        params, batch, scfg, h=1e-5, perturb=inject_error
    )
    return worst_sapl, worst_decoder


def cmd_gradcheck(args) -> int:
    inject = 1e-3 if args.inject_error else 0.0
    worst_sapl, worst_decoder = run_gradcheck(seed=args.seed, inject_error=inject)
    ok = worst_sapl < GRADCHECK_TOLERANCE and worst_decoder < GRADCHECK_TOLERANCE
    print(f"point-loss gradients:  max relative error {worst_sapl:.3e}")
    print(f"decoder gradients:     max relative error {worst_decoder:.3e}")
    print(f"tolerance {GRADCHECK_TOLERANCE:.0e}: {'PASS' if ok else 'FAIL'}")
    if not ok:
        raise NumericalFailure("gradient check failed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fitdemo
# ---------------------------------------------------------------------------


def _demo_target(shape: str, seed: int) -> tuple[PointSequence, PointSequence]:
    rng = np.random.default_rng(seed)
    if shape == "square":
        gt = PointSequence([(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)], cyclic=True)
    elif shape == "star":
        gt = toydata.star_polygon(5, r_outer=4.0, r_inner=1.8, center=(5.0, 5.0))
    else:
        raise CliError(f"unknown shape {shape!r}")
    init = PointSequence(gt.points + 0.8 * rng.standard_normal(gt.points.shape), cyclic=True)
    return init, gt


def diamond_ambiguity_report(hops: int = 2) -> dict:
    """Two predictions on the same L1 ball around a ground-truth corner.

    Their coordinate losses agree to the last bit; the angle term tells them
    apart, and only the exact ground truth reaches total zero.
    """
    gt = PointSequence([(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)], cyclic=True)
    # Offsets (0.5, 0) and (0.25, 0.25) have the same L1 norm (dyadic, exact).
    cand_a = gt.points.copy()
    cand_a[0] = (0.5, 0.0)
    cand_b = gt.points.copy()
    cand_b[0] = (0.25, 0.25)
    cfg = sapl.SaplConfig(n_hops=hops)
    loss_a = sapl.point_loss(PointSequence(cand_a, cyclic=True), gt, cfg)
    loss_b = sapl.point_loss(PointSequence(cand_b, cyclic=True), gt, cfg)
    loss_gt = sapl.point_loss(gt, gt, cfg)
    return {
        "shape": "diamond-ambiguity",
        "hops": hops,
        "l1_a": loss_a.l1_term,
        "l1_b": loss_b.l1_term,
        "l1_gap": abs(loss_a.l1_term - loss_b.l1_term),
        "total_a": loss_a.total,
        "total_b": loss_b.total,
        "total_gap": abs(loss_a.total - loss_b.total),
        "total_at_gt": loss_gt.total,
    }


def run_fitdemo(shape: str, hops: int, steps: int, lr: float, seed: int) -> dict:
    """Fit the demo shape under L1-only and L1+SAPL; return traces + finals."""
    out: dict = {"shape": shape, "hops": hops, "steps": steps, "lr": lr, "seed": seed}
    if shape == "diamond-ambiguity":
        out["ambiguity"] = diamond_ambiguity_report(hops)
        gt = PointSequence([(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)], cyclic=True)
        init_pts = gt.points.copy()
        init_pts[0] = (0.5, 0.0)
        init = PointSequence(init_pts, cyclic=True)
    else:
        init, gt = _demo_target(shape, seed)
    cfg = sapl.SaplConfig(n_hops=hops)
    arms = {}
    for arm, use_sapl in (("l1", False), ("l1+sapl", True)):
        final, trace = sapl.fit_points(init, gt, cfg, steps=steps, lr=lr, include_sapl=use_sapl)
        err = float(np.mean(np.hypot(*(final.points - gt.points).T))) if steps else float(
            np.mean(np.hypot(*(init.points - gt.points).T))
        )
        arms[arm] = {
            "trace": [float(v) for v in trace],
            "final_points": [[float(x), float(y)] for x, y in final.points],
            "mean_point_error": err,
        }
    out["arms"] = arms
    out["gt_points"] = [[float(x), float(y)] for x, y in gt.points]
    out["init_points"] = [[float(x), float(y)] for x, y in init.points]
    return out


def cmd_fitdemo(args) -> int:
    result = run_fitdemo(args.shape, args.hops, args.steps, args.lr, args.seed)
    lines = []
    if "ambiguity" in result:
        lines.append({"record": "ambiguity", **result["ambiguity"]})
    for arm, data in result["arms"].items():
        for step, value in enumerate(data["trace"]):
            lines.append({"record": "trace", "arm": arm, "step": step, "loss": value})
        lines.append(
            {
                "record": "final",
                "arm": arm,
                "mean_point_error": data["mean_point_error"],
                "points": data["final_points"],
            }
        )
    codecs.write_records(args.out, lines)
    for arm, data in result["arms"].items():
        print(f"{arm}: final mean point error {data['mean_point_error']:.6f}")
    if "ambiguity" in result:
        amb = result["ambiguity"]
        print(
            f"ambiguity: l1 gap {amb['l1_gap']:.3e}, total gap {amb['total_gap']:.6f}, "
            f"total at gt {amb['total_at_gt']:.1f}"
        )
    print(f"wrote {len(lines)} records to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# traintoy
# ---------------------------------------------------------------------------


def cmd_traintoy(args) -> int:
    scfg = sapl.SaplConfig(n_hops=args.hops)
    if args.resume:
        params, extra = decoder.load_checkpoint(args.resume)
        seed = int(extra["seed"])
        n_points = int(extra["n_points"])
        grid_size = int(extra["grid_size"])
        start_step = int(extra["step"])
        cfg = params.config
    else:
        cfg = decoder.DecoderConfig(d=args.dim, d_ff=2 * args.dim, n_layers=args.layers)
        params = decoder.init_params(cfg, seed=args.seed)
        seed, n_points, grid_size, start_step = args.seed, args.points, 16, 0
    batch = decoder.make_toy_batch(cfg, seed=seed, n_points=n_points, grid_size=grid_size)
    curve = []
    for step in range(start_step, start_step + args.steps):
        try:
            params, breakdown = decoder.train_step(params, batch, scfg, lr=args.lr)
        except decoder.DecoderError as exc:
            raise NumericalFailure(f"step {step}: {exc}") from exc
        if not math.isfinite(breakdown.total):
            raise NumericalFailure(f"step {step}: non-finite loss")
        curve.append(
            {
                "step": step,
                "l1": breakdown.l1_term,
                "sapl": breakdown.sapl_term,
                "total": breakdown.total,
            }
        )
    decoder.save_checkpoint(
        params,
        args.out,
        extra={
            "seed": seed,
            "n_points": n_points,
            "grid_size": grid_size,
            "step": start_step + args.steps,
            "lr": args.lr,
        },
    )
    if args.curve:
        codecs.write_records(args.curve, curve)
    if curve:
        print(
            f"steps {curve[0]['step']}..{curve[-1]['step']}: "
            f"loss {curve[0]['total']:.4f} -> {curve[-1]['total']:.4f}"
        )
    print(f"checkpoint written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _gt_tables(ds: episodes.Dataset, task: TaskKind, det_points: int, seg_points: int):
    gts = []
    for ann in ds.annotations:
        if not ann.has_task(task):
            continue
        if task is TaskKind.DETECT:
            cps = codecs.encode_box(ann.bbox, det_points)
        elif task is TaskKind.SEGMENT:
            cps = codecs.encode_mask(codecs.largest_polygon(list(ann.segmentation)), seg_points)
        elif task is TaskKind.POSE:
            cps = codecs.encode_pose([(x, y, v > 0) for x, y, v in ann.keypoints])
        else:
            cps = codecs.encode_center(ann.bbox)
        area = ann.area if ann.area else ann.bbox.area
        gts.append(
            metrics.GroundTruth(
                image_id=ann.image_id,
                category_id=ann.category_id,
                points=cps,
                area=area if area > 0 else 1.0,
            )
        )
    return gts


def _detections_from_records(records: list[dict], task: TaskKind) -> list[metrics.Detection]:
    dets = []
    for i, rec in enumerate(records):
        if rec.get("task") != task.value:
            continue
        try:
            cps, category_id = codecs.from_record(rec)
            dets.append(
                metrics.Detection(
                    image_id=int(rec["image_id"]),
                    category_id=category_id,
                    score=float(rec.get("score", 1.0)),
                    points=cps,
                )
            )
        except (KeyError, ValueError) as exc:
            raise CliError(f"prediction record #{i}: {exc}") from exc
    return dets


def _evaluate_task(
    task: TaskKind,
    dets: list[metrics.Detection],
    gts: list[metrics.GroundTruth],
    kappa: float,
    count_threshold: float,
    image_ids: list[int],
) -> metrics.EvalResult:
    if task is TaskKind.COUNT:
        pred_counts = metrics.counts_from_detections(dets, count_threshold)
        class_ids = sorted({g.category_id for g in gts})
        per_class = {}
        for cid in class_ids:
            gt_counts = {}
            for g in gts:
                if g.category_id == cid:
                    gt_counts[g.image_id] = gt_counts.get(g.image_id, 0) + 1
            pairs = [
                (pred_counts.get((img, cid), 0), gt_counts.get(img, 0)) for img in image_ids
            ]
            per_class[cid] = pairs
        result = metrics.EvalResult(ap_per_threshold={}, mean_ap=0.0)
        result.count_mse = metrics.counting_mse(per_class)
        return result
    if task is TaskKind.DETECT:
        similarity = metrics.box_similarity
    elif task is TaskKind.SEGMENT:
        similarity = metrics.mask_similarity
    else:
        similarity = metrics.make_pose_similarity(kappa=kappa)
    class_ids = sorted({g.category_id for g in gts})
    workers = _max_workers()

    def one_class(cid):
        return cid, metrics.average_precision(
            [d for d in dets if d.category_id == cid],
            [g for g in gts if g.category_id == cid],
            similarity,
        )

    if workers > 1 and len(class_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one_class, class_ids))
    else:
        pairs = [one_class(cid) for cid in class_ids]
    per_class = dict(sorted(pairs))  # deterministic merge order
    thresholds = metrics.default_thresholds()
    ap_per_threshold = {
        t: sum(per_class[c].ap_per_threshold[t] for c in class_ids) / len(class_ids)
        for t in thresholds
    }
    mean_ap = sum(r.mean_ap for r in per_class.values()) / len(class_ids)
    return metrics.EvalResult(
        ap_per_threshold=ap_per_threshold, mean_ap=mean_ap, per_class=per_class
    )


def cmd_evaluate(args) -> int:
    ds = episodes.load_dataset(args.annotations)
    pred_records = codecs.read_records(args.predictions)
    tasks = [_task_from_flag(t.strip()) for t in args.tasks.split(",") if t.strip()]
    if not tasks:
        raise CliError("no tasks requested")
    image_ids = sorted(im.id for im in ds.images)
    seeds = sorted({int(rec.get("seed", 0)) for rec in pred_records}) or [0]
    if args.seeds is not None:
        seeds = [s for s in seeds if 0 <= s < args.seeds]
        if not seeds:
            raise CliError(f"--seeds {args.seeds} leaves no prediction seeds to evaluate")
    all_records: list[dict] = []
    for task in tasks:
        gts = _gt_tables(ds, task, args.points, args.seg_points)
        if not gts:
            raise CliError(f"annotation file has no ground truth for task {task.value}")
        scenario = "unseen" if task is TaskKind.COUNT else "seen"
        for seed in seeds:
            seed_records = [r for r in pred_records if int(r.get("seed", 0)) == seed]
            dets = _detections_from_records(seed_records, task)
            result = _evaluate_task(
                task, dets, gts, args.kappa, args.count_threshold, image_ids
            )
            all_records.extend(
                metrics.metric_records(result, scenario, task.value, args.shots, seed)
            )
    codecs.write_records(args.out, all_records)
    agg_rows = episodes.aggregate_metric_records(all_records)
    agg_path = args.aggregate or (args.out + ".agg.jsonl")
    codecs.write_records(agg_path, agg_rows)
    for row in agg_rows:
        if row["class"] == "all" or row["metric"] in ("mean_ap", "count_mse"):
            print(
                f"{row['scenario']:6s} {row['task']:8s} class={row['class']!s:4s} "
                f"{row['metric']}: {row['mean']:.4f} (stddev {row['stddev']:.4f}, "
                f"{row['n_seeds']} seeds)"
            )
    print(f"wrote {len(all_records)} records to {args.out}, aggregates to {agg_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pointperc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="convert annotations to canonical point records")
    p.add_argument("--annotations", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--points", type=int, default=None, help="point count for detect/segment")
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-error", action="store_true", help="negative-control hook")

    p = sub.add_parser("fitdemo", help="gradient-descent point fitting demos")
    p.add_argument("--shape", required=True, choices=["square", "star", "diamond-ambiguity"])
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--steps", type=int, default=150)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("traintoy", help="train the decoder on one synthetic episode")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hops", type=int, default=2)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--curve", default=None, help="per-step loss records path")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")

    p = sub.add_parser("toyset", help="write the bundled synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", type=int, default=16)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score prediction records against annotations")
    p.add_argument("--predictions", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--tasks", default="detect", help="comma-separated task list")
    p.add_argument("--shots", type=int, default=1, help="K recorded in the output")
    p.add_argument(
        "--seeds", type=int, default=None,
        help="evaluate only prediction seeds in [0, N); default: every seed present"
    )
    p.add_argument("--points", type=int, default=16)
    p.add_argument("--seg-points", type=int, default=32)
    p.add_argument("--kappa", type=float, default=metrics.DEFAULT_KAPPA)
    p.add_argument(
        "--count-threshold", type=float, default=metrics.DEFAULT_COUNT_SCORE_THRESHOLD
    )
    p.add_argument("--out", required=True)
    p.add_argument("--aggregate", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "encode":
            return run_encode(args.annotations, _task_from_flag(args.task), args.points, args.out)
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        if args.command == "fitdemo":
            return cmd_fitdemo(args)
        if args.command == "traintoy":
            return cmd_traintoy(args)
        if args.command == "toyset":
            ds = toydata.toy_dataset(seed=args.seed, n_images=args.images)
            episodes.save_dataset(ds, args.out)
            print(f"wrote {len(ds.annotations)} annotations to {args.out}")
            return EXIT_OK
        if args.command == "evaluate":
            return cmd_evaluate(args)
        raise CliError(f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (
        episodes.DatasetError,
        episodes.EpisodeError,
        codecs.CodecError,
        GeometryError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
