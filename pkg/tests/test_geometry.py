import math

import numpy as np
import pytest

from pointperc import geometry as g
from pointperc.toydata import blob_polygon, regular_polygon, star_polygon

from oracles import canonical_frame_angle, raster_area, raster_iou


class TestTypes:
    def test_point_rejects_nan(self):
        with pytest.raises(g.GeometryError):
            g.Point2(float("nan"), 0.0)

    def test_sequence_rejects_inf(self):
        with pytest.raises(g.GeometryError):
            g.PointSequence([(0.0, float("inf"))])

    def test_sequence_is_immutable(self):
        seq = g.PointSequence([(0, 0), (1, 1)])
        with pytest.raises(ValueError):
            seq.points[0, 0] = 5.0

    def test_bbox_rejects_negative_size(self):
        with pytest.raises(g.GeometryError):
            g.BBox(0, 0, -1, 2)


class TestHopAngle:
    def test_collinear_is_pi(self):
        seq = g.PointSequence([(0, 0), (1, 0), (2, 0)])
        assert g.hop_angle(seq, 1, 1) == pytest.approx(math.pi, abs=1e-15)

    def test_perpendicular(self):
        seq = g.PointSequence([(0, 1), (0, 0), (1, 0)])
        assert g.hop_angle(seq, 1, 1) == pytest.approx(math.pi / 2, abs=1e-15)

    def test_matches_canonical_frame_oracle(self):
        rng = np.random.default_rng(11)
        pts = 3.0 * rng.standard_normal((32, 2))
        seq = g.PointSequence(pts, cyclic=True)
        for i in range(32):
            for n in range(1, 6):
                expected = canonical_frame_angle(
                    pts[(i - n) % 32], pts[i], pts[(i + n) % 32]
                )
                assert g.hop_angle(seq, i, n) == pytest.approx(expected, abs=1e-12)

    def test_similarity_invariance(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-4, 4, size=(16, 2))
        theta, scale, shift = 0.83, 2.5, np.array([10.0, -3.0])
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        moved = scale * pts @ rot.T + shift
        a = g.PointSequence(pts, cyclic=True)
        b = g.PointSequence(moved, cyclic=True)
        for i in range(16):
            for n in (1, 2, 3):
                assert g.hop_angle(a, i, n) == pytest.approx(g.hop_angle(b, i, n), abs=1e-9)

    def test_degenerate_ray_returns_pi(self):
        seq = g.PointSequence([(1, 1), (1, 1), (2, 3)])
        assert g.hop_angle(seq, 1, 1) == math.pi

    def test_open_sequence_range_errors(self):
        seq = g.PointSequence([(0, 0), (1, 0), (2, 1)])
        with pytest.raises(IndexError):
            g.hop_angle(seq, 0, 1)
        with pytest.raises(IndexError):
            g.hop_angle(seq, 2, 1)

    def test_cyclic_hop_too_large(self):
        seq = g.PointSequence([(0, 0), (1, 0), (0, 1)], cyclic=True)
        with pytest.raises(g.GeometryError):
            g.hop_angle(seq, 0, 3)


class TestResample:
    def test_square_to_eight(self):
        sq = g.PointSequence([(0, 0), (4, 0), (4, 4), (0, 4)], cyclic=True)
        out = g.resample_contour(sq, 8)
        expected = [(0, 0), (2, 0), (4, 0), (4, 2), (4, 4), (2, 4), (0, 4), (0, 2)]
        assert np.allclose(out.points, expected, atol=1e-12)

    def test_idempotent_on_equal_arc_input(self):
        # Idempotence is exact when the contour's own edges are equal length:
        # every vertex already sits at a multiple of perimeter / m.
        ring = regular_polygon(32, radius=5.0, center=(10, 10), phase=0.3)
        assert np.allclose(g.resample_contour(ring, 32).points, ring.points, atol=1e-9)
        square = g.PointSequence([(0, 0), (4, 0), (4, 4), (0, 4)], cyclic=True)
        once = g.resample_contour(square, 32)
        twice = g.resample_contour(once, 32)
        assert np.allclose(once.points, twice.points, atol=1e-9)

    def test_gaps_uniform_along_input(self):
        rng = np.random.default_rng(9)
        poly = blob_polygon(17, rng, radius=6.0, center=(8, 8))
        m = 64
        out = g.resample_contour(poly, m)
        # Arc-length positions of the output along the input boundary.
        p = np.vstack([poly.points, poly.points[:1]])
        seg = np.hypot(np.diff(p[:, 0]), np.diff(p[:, 1]))
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        per = cum[-1]

        def arc_position(q):
            best = None
            for i in range(len(seg)):
                a, b = p[i], p[i + 1]
                t = np.dot(q - a, b - a) / max(seg[i] ** 2, 1e-30)
                if -1e-9 <= t <= 1 + 1e-9:
                    proj = a + np.clip(t, 0, 1) * (b - a)
                    d = np.hypot(*(q - proj))
                    pos = cum[i] + np.clip(t, 0, 1) * seg[i]
                    if best is None or d < best[0]:
                        best = (d, pos)
            assert best[0] < 1e-9
            return best[1]

        positions = np.array([arc_position(q) for q in out.points])
        gaps = np.diff(np.concatenate([positions, [positions[0] + per]]))
        assert np.allclose(gaps, per / m, atol=1e-9)
        assert abs(gaps.sum() - per) < 1e-6 * per

    def test_zero_perimeter_rejected(self):
        seq = g.PointSequence([(1, 1)] * 4, cyclic=True)
        with pytest.raises(g.GeometryError):
            g.resample_contour(seq, 8)

    def test_open_sequence_rejected(self):
        with pytest.raises(g.GeometryError):
            g.resample_contour(g.PointSequence([(0, 0), (1, 1), (2, 0)]), 8)


class TestCanonicalize:
    def test_counter_clockwise_square(self):
        ccw = g.PointSequence([(2, 0), (2, 2), (0, 2), (0, 0)], cyclic=True)
        out = g.canonicalize_contour(ccw)
        assert g.signed_area(out) > 0
        assert tuple(out.points[0]) == (0.0, 0.0)

    def test_idempotent_and_multiset_preserved(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            poly = blob_polygon(10, rng, radius=4.0, center=(5, 5))
            out = g.canonicalize_contour(poly)
            again = g.canonicalize_contour(out)
            assert np.array_equal(out.points, again.points)
            assert sorted(map(tuple, out.points)) == sorted(map(tuple, poly.points))

    def test_random_polygons_canonical_form(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            poly = blob_polygon(int(rng.integers(4, 14)), rng, radius=3.0, center=(6, 6))
            out = g.canonicalize_contour(poly)
            assert g.signed_area(out) > 0
            order = np.lexsort((out.points[:, 1], out.points[:, 0]))
            assert order[0] == 0

    def test_degenerate_rejected(self):
        line = g.PointSequence([(0, 0), (1, 1), (2, 2)], cyclic=True)
        with pytest.raises(g.GeometryError):
            g.canonicalize_contour(line)


class TestSignedArea:
    def test_unit_square_magnitude(self):
        sq = g.PointSequence([(0, 0), (1, 0), (1, 1), (0, 1)], cyclic=True)
        assert abs(g.signed_area(sq)) == 1.0

    def test_clockwise_image_coords_is_positive(self):
        # Screen order with +y down: right along the top, down, left, up.
        cw = g.PointSequence([(0, 0), (4, 0), (4, 4), (0, 4)], cyclic=True)
        assert g.signed_area(cw) == 16.0
        assert g.signed_area(g.PointSequence(cw.points[::-1], cyclic=True)) == -16.0

    def test_collinear_is_zero(self):
        line = g.PointSequence([(0, 0), (1, 1), (3, 3)], cyclic=True)
        assert g.signed_area(line) == 0.0

    def test_matches_raster_fill(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            poly = blob_polygon(9, rng, radius=5.0, center=(8, 8))
            exact = abs(g.signed_area(poly))
            approx = raster_area(poly.points, resolution=2048)
            assert abs(exact - approx) / exact < 0.005


class TestPolygonIoU:
    def test_identity(self):
        sq = g.PointSequence([(0, 0), (1, 0), (1, 1), (0, 1)], cyclic=True)
        assert g.polygon_iou(sq, sq) == 1.0

    def test_half_shifted_square(self):
        a = g.PointSequence([(0, 0), (1, 0), (1, 1), (0, 1)], cyclic=True)
        b = g.PointSequence([(0.5, 0), (1.5, 0), (1.5, 1), (0.5, 1)], cyclic=True)
        assert g.polygon_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            a = blob_polygon(8, rng, radius=3.0, center=(5, 5))
            b = blob_polygon(8, rng, radius=3.0, center=(6, 5.5))
            iou_ab = g.polygon_iou(a, b)
            iou_ba = g.polygon_iou(b, a)
            assert 0.0 <= iou_ab <= 1.0
            assert iou_ab == pytest.approx(iou_ba, abs=1e-12)

    def test_same_region_different_start_is_one(self):
        rng = np.random.default_rng(31)
        poly = blob_polygon(9, rng, radius=4.0, center=(5, 5))
        rolled = g.PointSequence(np.roll(poly.points, 3, axis=0), cyclic=True)
        assert g.polygon_iou(poly, rolled) > 1.0 - 1e-9
        shifted = g.PointSequence(poly.points + 0.3, cyclic=True)
        assert g.polygon_iou(poly, shifted) < 1.0

    def test_concave_pair_matches_raster(self):
        a = star_polygon(5, 4.0, 1.6, center=(5, 5))
        b = star_polygon(6, 3.5, 1.8, center=(6, 5.5), phase=0.4)
        exact = g.polygon_iou(a, b)
        approx = raster_iou(a.points, b.points, resolution=2048)
        assert abs(exact - approx) < 0.005

    def test_random_pairs_match_raster(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            a = blob_polygon(int(rng.integers(5, 11)), rng, radius=3.5, center=(5, 5))
            b = blob_polygon(int(rng.integers(5, 11)), rng, radius=3.0, center=(6, 4.5))
            exact = g.polygon_iou(a, b)
            approx = raster_iou(a.points, b.points, resolution=1024)
            assert abs(exact - approx) < 0.01

    def test_self_intersecting_rejected(self):
        # Unequal-lobe bowtie: self-crossing edges and nonzero net area.
        bowtie = g.PointSequence([(0, 0), (4, 0), (0, 2), (2, 2)], cyclic=True)
        square = g.PointSequence([(0, 0), (1, 0), (1, 1), (0, 1)], cyclic=True)
        with pytest.raises(g.GeometryError, match="self-intersecting"):
            g.polygon_iou(bowtie, square)
        with pytest.raises(g.GeometryError, match="self-intersecting"):
            g.polygon_iou(square, bowtie)
        # The symmetric bowtie cancels to zero area and is rejected for that.
        degenerate = g.PointSequence([(0, 0), (2, 2), (2, 0), (0, 2)], cyclic=True)
        with pytest.raises(g.GeometryError):
            g.polygon_iou(degenerate, square)

    def test_disjoint_is_zero(self):
        a = g.PointSequence([(0, 0), (1, 0), (1, 1), (0, 1)], cyclic=True)
        b = g.PointSequence([(5, 5), (6, 5), (6, 6), (5, 6)], cyclic=True)
        assert g.polygon_iou(a, b) == 0.0


class TestBoxes:
    def test_bbox_of(self):
        box = g.bbox_of(g.PointSequence([(1, 2), (3, 5)]))
        assert (box.x, box.y, box.w, box.h) == (1, 2, 2, 3)

    def test_box_iou_identical(self):
        b = g.BBox(0, 0, 3, 4)
        assert g.box_iou(b, b) == 1.0

    def test_box_iou_worked_example(self):
        assert g.box_iou(g.BBox(0, 0, 2, 2), g.BBox(1, 1, 2, 2)) == 1.0 / 7.0

    def test_box_iou_disjoint(self):
        assert g.box_iou(g.BBox(0, 0, 1, 1), g.BBox(5, 5, 1, 1)) == 0.0

    def test_box_iou_agrees_with_polygon_iou(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            a = g.BBox(*rng.uniform(0, 4, 2), *rng.uniform(1, 5, 2))
            b = g.BBox(*rng.uniform(0, 4, 2), *rng.uniform(1, 5, 2))
            expected = g.box_iou(a, b)
            if expected == 0.0:
                continue
            got = g.polygon_iou(g.rect_contour(a), g.rect_contour(b))
            assert got == pytest.approx(expected, abs=1e-12)


class TestSimplePolygon:
    def test_convex_is_simple(self):
        assert g.is_simple_polygon(regular_polygon(8, 2.0, (3, 3)))

    def test_bowtie_is_not(self):
        bowtie = g.PointSequence([(0, 0), (2, 2), (2, 0), (0, 2)], cyclic=True)
        assert not g.is_simple_polygon(bowtie)

    def test_star_is_simple(self):
        assert g.is_simple_polygon(star_polygon(7, 3.0, 1.2, (0, 0)))
