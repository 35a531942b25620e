import math

import numpy as np
import pytest

from pointperc import sapl
from pointperc.geometry import PointSequence
from pointperc.toydata import star_polygon

from oracles import enumerate_sapl


def noisy_ring(k, rng, cyclic=True, radius=2.0, jitter=0.3):
    if cyclic:
        ang = np.linspace(0, 2 * np.pi, k, endpoint=False)
    else:
        ang = np.linspace(0, 1.3 * np.pi, k)
    r = radius + jitter * rng.standard_normal(k)
    pts = np.column_stack([5 + r * np.cos(ang), 5 + r * np.sin(ang)])
    return PointSequence(pts, cyclic=cyclic)


class TestSaplLoss:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(0)
        for k, cyclic in ((32, True), (7, False), (3, True)):
            p = noisy_ring(k, rng, cyclic)
            assert sapl.sapl_loss(p, p, sapl.SaplConfig(n_hops=3)) == 0.0

    def test_translation_invariant(self):
        sq = PointSequence([(0, 0), (2, 0), (2, 2), (0, 2)], cyclic=True)
        moved = PointSequence(sq.points + [5, 7], cyclic=True)
        assert sapl.sapl_loss(moved, sq, sapl.SaplConfig(n_hops=1)) == 0.0

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(30):
            cyclic = trial % 2 == 0
            k = int(rng.integers(3, 24))
            pred = noisy_ring(k, rng, cyclic)
            gt = noisy_ring(k, rng, cyclic)
            for n in (1, 2, 3, 4):
                got = sapl.sapl_loss(pred, gt, sapl.SaplConfig(n_hops=n))
                want = enumerate_sapl(pred.points, gt.points, n, cyclic)
                assert got == pytest.approx(want, abs=1e-12)

    def test_worked_square_example_against_oracle(self):
        gt = PointSequence([(0, 0), (2, 0), (2, 2), (0, 2)], cyclic=True)
        pred = PointSequence([(0, 0), (2, 0), (2, 2), (-1, 2)], cyclic=True)
        got = sapl.sapl_loss(pred, gt, sapl.SaplConfig(n_hops=1))
        want = enumerate_sapl(pred.points, gt.points, 1, True)
        assert got == pytest.approx(want, abs=1e-14)
        assert got > 0

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a = noisy_ring(16, rng)
        b = noisy_ring(16, rng)
        cfg = sapl.SaplConfig(n_hops=2)
        assert sapl.sapl_loss(a, b, cfg) == sapl.sapl_loss(b, a, cfg)

    def test_similarity_invariance(self):
        rng = np.random.default_rng(3)
        pred = noisy_ring(12, rng)
        gt = noisy_ring(12, rng)
        cfg = sapl.SaplConfig(n_hops=3)
        base = sapl.sapl_loss(pred, gt, cfg)
        theta, scale, shift = 1.1, 3.7, np.array([40.0, -9.0])
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])

        def move(seq):
            return PointSequence(scale * seq.points @ rot.T + shift, cyclic=True)

        assert sapl.sapl_loss(move(pred), move(gt), cfg) == pytest.approx(base, abs=1e-9)

    def test_per_hop_terms_bounded(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            pred = noisy_ring(10, rng, jitter=1.0)
            gt = noisy_ring(10, rng, jitter=1.0)
            assert 0.0 <= sapl.sapl_loss(pred, gt, sapl.SaplConfig(n_hops=1)) <= 1.0

    def test_hops_are_distinct_terms(self):
        rng = np.random.default_rng(5)
        pred = noisy_ring(16, rng)
        gt = noisy_ring(16, rng)
        v1 = sapl.sapl_loss(pred, gt, sapl.SaplConfig(n_hops=1))
        v2 = sapl.sapl_loss(pred, gt, sapl.SaplConfig(n_hops=2))
        assert abs(v1 - v2) > 1e-9

    def test_short_hops_skipped_on_small_rings(self):
        sq_pred = PointSequence([(0, 0), (2.1, 0), (2, 2), (0, 1.9)], cyclic=True)
        sq_gt = PointSequence([(0, 0), (2, 0), (2, 2), (0, 2)], cyclic=True)
        # K=4: hop 2 has 2n >= K and is skipped, so N=2 halves the hop-1 term.
        v1 = sapl.sapl_loss(sq_pred, sq_gt, sapl.SaplConfig(n_hops=1))
        v2 = sapl.sapl_loss(sq_pred, sq_gt, sapl.SaplConfig(n_hops=2))
        assert v2 == pytest.approx(v1 / 2, abs=1e-15)

    def test_errors(self):
        a = PointSequence([(0, 0), (1, 0), (1, 1)], cyclic=True)
        b = PointSequence([(0, 0), (1, 0), (1, 1), (0, 1)], cyclic=True)
        with pytest.raises(sapl.LossError):
            sapl.sapl_loss(a, b)
        open_a = PointSequence([(0, 0), (1, 0), (1, 1)])
        with pytest.raises(sapl.LossError):
            sapl.sapl_loss(a, open_a)
        tiny = PointSequence([(0, 0), (1, 0)], cyclic=True)
        with pytest.raises(sapl.LossError):
            sapl.sapl_loss(tiny, tiny)


class TestPointLoss:
    def test_identical_zero_loss_zero_grad(self):
        rng = np.random.default_rng(6)
        p = noisy_ring(16, rng)
        out = sapl.point_loss(p, p)
        assert out.total == 0.0
        assert np.all(out.per_point_grad == 0.0)

    def test_total_is_sum(self):
        rng = np.random.default_rng(7)
        pred, gt = noisy_ring(16, rng), noisy_ring(16, rng)
        out = sapl.point_loss(pred, gt, sapl.SaplConfig(n_hops=2))
        assert out.total == pytest.approx(out.l1_term + out.sapl_term, abs=1e-12)
        assert out.l1_term >= 0 and out.sapl_term >= 0
        assert out.per_point_grad.shape == (16, 2)

    def test_l1_term_definition(self):
        pred = PointSequence([(1, 2), (5, 5)])
        gt = PointSequence([(0, 0), (5, 9)])
        out = sapl.point_loss(pred, gt, sapl.SaplConfig(n_hops=1))
        assert out.l1_term == pytest.approx((3 + 4) / 2, abs=1e-15)

    def test_diamond_equal_l1_different_totals(self):
        gt = PointSequence([(0, 0), (2, 0), (2, 2), (0, 2)], cyclic=True)
        a = gt.points.copy()
        a[0] = (0.5, 0.0)
        b = gt.points.copy()
        b[0] = (0.25, 0.25)
        la = sapl.point_loss(PointSequence(a, cyclic=True), gt)
        lb = sapl.point_loss(PointSequence(b, cyclic=True), gt)
        assert abs(la.l1_term - lb.l1_term) < 1e-12
        assert abs(la.total - lb.total) > 1e-6
        assert sapl.point_loss(gt, gt).total == 0.0

    def test_count_task_reduces_to_l1(self):
        pred = PointSequence([(3, 4)])
        gt = PointSequence([(1, 1)])
        out = sapl.point_loss(pred, gt, sapl.SaplConfig(n_hops=2))
        assert out.sapl_term == 0.0
        assert out.total == pytest.approx(5.0, abs=1e-15)

    def test_gradcheck_random_pairs(self):
        rng = np.random.default_rng(8)
        worst = 0.0
        for trial in range(40):
            cyclic = trial % 2 == 0
            k = 32 if cyclic else 8
            pred, gt = sapl.random_gradcheck_pair(k, cyclic, rng)
            cfg = sapl.SaplConfig(n_hops=1 + trial % 4)
            worst = max(worst, sapl.gradient_check(pred, gt, cfg, h=1e-6))
        assert worst < 1e-6

    def test_degenerate_vertex_contributes_pi_and_no_grad(self):
        pred = PointSequence([(0, 0), (0, 0), (2, 1), (1, 3)], cyclic=True)
        gt = PointSequence([(0, 0), (1, 0), (2, 1), (1, 3)], cyclic=True)
        out = sapl.point_loss(pred, gt, sapl.SaplConfig(n_hops=1))
        assert math.isfinite(out.total)
        assert np.all(np.isfinite(out.per_point_grad))


class TestFitPoints:
    def test_init_equals_gt_stays_put(self):
        sq = PointSequence([(0, 0), (2, 0), (2, 2), (0, 2)], cyclic=True)
        final, trace = sapl.fit_points(sq, sq, steps=50, lr=0.1)
        assert np.array_equal(final.points, sq.points)
        assert np.all(trace == 0.0)

    def test_zero_steps_returns_input(self):
        rng = np.random.default_rng(9)
        init, gt = noisy_ring(8, rng), noisy_ring(8, rng)
        final, trace = sapl.fit_points(init, gt, steps=0, lr=0.1)
        assert np.array_equal(final.points, init.points)
        assert trace.shape == (0,)

    def test_l1_only_converges_on_translation(self):
        gt = PointSequence([(0, 0), (2, 0), (2, 2), (0, 2)], cyclic=True)
        init = PointSequence(gt.points + [0.3, -0.2], cyclic=True)
        final, trace = sapl.fit_points(init, gt, steps=400, lr=0.01, include_sapl=False)
        assert np.abs(final.points - gt.points).max() < 0.01
        assert trace[-1] < trace[0]

    def test_sapl_arm_beats_l1_on_star(self):
        rng = np.random.default_rng(0)
        gt = star_polygon(5, r_outer=4.0, r_inner=1.8, center=(5, 5))
        init = PointSequence(gt.points + 0.8 * rng.standard_normal(gt.points.shape), cyclic=True)
        cfg = sapl.SaplConfig(n_hops=2)
        f_sapl, _ = sapl.fit_points(init, gt, cfg, steps=150, lr=0.05, include_sapl=True)
        f_l1, _ = sapl.fit_points(init, gt, cfg, steps=150, lr=0.05, include_sapl=False)
        err_sapl = np.mean(np.hypot(*(f_sapl.points - gt.points).T))
        err_l1 = np.mean(np.hypot(*(f_l1.points - gt.points).T))
        assert err_sapl <= err_l1

    def test_rejects_nonpositive_lr(self):
        sq = PointSequence([(0, 0), (2, 0), (2, 2), (0, 2)], cyclic=True)
        with pytest.raises(sapl.LossError):
            sapl.fit_points(sq, sq, lr=0.0)


class TestConfig:
    def test_invalid_hops(self):
        with pytest.raises(sapl.LossError):
            sapl.SaplConfig(n_hops=0)

    def test_forced_cyclic_on_open_chain(self):
        rng = np.random.default_rng(10)
        pred = noisy_ring(8, rng, cyclic=False)
        gt = noisy_ring(8, rng, cyclic=False)
        open_loss = sapl.sapl_loss(pred, gt, sapl.SaplConfig(n_hops=1, cyclic=False))
        ring_loss = sapl.sapl_loss(pred, gt, sapl.SaplConfig(n_hops=1, cyclic=True))
        want_open = enumerate_sapl(pred.points, gt.points, 1, False)
        want_ring = enumerate_sapl(pred.points, gt.points, 1, True)
        assert open_loss == pytest.approx(want_open, abs=1e-12)
        assert ring_loss == pytest.approx(want_ring, abs=1e-12)
