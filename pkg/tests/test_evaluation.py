import math

import numpy as np
import pytest

from oracles import drift_brute, velocity_brute
from wheelins.core import Trajectory
from wheelins.evaluation import (
    AlignedPair,
    align,
    evaluate,
    heading_stats,
    interp_heading,
    read_report,
    segmented_drift,
    travelled_distance,
    velocity_stats,
    write_errors,
    write_report,
)


def straight_truth(n=301, speed=1.0, rate=1.0):
    t = np.arange(n) / rate
    pos = np.column_stack([speed * t, np.zeros(n), np.zeros(n)])
    vel = np.tile([speed, 0.0, 0.0], (n, 1))
    return Trajectory(t, pos, np.zeros((n, 3)), vel)


def pair_from_error(dist, err):
    n = len(dist)
    truth = np.column_stack([dist, np.zeros(n), np.zeros(n)])
    est = truth + np.column_stack([np.zeros(n), err, np.zeros(n)])
    z = np.zeros(n)
    return AlignedPair(np.arange(n, dtype=float), est, truth, z, z, np.asarray(dist, float))


class TestSegmentedDrift:
    def test_linear_growth(self):
        d = np.linspace(0, 500, 501)
        r = segmented_drift(pair_from_error(d, 0.01 * d), 100.0)
        np.testing.assert_allclose(r.rates, 1.0)
        assert r.std == pytest.approx(0.0, abs=1e-12)

    def test_constant_error(self):
        d = np.linspace(0, 300, 301)
        r = segmented_drift(pair_from_error(d, np.ones_like(d)), 100.0)
        np.testing.assert_allclose(r.rates, [1.0, 0.5, 1 / 3])
        assert r.mean == pytest.approx(0.6111111111111112, rel=1e-12)

    def test_per_window(self):
        d = np.linspace(0, 300, 301)
        err = np.where(d < 50, 3.0, 1.0)
        full = segmented_drift(pair_from_error(d, err), 100.0)
        win = segmented_drift(pair_from_error(d, err), 100.0, per_window=True)
        np.testing.assert_allclose(full.rates, [3.0, 1.5, 1.0])
        np.testing.assert_allclose(win.rates, [3.0, 0.5, 1 / 3])

    def test_too_short(self):
        d = np.linspace(0, 90, 10)
        with pytest.raises(ValueError):
            segmented_drift(pair_from_error(d, d), 100.0)
        with pytest.raises(ValueError):
            segmented_drift(pair_from_error(d, d), 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(50, 3000))
        d = np.cumsum(rng.uniform(0, 2, n))
        d -= d[0]
        err = np.abs(rng.normal(0, 1, n)).cumsum() * 0.01
        l = float(rng.uniform(5, 200))
        if d[-1] < l:
            l = d[-1] / 2
        r = segmented_drift(pair_from_error(d, err), l)
        mean, std, rates = drift_brute(d, err, l)
        np.testing.assert_allclose(r.rates, rates, rtol=1e-12)
        assert r.mean == pytest.approx(mean, rel=1e-12)
        assert r.std == pytest.approx(std, rel=1e-9, abs=1e-14)


class TestHeading:
    def test_zero(self):
        z = np.zeros(5)
        p = AlignedPair(z, np.zeros((5, 3)), np.zeros((5, 3)), z, z, z)
        assert heading_stats(p) == (0.0, 0.0)

    @pytest.mark.parametrize("err, rmse, mx", [
        ([2.0, 2.0, -2.0], 2.0, 2.0),
        ([1.0, -1.0, 3.0], math.sqrt(11 / 3), 3.0),
    ])
    def test_examples(self, err, rmse, mx):
        n = len(err)
        z = np.zeros(n)
        p = AlignedPair(z, np.zeros((n, 3)), np.zeros((n, 3)), np.radians(err), z, z)
        got = heading_stats(p)
        assert got[0] == pytest.approx(rmse, rel=1e-12)
        assert got[1] == pytest.approx(mx, rel=1e-12)

    def test_wrap(self):
        p = AlignedPair(np.zeros(1), np.zeros((1, 3)), np.zeros((1, 3)),
                        np.radians([179.0]), np.radians([-179.0]), np.zeros(1))
        assert heading_stats(p)[1] == pytest.approx(2.0)

    def test_interpolation_across_pi(self):
        h = interp_heading([0.5], [0.0, 1.0], np.radians([179.0, -179.0]))
        assert abs(abs(h[0]) - math.pi) < 1e-12


class TestAlign:
    def test_identical(self):
        tr = straight_truth()
        p = align(tr, tr)
        np.testing.assert_array_equal(p.horizontal_error, 0.0)
        np.testing.assert_array_equal(p.heading_error, 0.0)
        m = evaluate(tr, tr)
        assert m.drift_mean == 0.0 and m.velocity_rms == 0.0
        assert m.distance == pytest.approx(300.0)

    def test_lower_rate_estimate(self):
        truth = straight_truth(n=3001, rate=10.0)
        est = straight_truth(n=301, rate=1.0)
        p = align(est, truth)
        assert len(p) == 301
        np.testing.assert_allclose(p.truth_pos, est.pos, atol=1e-12)

    def test_outside_span_dropped(self):
        truth = straight_truth(n=101)
        est = Trajectory(np.array([-5.0, 50.0, 200.0]), np.zeros((3, 3)), np.zeros((3, 3)))
        assert len(align(est, truth)) == 1
        with pytest.raises(ValueError):
            align(Trajectory([500.0], np.zeros((1, 3)), np.zeros((1, 3))), truth)

    def test_distance_is_3d(self):
        t = np.arange(3.0)
        pos = np.array([[0, 0, 0], [3, 0, 4], [6, 0, 8]], float)
        np.testing.assert_allclose(travelled_distance(pos), [0, 5, 10])
        tr = Trajectory(t, pos, np.zeros((3, 3)))
        np.testing.assert_allclose(align(tr, tr).distance, [0, 5, 10])


class TestVelocity:
    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = 500
        z = np.zeros(n)
        ev, tv = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        p = AlignedPair(np.arange(n, dtype=float), np.zeros((n, 3)), np.zeros((n, 3)), z, z, z, ev, tv)
        assert velocity_stats(p) == pytest.approx(velocity_brute(ev - tv), rel=1e-12)

    def test_finite_difference_fallback(self):
        truth = straight_truth()
        est = Trajectory(truth.t, truth.pos * 1.1, truth.euler)
        # estimate moves at 1.1 m/s without a velocity column
        assert velocity_stats(align(est, truth)) == pytest.approx(0.1, rel=1e-9)


def test_report_round_trip(tmp_path):
    tr = straight_truth()
    est = Trajectory(tr.t, tr.pos + [0.0, 1.0, 0.0], tr.euler, tr.vel)
    m = evaluate(est, tr)
    path = tmp_path / "report.txt"
    write_report(m, path, {"label": "run-a"})
    back = read_report(path)
    for k, v in m.to_dict().items():
        assert back[k] == v
    assert back["label"] == "run-a"
    assert m.drift_mean == pytest.approx(0.6111111111111112)


def test_error_table(tmp_path):
    tr = straight_truth()
    p = align(tr, tr)
    write_errors(p, tmp_path / "err.csv")
    a = np.loadtxt(tmp_path / "err.csv", delimiter=",", skiprows=1)
    assert a.shape == (len(tr), 6)
