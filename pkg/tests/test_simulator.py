import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.spatial.transform import Rotation

from oracles import imu_truth_state, mechanize
from wheelins import simulator as sim
from wheelins.core import D2R, GRAVITY
from wheelins.mechanization import ImuData, NavState
from wheelins.observations import GeometryConfig

G = GRAVITY


class TestTrack:
    def test_wheel_angle_of_straight(self):
        truth = sim.generate_truth(sim.TrackSpec([sim.straight(100.0, 1.0)]), wheel_radius=0.5)
        assert truth.wheel_angle[-1] == pytest.approx(200.0, rel=1e-12)
        assert truth.t[-1] == pytest.approx(100.0)

    def test_half_circle(self):
        # speed chosen so the arc takes exactly 20 s and ends on a sample
        truth = sim.generate_truth(sim.TrackSpec([sim.arc(10.0, math.pi, math.pi / 2)]))
        assert truth.heading[-1] - truth.heading[0] == pytest.approx(math.pi, abs=1e-9)
        assert np.linalg.norm(truth.pos[-1] - truth.pos[0]) == pytest.approx(20.0, abs=1e-6)
        # positive angle turns right: heading north, centre to the east
        assert truth.pos[-1, 1] == pytest.approx(20.0, abs=1e-6)

    def test_square_closes(self):
        segs = []
        for _ in range(4):
            segs += [sim.straight(25.0, 1.0), sim.arc(2.0, math.pi / 2, math.pi / 2)]
        spec = sim.TrackSpec(segs)
        truth = sim.generate_truth(spec)
        np.testing.assert_allclose(truth.pos[-1], truth.pos[0], atol=1e-9)
        assert spec.length == pytest.approx(100.0 + 2 * math.pi * 2.0)

    def test_distance_and_speed(self):
        spec = sim.TrackSpec([sim.stop(2.0), sim.ramp(0.0, 2.0, 4.0), sim.straight(10.0, 2.0)])
        truth = sim.generate_truth(spec)
        assert spec.duration == pytest.approx(2.0 + 4.0 + 5.0)
        assert truth.distance[-1] == pytest.approx(14.0, abs=1e-9)
        # ramp: v^2 = 2 a s
        k = int(np.searchsorted(truth.t, 4.0))
        assert truth.speed[k] ** 2 == pytest.approx(2 * 0.5 * truth.distance[k], rel=1e-9)

    def test_grade_profile(self):
        spec = sim.TrackSpec([sim.straight(1200.0, 4.0)], max_grade=10 * D2R, grade_wavelength=600.0)
        truth = sim.generate_truth(spec)
        assert np.abs(truth.pitch).max() == pytest.approx(10 * D2R, rel=1e-4)
        # vertical velocity is the derivative of the down coordinate
        vd = np.gradient(truth.pos[:, 2], truth.t)
        np.testing.assert_allclose(vd[5:-5], truth.vel[5:-5, 2], atol=1e-6)
        # rolling distance follows the slope
        slope_len = truth.wheel_angle[-1] * truth.wheel_radius
        assert slope_len > 1200.0 and slope_len < 1200.0 / math.cos(10 * D2R)

    def test_flattened(self):
        spec = sim.preset_track("loop-large")
        assert spec.max_grade > 0 and spec.flattened().max_grade == 0.0
        assert spec.flattened().segments == spec.segments

    @pytest.mark.parametrize("name, length, speed", [
        ("loop-small", 1227.0, 1.39),
        ("polyline", 1146.0, 1.25),
        ("loop-large", 12199.0, 4.7),
    ])
    def test_presets(self, name, length, speed):
        spec = sim.preset_track(name)
        assert spec.length == pytest.approx(length, rel=0.01)
        assert max(s.speed for s in spec.segments) == speed
        assert spec.segments[0].kind == "stop" and spec.segments[0].duration >= 60.0

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            sim.preset_track("nowhere")

    @pytest.mark.parametrize("seg", [
        lambda: sim.straight(-1.0, 1.0),
        lambda: sim.straight(1.0, 0.0),
        lambda: sim.arc(0.0, 1.0, 1.0),
        lambda: sim.stop(0.0),
        lambda: sim.ramp(0.0, 0.0, 5.0),
        lambda: sim.Segment("jump"),
    ])
    def test_bad_segments(self, seg):
        with pytest.raises(ValueError):
            seg()

    def test_bad_track(self):
        with pytest.raises(ValueError):
            sim.TrackSpec([])
        with pytest.raises(ValueError):
            sim.TrackSpec([sim.stop(1.0)], rate=10.0)
        with pytest.raises(ValueError):
            sim.generate_truth(sim.TrackSpec([sim.arc(0.2, 1.0, 1.0)]), wheel_radius=0.3)

    def test_dict_round_trip(self, tmp_path):
        spec = sim.preset_track("square-100")
        path = tmp_path / "track.json"
        path.write_text(json.dumps(spec.to_dict()))
        assert sim.TrackSpec.from_json(path) == spec


class TestIdealImu:
    def test_pure_rolling(self):
        geo = GeometryConfig(0.3)
        truth = sim.generate_truth(sim.TrackSpec([sim.straight(20.0, 1.5)]), geo.wheel_radius)
        imu = sim.truth_to_imu(truth, geo)
        np.testing.assert_allclose(imu.gyro[1:], np.tile([-5.0, 0, 0], (len(imu) - 1, 1)), atol=1e-9)
        np.testing.assert_allclose(imu.accel[1:, 0], 0.0, atol=1e-9)
        np.testing.assert_allclose(np.hypot(imu.accel[1:, 1], imu.accel[1:, 2]), G, rtol=1e-9)

    def test_stationary(self):
        truth = sim.generate_truth(sim.TrackSpec([sim.stop(5.0)]))
        imu = sim.truth_to_imu(truth, GeometryConfig())
        np.testing.assert_array_equal(imu.gyro, 0.0)
        np.testing.assert_allclose(np.linalg.norm(imu.accel, axis=1), G, rtol=1e-15)

    def test_graded_round_trip(self):
        geo = sim.default_geometry()
        spec = sim.TrackSpec([sim.stop(1.0), sim.ramp(0.0, 4.7, 10.0), sim.straight(300.0, 4.7)],
                             max_grade=10 * D2R, grade_wavelength=200.0)
        truth = sim.generate_truth(spec, geo.wheel_radius)
        imu = sim.truth_to_imu(truth, geo)

        k0 = 10
        pos, c = mechanize(imu, imu_truth_state(truth, geo, k0), k0, len(imu) - 1)
        assert np.abs(pos - sim.imu_positions(truth, geo)[k0:]).max() < 0.01
        c_ref = sim.wheel_attitude(truth)[k0:]
        assert Rotation.from_matrix(np.einsum("nji,njk->nik", c_ref, c)).magnitude().max() < 0.01 * D2R

    def test_body_round_trip(self):
        lever = np.array(sim.BODY_LEVER)
        truth = sim.generate_truth(sim.preset_track("square-100"))
        imu = sim.truth_to_body_imu(truth, lever)
        c_vn = sim.body_attitude(truth)
        k0 = int(61 * 200)
        dt = truth.t[k0 + 1] - truth.t[k0 - 1]
        omega = Rotation.from_matrix(c_vn[k0 - 1].T @ c_vn[k0 + 1]).as_rotvec() / dt
        nav = NavState.from_dcm(truth.t[k0], truth.pos[k0] - c_vn[k0] @ lever,
                                truth.vel[k0] - c_vn[k0] @ np.cross(omega, lever), c_vn[k0])
        pos, _ = mechanize(imu, nav, k0, len(imu) - 1)
        ref = truth.pos[k0:] - np.einsum("nij,j->ni", c_vn[k0:], lever)
        assert np.abs(pos - ref).max() < 0.01

    def test_mounting_rotates_outputs(self):
        truth = sim.generate_truth(sim.preset_track("square-100"))
        geo = GeometryConfig(0.3, mounting_pitch=2.5 * D2R, mounting_yaw=-4.5 * D2R)
        a = sim.truth_to_imu(truth, geo)
        b = sim.truth_to_imu(truth, GeometryConfig(0.3))
        m = geo.mounting_dcm
        np.testing.assert_allclose(a.gyro @ m.T, b.gyro, atol=1e-12)
        np.testing.assert_allclose(a.accel @ m.T, b.accel, atol=1e-12)


class TestErrors:
    def stream(self, n, rate=200.0):
        return ImuData(np.arange(n) / rate, np.zeros((n, 3)), np.tile([0, 0, -G], (n, 1)))

    def test_zero_spec_identity(self):
        imu = self.stream(100)
        out = sim.corrupt(imu, sim.ErrorSpec())
        np.testing.assert_array_equal(out.gyro, imu.gyro)
        np.testing.assert_array_equal(out.accel, imu.accel)

    def test_white_noise_level(self):
        imu = self.stream(1_000_000)
        err = sim.ErrorSpec(arw=0.24 * D2R / 60, vrw=3.0 / 60, seed=4)
        out = sim.corrupt(imu, err)
        np.testing.assert_allclose(out.gyro.std(axis=0), err.arw * math.sqrt(200.0), rtol=0.02)
        np.testing.assert_allclose((out.accel - imu.accel).std(axis=0), err.vrw * math.sqrt(200.0), rtol=0.02)

    def test_gauss_markov_statistics(self):
        rng = np.random.default_rng(0)
        x = sim.gauss_markov(400_000, 1.0, 2.0, 10.0, rng)
        assert x.std() == pytest.approx(2.0, rel=0.05)
        lag1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        assert lag1 == pytest.approx(math.exp(-0.1), abs=0.01)

    def test_deterministic_seed(self):
        imu = self.stream(1000)
        a = sim.corrupt(imu, sim.ErrorSpec.icm20602(5))
        b = sim.corrupt(imu, sim.ErrorSpec.icm20602(5))
        c = sim.corrupt(imu, sim.ErrorSpec.icm20602(6))
        np.testing.assert_array_equal(a.gyro, b.gyro)
        assert not np.array_equal(a.gyro, c.gyro)

    def test_icm_levels(self):
        b = np.array([sim.ErrorSpec.icm20602(s).gyro_bias for s in range(400)])
        assert b.std() == pytest.approx(200 * D2R / 3600, rel=0.1)

    def test_bias_offset_and_json(self, tmp_path):
        e = sim.ErrorSpec.icm20602(1).with_gyro_bias_offset(1e-3)
        np.testing.assert_allclose(np.array(e.gyro_bias) - sim.ErrorSpec.icm20602(1).gyro_bias, 1e-3)
        p = tmp_path / "err.json"
        p.write_text(json.dumps(e.to_dict()))
        assert sim.ErrorSpec.from_json(p) == e

    def test_validation(self):
        with pytest.raises(ValueError):
            sim.ErrorSpec(arw=-1.0)
        with pytest.raises(ValueError):
            sim.ErrorSpec(gyro_bias=(1.0, 2.0))
        with pytest.raises(ValueError):
            sim.preset_errors("tactical")


class TestModulation:
    eps = (0.001, 0.002, -0.003)
    omega = 4.633

    def test_full_revolution(self):
        tc = 2 * math.pi / self.omega
        e = sim.modulation_error(self.eps, self.omega, tc)
        assert abs(e[1]) < 1e-12 and abs(e[2]) < 1e-12
        assert e[0] == self.eps[0] * tc

    def test_axial_error_unmodulated(self):
        t = np.linspace(0, 10, 7)
        e = sim.modulation_error((0.01, 0.0, 0.0), 3.0, t)
        np.testing.assert_allclose(e, np.column_stack([0.01 * t, 0 * t, 0 * t]), atol=1e-18)

    def test_quadrature(self):
        ex, ey, ez = self.eps
        w = self.omega

        def rate(s, i):
            # spin about x by w s applied to the constant error
            c, sn = math.cos(w * s), math.sin(w * s)
            return (ex, c * ey - sn * ez, sn * ey + c * ez)[i]

        ts = np.random.default_rng(0).uniform(0, 20, 50)
        got = sim.modulation_error(self.eps, w, ts)
        for t, row in zip(ts, got):
            ref = [quad(rate, 0, t, args=(i,), limit=200, epsabs=1e-13, epsrel=1e-13)[0] for i in range(3)]
            np.testing.assert_allclose(row, ref, atol=1e-9)

    def test_bounded(self):
        t = np.linspace(0, 100, 10001)
        e = sim.modulation_error(self.eps, self.omega, t)
        bound = 2 * math.hypot(*self.eps[1:]) / self.omega
        assert np.abs(e[:, 1:]).max() <= bound + 1e-15

    def test_zero_rate(self):
        e = sim.modulation_error(self.eps, 0.0, 2.0)
        np.testing.assert_allclose(e, 2 * np.array(self.eps))


class TestDataset:
    def test_make_dataset(self):
        spec = sim.preset_track("square-100")
        ds = sim.make_dataset(spec, "icm20602", 7)
        assert len(ds.wheel_imu) == len(ds.body_imu) == len(ds.truth)
        t, v = ds.odometer
        assert np.median(np.diff(t)) == pytest.approx(0.1)
        assert ds.meta["seed"] == 7
        assert ds.body_geometry().heading_offset == 0.0
        # wheel and body receive independent errors
        assert ds.meta["wheel_errors"]["seed"] != ds.meta["body_errors"]["seed"]

    def test_ideal_grade(self):
        truth, wheel, _ = sim.ideal_streams(sim.preset_track("square-100"), body=False)
        ds = sim.make_dataset(sim.preset_track("square-100"), "ideal", 0, body=False,
                              ideal=(truth, wheel, None))
        np.testing.assert_array_equal(ds.wheel_imu.gyro, wheel.gyro)

    def test_ideal_without_body(self):
        ideal = sim.ideal_streams(sim.preset_track("square-100"), body=False)
        with pytest.raises(ValueError):
            sim.make_dataset(sim.preset_track("square-100"), "icm20602", 0, body=True, ideal=ideal)

    def test_odometer_noise(self):
        truth = sim.generate_truth(sim.TrackSpec([sim.straight(3000.0, 2.0)]))
        t, v = sim.odometer(truth, 10.0, 0.03, seed=1)
        assert (v - 2.0).std() == pytest.approx(0.03, rel=0.05)
