import dataclasses
import json

import numpy as np
import pytest

from oracles import ideal
from wheelins import io as wio
from wheelins import simulator as sim
from wheelins.filter import FilterConfig
from wheelins.observations import GeometryConfig


def test_three_line_imu(tmp_path):
    p = tmp_path / "imu.csv"
    p.write_text("t,gx,gy,gz,ax,ay,az\n"
                 "0.0,0,0,0,0,0,-9.8\n0.005,0,0,0,0,0,-9.8\n0.01,0,0,0,0,0,-9.8\n")
    imu = wio.load_imu(p)
    assert len(imu) == 3
    np.testing.assert_array_equal(imu.accel[:, 2], -9.8)


@pytest.mark.parametrize("body, match", [
    ("0,0,0,0,0,0,-9.8\n0.005,0,0,0,0,-9.8\n", r"imu\.csv:2: expected 7 fields, got 6"),
    ("0,0,0,0,0,0,-9.8\n0.005,0,0,x,0,0,-9.8\n", r"imu\.csv:2: non-numeric"),
    ("0.01,0,0,0,0,0,-9.8\n0.005,0,0,0,0,0,-9.8\n", "not strictly increasing"),
    ("0,0,0,0,0,0,nan\n", "non-finite"),
    ("# only a comment\n", "no records"),
])
def test_malformed_imu(tmp_path, body, match):
    p = tmp_path / "imu.csv"
    p.write_text(body)
    with pytest.raises(wio.DataError, match=match):
        wio.load_imu(p)


def test_missing_file(tmp_path):
    with pytest.raises(wio.DataError, match="no such file"):
        wio.load_imu(tmp_path / "nope.csv")


def test_imu_round_trip_bit_exact(tmp_path):
    ds = sim.make_dataset(sim.preset_track("square-100"), "icm20602", 1, body=False,
                          ideal=ideal("square-100", False))
    wio.write_imu(tmp_path / "imu.csv", ds.wheel_imu)
    back = wio.load_imu(tmp_path / "imu.csv")
    np.testing.assert_array_equal(back.as_array(), ds.wheel_imu.as_array())


@pytest.mark.parametrize("with_velocity", [True, False])
def test_truth_round_trip(tmp_path, with_velocity):
    truth = ideal("square-100", False)[0].trajectory()
    wio.write_truth(tmp_path / "truth.csv", truth, with_velocity)
    back = wio.load_truth(tmp_path / "truth.csv")
    np.testing.assert_array_equal(back.pos, truth.pos)
    np.testing.assert_array_equal(back.euler, truth.euler)
    if with_velocity:
        np.testing.assert_array_equal(back.vel, truth.vel)
    else:
        assert back.vel is None


def test_truth_three_lines(tmp_path):
    p = tmp_path / "truth.csv"
    p.write_text("0,0,0,0,0,0,0\n1,1,0,0,0,0,0\n2,2,0,0,0,0,0.1\n")
    assert len(wio.load_truth(p)) == 3
    p.write_text("0,0,0,0,0,0,0\n1,1,0,0,0,0\n")
    with pytest.raises(wio.DataError, match=":2:"):
        wio.load_truth(p)


def test_odometer_round_trip(tmp_path):
    odo = (np.arange(5) * 0.1, np.array([0.0, 0.1, 0.123456789012345678, 1.0, 2.0]))
    wio.write_odometer(tmp_path / "odo.csv", odo)
    t, v = wio.load_odometer(tmp_path / "odo.csv")
    np.testing.assert_array_equal(t, odo[0])
    np.testing.assert_array_equal(v, odo[1])


class TestConfig:
    def test_minimal(self):
        cfg = wio.parse_config(["geometry.wheel_radius = 0.3"])
        assert cfg == FilterConfig(geometry=GeometryConfig(0.3))

    def test_invalid_radius(self):
        with pytest.raises(wio.ConfigError, match="wheel_radius"):
            wio.parse_config(["geometry.wheel_radius = -1"])

    def test_missing_radius(self):
        with pytest.raises(wio.ConfigError, match="geometry.wheel_radius"):
            wio.parse_config(["filter.dim_mode = 15"])

    @pytest.mark.parametrize("line", [
        "filter.dim_mod = 15",
        "filters.dim_mode = 15",
        "dim_mode = 15",
        "filter.dim_mode 15",
        "filter.dim_mode = fifteen",
        "filter.zupt = maybe",
    ])
    def test_bad_lines(self, line):
        with pytest.raises(wio.ConfigError):
            wio.parse_config(["geometry.wheel_radius = 0.3", line])

    def test_duplicate(self):
        with pytest.raises(wio.ConfigError, match="duplicate"):
            wio.parse_config(["geometry.wheel_radius = 0.3", "geometry.wheel_radius = 0.4"])

    def test_echo_defaults_is_identity(self, tmp_path):
        minimal = wio.parse_config(["geometry.wheel_radius = 0.3"])
        wio.write_config(tmp_path / "full.cfg", minimal)
        assert wio.load_config(tmp_path / "full.cfg") == minimal

    def test_round_trip_custom(self, tmp_path):
        cfg = FilterConfig(geometry=sim.default_geometry(), dim_mode=9, mode="odo-ins",
                           zihr=False, speed_std=0.08)
        cfg = dataclasses.replace(cfg, noise=dataclasses.replace(cfg.noise, arw=1e-4))
        wio.write_config(tmp_path / "c.cfg", cfg)
        assert wio.load_config(tmp_path / "c.cfg") == cfg

    def test_comments_and_values(self):
        cfg = wio.parse_config([
            "# comment", "", "geometry.wheel_radius = 0.35  # trailing",
            "geometry.lever_b = 0.0, 0.01, -0.02", "filter.gating = off", "gm.T_bg = 500",
            "detector.accel_std = 0.8",
        ])
        assert cfg.geometry.lever_b == (0.0, 0.01, -0.02)
        assert not cfg.gating and cfg.noise.gm.T_bg == 500.0
        assert cfg.detector.accel_std == 0.8

    def test_missing_file(self, tmp_path):
        with pytest.raises(wio.ConfigError):
            wio.load_config(tmp_path / "none.cfg")


class TestDataset:
    def write(self, root):
        ds = sim.make_dataset(sim.preset_track("square-100"), "icm20602", 2,
                              ideal=ideal("square-100", True))
        wio.write_dataset(root, ds, {"note": "x"})
        return ds

    def test_round_trip(self, tmp_path):
        ds = self.write(tmp_path)
        back = wio.load_dataset(tmp_path)
        np.testing.assert_array_equal(back.wheel_imu.as_array(), ds.wheel_imu.as_array())
        np.testing.assert_array_equal(back.body_imu.as_array(), ds.body_imu.as_array())
        np.testing.assert_array_equal(back.odometer[1], ds.odometer[1])
        assert back.geometry() == ds.geometry
        assert back.body_geometry() == ds.body_geometry()
        assert back.manifest["note"] == "x"

    def test_missing_file(self, tmp_path):
        self.write(tmp_path)
        (tmp_path / "body_imu.csv").unlink()
        with pytest.raises(wio.DataError, match="missing"):
            wio.load_dataset(tmp_path)

    def test_rate_mismatch(self, tmp_path):
        self.write(tmp_path)
        m = json.loads((tmp_path / wio.MANIFEST).read_text())
        m["rate_hz"] = 100.0
        wio.write_manifest(tmp_path, m)
        with pytest.raises(wio.DataError, match="declared rate"):
            wio.load_dataset(tmp_path)

    def test_no_manifest(self, tmp_path):
        with pytest.raises(wio.DataError):
            wio.load_dataset(tmp_path)

    def test_copy_with_new_stream(self, tmp_path):
        self.write(tmp_path / "a")
        src = wio.load_dataset(tmp_path / "a")
        shifted = dataclasses.replace(src.wheel_imu, gyro=src.wheel_imu.gyro + 1.0)
        wio.copy_dataset(src, tmp_path / "b", wheel_imu=shifted, extra={"tag": 1})
        dst = wio.load_dataset(tmp_path / "b")
        np.testing.assert_array_equal(dst.wheel_imu.gyro, shifted.gyro)
        np.testing.assert_array_equal(dst.body_imu.gyro, src.body_imu.gyro)
        assert dst.manifest["tag"] == 1
