"""Dataset files, configuration files and the dataset manifest.

Data files are comma-separated text with ``#`` comment lines:

* IMU: ``t, gx, gy, gz, ax, ay, az`` in s, rad/s, m/s^2
* truth / estimate: ``t, n, e, d, roll, pitch, yaw`` in s, m, rad, optionally
  followed by ``vn, ve, vd`` in m/s
* odometer: ``t, speed`` in s, m/s

Numbers are written with 17 significant digits so files round-trip exactly.

The configuration file holds ``section.key = value`` lines where the section
is one of ``geometry``, ``filter``, ``init``, ``noise``, ``gm`` or
``detector`` and the key is a field of the matching dataclass.  All values
are SI (metres, seconds, radians).
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from .core import Trajectory
from .errormodel import GmParams, NoisePsd
from .filter import FilterConfig, InitialStd
from .mechanization import ImuData
from .observations import DetectorThresholds, GeometryConfig

IMU_HEADER = "t,gx,gy,gz,ax,ay,az"
TRUTH_HEADER = "t,n,e,d,roll,pitch,yaw"
TRUTH_VEL_HEADER = TRUTH_HEADER + ",vn,ve,vd"
ODO_HEADER = "t,speed"

MANIFEST = "manifest.json"


class DataError(ValueError):
    """A data file or dataset failed validation."""


class ConfigError(ValueError):
    """A configuration file failed validation."""


# -- numeric tables -------------------------------------------------------------------


def _read_table(path, ncols: tuple[int, ...]) -> np.ndarray:
    """Parse a numeric CSV, naming the first bad line on failure."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#") or (not rows and s.startswith("t,")):
                continue
            parts = s.split(",")
            if len(parts) not in ncols or (width is not None and len(parts) != width):
                want = width if width is not None else " or ".join(map(str, ncols))
                raise DataError(f"{path}:{lineno}: expected {want} fields, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
            width = len(parts)
    if not rows:
        raise DataError(f"{path}: no records")
    a = np.array(rows)
    if not np.all(np.isfinite(a)):
        i = int(np.flatnonzero(~np.isfinite(a).all(axis=1))[0])
        raise DataError(f"{path}: non-finite value in record {i + 1}")
    d = np.diff(a[:, 0])
    if (d <= 0).any():
        i = int(np.flatnonzero(d <= 0)[0]) + 1
        raise DataError(f"{path}: time not strictly increasing at record {i + 1} (t={a[i, 0]!r})")
    return a


def _write_table(path, table, header):
    np.savetxt(path, table, delimiter=",", fmt="%.17g", header=header, comments="# ")


def load_imu(path) -> ImuData:
    return ImuData.from_array(_read_table(path, (7,)))


def write_imu(path, imu: ImuData):
    _write_table(path, imu.as_array(), IMU_HEADER)


def load_truth(path) -> Trajectory:
    a = _read_table(path, (7, 10))
    vel = a[:, 7:10] if a.shape[1] == 10 else None
    return Trajectory(a[:, 0], a[:, 1:4], a[:, 4:7], vel)


def write_truth(path, traj: Trajectory, with_velocity: bool = True):
    cols = [traj.t, traj.pos, traj.euler]
    header = TRUTH_HEADER
    if with_velocity and traj.vel is not None:
        cols.append(traj.vel)
        header = TRUTH_VEL_HEADER
    _write_table(path, np.column_stack(cols), header)


load_estimate = load_truth
write_estimate = write_truth


def load_odometer(path):
    a = _read_table(path, (2,))
    return a[:, 0].copy(), a[:, 1].copy()


def write_odometer(path, odo):
    t, v = odo
    _write_table(path, np.column_stack([t, v]), ODO_HEADER)


# -- configuration --------------------------------------------------------------------


_SECTIONS = {
    "geometry": GeometryConfig,
    "filter": FilterConfig,
    "init": InitialStd,
    "noise": NoisePsd,
    "gm": GmParams,
    "detector": DetectorThresholds,
}
_NESTED = {"geometry", "init_std", "noise", "detector"}  # FilterConfig fields that are sections


def _scalar_fields(cls):
    return {f.name: f for f in dataclasses.fields(cls)
            if not (cls is FilterConfig and f.name in _NESTED) and not (cls is NoisePsd and f.name == "gm")}


def _coerce(value: str, default, key: str):
    try:
        if isinstance(default, bool):
            v = value.lower()
            if v in ("true", "yes", "on", "1"):
                return True
            if v in ("false", "no", "off", "0"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(float(x) for x in value.split(","))
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def parse_config(lines, source: str = "<config>") -> FilterConfig:
    values = {name: {} for name in _SECTIONS}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        section, dot, name = key.partition(".")
        if not sep or not dot:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        if section not in _SECTIONS:
            raise ConfigError(f"{source}:{lineno}: unknown section {section!r}")
        fields = _scalar_fields(_SECTIONS[section])
        if name not in fields:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if name in values[section]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[section][name] = value
    if "wheel_radius" not in values["geometry"]:
        raise ConfigError(f"{source}: missing required key 'geometry.wheel_radius'")

    def build(section):
        cls = _SECTIONS[section]
        defaults = cls() if section != "filter" else FilterConfig()
        kw = {}
        for name, text in values[section].items():
            kw[name] = _coerce(text, getattr(defaults, name), f"{section}.{name}")
        return kw

    try:
        gm = GmParams(**build("gm"))
        noise = NoisePsd(gm=gm, **build("noise"))
        return FilterConfig(
            geometry=GeometryConfig(**build("geometry")),
            init_std=InitialStd(**build("init")),
            noise=noise,
            detector=DetectorThresholds(**build("detector")),
            **build("filter"),
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> FilterConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such file")
    with open(path) as fh:
        return parse_config(fh, str(path))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, str):
        return v
    return repr(v)


def format_config(cfg: FilterConfig) -> str:
    objs = {"geometry": cfg.geometry, "filter": cfg, "init": cfg.init_std, "noise": cfg.noise,
            "gm": cfg.noise.gm, "detector": cfg.detector}
    out = []
    for section, obj in objs.items():
        for name in _scalar_fields(type(obj)):
            out.append(f"{section}.{name} = {_fmt(getattr(obj, name))}")
        out.append("")
    return "\n".join(out)


def write_config(path, cfg: FilterConfig):
    with open(path, "w") as fh:
        fh.write("# filter configuration, SI units (m, s, rad)\n")
        fh.write(format_config(cfg))


# -- datasets ---------------------------------------------------------------------------


@dataclasses.dataclass
class DatasetFiles:
    root: Path
    wheel_imu: ImuData
    truth: Trajectory
    manifest: dict
    body_imu: ImuData | None = None
    odometer: tuple | None = None

    def geometry(self) -> GeometryConfig:
        return GeometryConfig(**_geo_kwargs(self.manifest["geometry"]))

    def body_geometry(self) -> GeometryConfig | None:
        g = self.manifest.get("body_geometry")
        return None if g is None else GeometryConfig(**_geo_kwargs(g))


def _geo_kwargs(d):
    d = dict(d)
    d["lever_b"] = tuple(d["lever_b"])
    return d


def write_dataset(root, ds, extra: dict | None = None):
    """Write a :class:`wheelins.simulator.Dataset` plus ``manifest.json``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    files = {"wheel_imu": "wheel_imu.csv", "truth": "truth.csv"}
    write_imu(root / files["wheel_imu"], ds.wheel_imu)
    write_truth(root / files["truth"], ds.truth.trajectory())
    manifest = {
        "rate_hz": float(ds.wheel_imu.rate),
        "units": {"imu": "s, rad/s, m/s^2", "truth": "s, m, rad, m/s", "odometer": "s, m/s"},
        "geometry": dataclasses.asdict(ds.geometry),
        "files": files,
    }
    if ds.body_imu is not None:
        files["body_imu"] = "body_imu.csv"
        write_imu(root / files["body_imu"], ds.body_imu)
        manifest["body_geometry"] = dataclasses.asdict(ds.body_geometry())
    if ds.odometer is not None:
        files["odometer"] = "odometer.csv"
        write_odometer(root / files["odometer"], ds.odometer)
        t = ds.odometer[0]
        manifest["odometer_rate_hz"] = float(1.0 / np.median(np.diff(t)))
    manifest.update(ds.meta)
    if extra:
        manifest.update(extra)
    write_manifest(root, manifest)
    return manifest


def write_manifest(root, manifest: dict):
    with open(Path(root) / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _check_rate(name, t, declared):
    observed = 1.0 / float(np.median(np.diff(t)))
    if abs(observed - declared) > 0.01 * declared:
        raise DataError(f"{name}: declared rate {declared} Hz, observed {observed:.3f} Hz")


def load_dataset(root) -> DatasetFiles:
    """Read and validate a dataset directory."""
    root = Path(root)
    mpath = root / MANIFEST
    if not mpath.is_file():
        raise DataError(f"{mpath}: no such file")
    with open(mpath) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{mpath}: {exc}") from None
    files = manifest.get("files", {})
    for key in ("wheel_imu", "truth"):
        if key not in files:
            raise DataError(f"{mpath}: manifest lists no {key} file")
    for key, name in files.items():
        if not (root / name).is_file():
            raise DataError(f"{root / name}: referenced by manifest but missing")
    if "rate_hz" not in manifest or "geometry" not in manifest:
        raise DataError(f"{mpath}: manifest needs rate_hz and geometry")
    wheel = load_imu(root / files["wheel_imu"])
    _check_rate("wheel_imu", wheel.t, manifest["rate_hz"])
    out = DatasetFiles(root, wheel, load_truth(root / files["truth"]), manifest)
    if "body_imu" in files:
        out.body_imu = load_imu(root / files["body_imu"])
        _check_rate("body_imu", out.body_imu.t, manifest["rate_hz"])
    if "odometer" in files:
        out.odometer = load_odometer(root / files["odometer"])
        if "odometer_rate_hz" in manifest:
            _check_rate("odometer", out.odometer[0], manifest["odometer_rate_hz"])
    return out


def copy_dataset(src: DatasetFiles, dst, wheel_imu=None, body_imu=None, extra=None):
    """Write ``src`` under ``dst`` with optionally replaced IMU streams."""
    dst = Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    files = src.manifest["files"]
    write_imu(dst / files["wheel_imu"], wheel_imu if wheel_imu is not None else src.wheel_imu)
    write_truth(dst / files["truth"], src.truth)
    if src.body_imu is not None:
        write_imu(dst / files["body_imu"], body_imu if body_imu is not None else src.body_imu)
    if src.odometer is not None:
        write_odometer(dst / files["odometer"], src.odometer)
    manifest = dict(src.manifest)
    if extra:
        manifest.update(extra)
    write_manifest(dst, manifest)
    return dst


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
