"""Command-line front end: ``simulate``, ``run``, ``eval``, ``modulate`` and
``inject-bias``.

Exit status is 0 on success, 1 for usage errors and 2 when input data or
configuration fail validation.  Errors are reported as one line on stderr::

    wheelins: error[usage|data]: <message>
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import evaluation, simulator
from . import io as wio
from .core import D2R, DEG_PER_HOUR
from .filter import FilterConfig, FilterError, run
from .mechanization import AlignmentError, ImuData

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _vector(text: str):
    try:
        v = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wheelins", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--track", required=True,
                   help=f"preset ({', '.join(simulator.TRACK_PRESETS)}) or JSON track file")
    s.add_argument("--imu-grade", default="icm20602",
                   help=f"preset ({', '.join(simulator.IMU_GRADES)}) or JSON error file")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--mounting-pitch-deg", type=float, default=0.0)
    s.add_argument("--mounting-yaw-deg", type=float, default=0.0)
    s.add_argument("--no-body", action="store_true", help="skip body IMU and odometer")

    r = sub.add_parser("run", help="run the filter on a dataset")
    r.add_argument("--dataset", required=True)
    r.add_argument("--config", required=True)
    r.add_argument("--mode", choices=("wheel-ins", "odo-ins"), default="wheel-ins")
    r.add_argument("--state-dim", type=int, choices=(21, 15, 9), default=21)
    r.add_argument("--out", required=True)
    r.add_argument("--no-initial-bias", action="store_true",
                   help="do not take the initial gyro bias from the static window")

    e = sub.add_parser("eval", help="score an estimate against the reference")
    e.add_argument("--est", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--segment-length", type=float, default=100.0)
    e.add_argument("--report", required=True)
    e.add_argument("--errors", help="optional per-sample error CSV")

    m = sub.add_parser("modulate", help="attitude error of a constant gyro error under wheel spin")
    m.add_argument("--bias", type=_vector, required=True, help="gx,gy,gz in rad/s")
    m.add_argument("--wheel-rate", type=float, required=True, help="rad/s")
    m.add_argument("--duration", type=float, required=True, help="s")
    m.add_argument("--rate", type=float, default=100.0, help="output samples per second")
    m.add_argument("--out", required=True)

    b = sub.add_parser("inject-bias", help="add a constant gyro bias to a dataset")
    b.add_argument("--dataset", required=True)
    b.add_argument("--gyro-bias-deg-h", type=float, required=True)
    b.add_argument("--sensor", choices=("both", "wheel", "body"), default="both")
    b.add_argument("--out", required=True)
    return p


# -- commands --------------------------------------------------------------------------


def _load_track(spec: str):
    if spec in simulator.TRACK_PRESETS:
        return simulator.preset_track(spec)
    if not Path(spec).is_file():
        raise UsageError(f"unknown track preset or missing file {spec!r}")
    try:
        return simulator.TrackSpec.from_json(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise wio.DataError(f"{spec}: {exc}") from None


def _load_grade(spec: str, seed: int):
    if spec in simulator.IMU_GRADES:
        return spec
    if not Path(spec).is_file():
        raise UsageError(f"unknown IMU grade or missing file {spec!r}")
    try:
        err = simulator.ErrorSpec.from_json(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise wio.DataError(f"{spec}: {exc}") from None
    return dataclasses.replace(err, seed=seed)


def cmd_simulate(args):
    track = _load_track(args.track)
    geo = dataclasses.replace(simulator.default_geometry(),
                              mounting_pitch=args.mounting_pitch_deg * D2R,
                              mounting_yaw=args.mounting_yaw_deg * D2R)
    grade = _load_grade(args.imu_grade, args.seed)
    ds = simulator.make_dataset(track, grade, args.seed, geometry=geo, body=not args.no_body)
    out = wio.ensure_dir(args.out)
    wio.write_dataset(out, ds, {"imu_grade": args.imu_grade, "track_name": args.track})
    wio.write_config(out / "filter.cfg", FilterConfig(geometry=geo))


def _config_for(args, ds: wio.DatasetFiles):
    cfg = wio.load_config(args.config)
    geo = cfg.geometry
    if args.mode == "odo-ins":
        body = ds.body_geometry()
        if body is None or ds.body_imu is None or ds.odometer is None:
            raise wio.DataError(f"{ds.root}: odo-ins needs body_imu and odometer files")
        geo = dataclasses.replace(body, wheel_radius=geo.wheel_radius)
    return dataclasses.replace(cfg, geometry=geo, mode=args.mode, dim_mode=args.state_dim,
                               estimate_initial_bias=cfg.estimate_initial_bias and not args.no_initial_bias)


def cmd_run(args):
    ds = wio.load_dataset(args.dataset)
    cfg = _config_for(args, ds)
    imu = ds.body_imu if args.mode == "odo-ins" else ds.wheel_imu
    out = run(imu, cfg, ds.truth, odometer=ds.odometer)
    root = wio.ensure_dir(args.out)
    wio.write_estimate(root / "estimate.csv", out.to_trajectory())
    np.savetxt(root / "std.csv", np.column_stack([out.t, out.std()]), delimiter=",", fmt="%.17g",
               header="t," + ",".join(f"s{i}" for i in range(out.P_diag.shape[1])), comments="# ")
    np.savetxt(root / "sensor_errors.csv", np.column_stack([out.t, out.sensor_errors]),
               delimiter=",", fmt="%.17g",
               header="t,bgx,bgy,bgz,bax,bay,baz,sgx,sgy,sgz,sax,say,saz", comments="# ")
    summary = {
        "mode": cfg.mode,
        "state_dim": cfg.dim_mode,
        "updates": int(len(out.update_t)),
        "rejected_updates": int((out.update_accepted == 0).sum()),
        "psd_min_ratio": out.psd_min_ratio,
        "divergence_flags": int(len(out.divergence_t)),
        "divergence_times": " ".join(f"{t:.3f}" for t in out.divergence_t) or "none",
    }
    evaluation.write_report(summary, root / "run_summary.txt")


def cmd_eval(args):
    est = wio.load_estimate(args.est)
    truth = wio.load_truth(args.truth)
    try:
        pair = evaluation.align(est, truth)
        metrics = evaluation.evaluate(est, truth, args.segment_length)
    except ValueError as exc:
        raise wio.DataError(str(exc)) from None
    evaluation.write_report(metrics, args.report)
    if args.errors:
        evaluation.write_errors(pair, args.errors)


def cmd_modulate(args):
    if args.duration <= 0 or args.rate <= 0:
        raise UsageError("duration and rate must be positive")
    t = np.arange(0.0, args.duration + 0.5 / args.rate, 1.0 / args.rate)
    err = simulator.modulation_error(args.bias, args.wheel_rate, t)
    np.savetxt(args.out, np.column_stack([t, err]), delimiter=",", fmt="%.17g",
               header="t,ex,ey,ez", comments="# ")


def cmd_inject_bias(args):
    ds = wio.load_dataset(args.dataset)
    b = args.gyro_bias_deg_h * DEG_PER_HOUR

    def shifted(imu):
        return None if imu is None else ImuData(imu.t, imu.gyro + b, imu.accel)

    wheel = shifted(ds.wheel_imu) if args.sensor in ("both", "wheel") else None
    body = shifted(ds.body_imu) if args.sensor in ("both", "body") else None
    wio.copy_dataset(ds, args.out, wheel, body,
                     {"injected_gyro_bias_deg_h": args.gyro_bias_deg_h, "injected_into": args.sensor})


COMMANDS = {
    "simulate": cmd_simulate,
    "run": cmd_run,
    "eval": cmd_eval,
    "modulate": cmd_modulate,
    "inject-bias": cmd_inject_bias,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wheelins: error[usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (wio.DataError, wio.ConfigError, FilterError, AlignmentError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"wheelins: error[data]: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
