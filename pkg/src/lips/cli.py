"""Command-line front end.

Exit codes: 0 success, 1 domain error (workspace, singularity, non-convergence,
invalid geometry, binding), 2 usage or input-format error. Output files are
written atomically: on failure no partial file is left behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from importlib.resources import files
from typing import Optional, Sequence

import numpy as np

from .control import Method, ReferenceSpec
from .errors import FormatError, LipsError
from .geometry import AnkleGeometry
from .ingest import bind_ankle, load_linkage_config, model_to_dict, parse_urdf_subset
from .kinematics import fk_position, fk_position_batch, ik_position, jacobian_pair
from .mapping import parallel_torque_from_serial, serial_torque_from_parallel
from .plant import PlantParams
from .simharness import EpisodeConfig, batch_run, kinematics_throughput, metrics_report, run_episode

FIXTURE_GEOMETRY = "fixture"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _vector(text: str, n: int = 2) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got '{text}'") from None
    if len(vals) != n or not all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated finite numbers, got '{text}'")
    return np.array(vals)


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _geometry(path: str) -> AnkleGeometry:
    if path == FIXTURE_GEOMETRY:
        return load_linkage_config(files("lips").joinpath("data/fixture_geometry.json").read_text())
    return load_linkage_config(_read(path))


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".lips-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _floats(a) -> list:
    return [float(v) for v in np.ravel(a)]


def _matrix(m) -> list:
    return [[float(v) for v in row] for row in np.asarray(m)]


# -- subcommands ----------------------------------------------------------------


def cmd_ik(args) -> int:
    sol = ik_position(_geometry(args.geometry), args.chi, args.prev)
    _emit({"q": _floats(sol.q), "branch": list(sol.branch), "residual": sol.residual})
    return 0


def cmd_fk(args) -> int:
    geom = _geometry(args.geometry)
    pose = fk_position(geom, args.q, args.guess)
    res = fk_position_batch(geom, args.q[None, :], None if args.guess is None else args.guess[None, :])
    _emit({"chi": _floats(pose.as_array()), "iterations": int(res.iterations[0])})
    return 0


def cmd_jac(args) -> int:
    geom = _geometry(args.geometry)
    sol = ik_position(geom, args.chi)
    chi_dot = np.zeros(2) if args.chi_dot is None else args.chi_dot
    pair = jacobian_pair(geom, args.chi, chi_dot, sol.q)
    out = {"q": _floats(sol.q), "J": _matrix(pair.J), "det": float(np.linalg.det(pair.J)), "near_singular": pair.near_singular}
    if args.chi_dot is not None:
        out["J_dot"] = _matrix(pair.J_dot)
    _emit(out)
    return 0


def cmd_map_torque(args) -> int:
    geom = _geometry(args.geometry)
    sol = ik_position(geom, args.chi)
    pair = jacobian_pair(geom, args.chi, np.zeros(2), sol.q)
    if args.direction == "to-serial":
        _emit({"tau_s": _floats(serial_torque_from_parallel(pair.J, args.tau))})
    else:
        _emit({"tau_p": _floats(parallel_torque_from_serial(pair.J, args.tau))})
    return 0


def _control_period(hz: float) -> float:
    if not hz > 0:
        raise UsageError("--hz must be positive")
    dt = 1.0 / hz
    if abs(round(dt / 1e-3) * 1e-3 - dt) > 1e-12 or round(dt / 1e-3) < 1:
        raise UsageError(f"--hz {hz} does not divide the 1 kHz physics rate")
    return round(dt / 1e-3) * 1e-3


def _config(args) -> EpisodeConfig:
    params = PlantParams(dt_control=_control_period(args.hz))
    if args.reference == "zero":
        ref = ReferenceSpec.zero()
    else:
        ref = ReferenceSpec(kind=args.reference)
    return EpisodeConfig(
        method=Method(args.method),
        geometry=_geometry(args.geometry),
        plant=params,
        reference=ref,
        noise_sigma=args.noise,
        seed=args.seed,
        duration=args.duration,
        average_force=args.average_force,
    )


def cmd_simulate(args) -> int:
    cfg = _config(args)
    metrics, wave = run_episode(cfg)
    csv_text = wave.to_csv()
    report = metrics_report({cfg.method: metrics}) if args.report else None
    _write_atomic(args.out, csv_text)
    if report is not None:
        _write_atomic(args.report, report)
    _emit({"method": cfg.method.value, "rows": len(wave), **metrics.to_dict(timing=False)})
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    agg, per_env = batch_run(cfg, args.envs)
    kin = kinematics_throughput(cfg.geometry, args.envs, seed=args.seed)
    _emit(
        {
            "method": cfg.method.value,
            "n_envs": args.envs,
            "duration": args.duration,
            "control_hz": args.hz,
            "target": args.envs * args.hz,
            "throughput": kin["throughput"],
            "episode_throughput": agg.throughput,
            "rms_tracking_error": agg.rms_tracking_error,
            "terminated": sum(m.terminated_early for m in per_env),
        }
    )
    return 0


def cmd_parse_urdf(args) -> int:
    model = parse_urdf_subset(_read(args.urdf))
    if args.bind:
        names = args.bind.split(",")
        if len(names) != 2:
            raise UsageError("--bind expects PITCH_JOINT,ROLL_JOINT")
        model = bind_ankle(model, names[0], names[1], _geometry(args.geometry))
    text = json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n"
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    geom = _geometry(args.geometry)
    _emit({"ok": True, "L2": geom.L2})
    return 0


# -- parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lips", description="Parallel-ankle kinematics, torque mapping and deployment simulation.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def geometry_flag(sp):
        sp.add_argument("--geometry", default=FIXTURE_GEOMETRY, help="linkage JSON config (default: shipped fixture)")

    sp = sub.add_parser("ik", help="motor angles for an ankle pose")
    geometry_flag(sp)
    sp.add_argument("--chi", type=_vector, required=True, help="phi,theta in rad")
    sp.add_argument("--prev", type=_vector, help="previous q1,q2 for branch continuity")
    sp.set_defaults(func=cmd_ik)

    sp = sub.add_parser("fk", help="ankle pose for motor angles")
    geometry_flag(sp)
    sp.add_argument("--q", type=_vector, required=True, help="q1,q2 in rad")
    sp.add_argument("--guess", type=_vector, help="initial phi,theta")
    sp.set_defaults(func=cmd_fk)

    sp = sub.add_parser("jac", help="J (and J_dot) at an ankle pose")
    geometry_flag(sp)
    sp.add_argument("--chi", type=_vector, required=True)
    sp.add_argument("--chi-dot", type=_vector, help="phi_dot,theta_dot; adds J_dot to the output")
    sp.set_defaults(func=cmd_jac)

    sp = sub.add_parser("map-torque", help="map torques between motor and ankle space")
    geometry_flag(sp)
    sp.add_argument("--chi", type=_vector, required=True)
    sp.add_argument("--tau", type=_vector, required=True)
    sp.add_argument("--direction", choices=("to-serial", "to-parallel"), required=True,
                    help="to-serial: J^T tau_p; to-parallel: J^-T tau_s")
    sp.set_defaults(func=cmd_map_torque)

    for name, helptext in (("simulate", "run one episode and write the waveform CSV"),
                           ("bench", "batch run and throughput report")):
        sp = sub.add_parser(name, help=helptext)
        geometry_flag(sp)
        sp.add_argument("--method", choices=[m.value for m in Method], default=Method.LIPS.value)
        sp.add_argument("--noise", type=float, default=0.0, help="encoder noise sigma, rad")
        sp.add_argument("--seed", type=int, default=0, help="overridden by LIPS_SEED when set")
        sp.add_argument("--hz", type=float, default=100.0, help="control rate")
        sp.add_argument("--duration", type=float, default=5.0 if name == "simulate" else 0.1)
        sp.add_argument("--reference", choices=("sine", "chirp", "zero"), default="sine")
        sp.add_argument("--average-force", action="store_true", help="s2p-position: equal torques on pure pitch")
        if name == "simulate":
            sp.add_argument("--out", required=True, help="waveform CSV path")
            sp.add_argument("--report", help="metrics JSON path")
            sp.set_defaults(func=cmd_simulate)
        else:
            sp.add_argument("--envs", type=int, default=4096)
            sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("parse-urdf", help="validate a URDF-subset file and dump it as JSON")
    sp.add_argument("urdf")
    sp.add_argument("--geometry", default=FIXTURE_GEOMETRY)
    sp.add_argument("--bind", help="PITCH_JOINT,ROLL_JOINT to bind the linkage geometry to")
    sp.add_argument("--out", help="write JSON here instead of stdout")
    sp.set_defaults(func=cmd_parse_urdf)

    sp = sub.add_parser("validate", help="check a linkage config")
    geometry_flag(sp)
    sp.set_defaults(func=cmd_validate)
    return p


def _check_args(args) -> None:
    seed = os.environ.get("LIPS_SEED")
    if seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(seed)
        except ValueError:
            raise UsageError(f"LIPS_SEED must be an integer, got '{seed}'") from None
    if getattr(args, "noise", 0.0) < 0:
        raise UsageError("--noise must be >= 0")
    if hasattr(args, "duration") and not args.duration > 0:
        raise UsageError("--duration must be positive")
    if getattr(args, "envs", 1) < 1:
        raise UsageError("--envs must be >= 1")


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        _check_args(args)
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except LipsError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
