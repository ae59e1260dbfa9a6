"""Command-line front end: each stage reads and writes plain CSV/JSON files.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .control import (
    SurrogateLoopPlant,
    TruthLoopPlant,
    design_imc,
    design_p,
    shape_reference,
    simulate_closed_loop,
)
from .core import OperatingPoint, read_log_csv, to_deviation, write_log_csv
from .ident import design_prbs, identify, validate
from .kernelmap import calibrate
from .numerics import NumericalError
from .serialization import (
    controller_from_dict,
    dump_json,
    jsonable,
    load_json,
    load_model,
    save_controller,
    save_model,
)
from .truthplant import run_experiment, steady_operating_point

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("slotdie")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out if args.out is not None else cfg.io.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _operating_point(path: str | None, log_path: str) -> OperatingPoint:
    """Operating point from ``path`` or from the meta.json written next to the log."""
    src = Path(path) if path else Path(log_path).with_name("meta.json")
    data = load_json(src)
    data = data.get("operating_point", data)
    return OperatingPoint.from_dict(data)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    plant = cfg.truth_plant_config()
    op = steady_operating_point(plant)
    q_log = design_prbs(cfg.prbs_spec(), op, cfg.sample_time_s)
    result = run_experiment(plant, q_log, cfg.sample_time_s)
    write_log_csv(result, out / "log.csv")
    dump_json(
        jsonable({"config": cfg.to_dict(), "operating_point": op.to_dict(),
                  "sample_time_s": cfg.sample_time_s}),
        out / "meta.json",
    )
    log.info("wrote %d samples to %s", result.n_samples, out / "log.csv")
    return EXIT_OK


def cmd_identify(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    data = read_log_csv(args.log)
    op = _operating_point(args.op, args.log)
    dlog = to_deviation(data, op)
    s = cfg.ident
    model = identify(dlog, s.channel, s.d_max, s.all_inputs, s.rtol, s.grid(), op)
    save_model(model, out / "model.json")
    log.info("identified d=%d c0=%.6g c1=%.6g", model.d, model.surrogate.c0, model.surrogate.c1)
    return EXIT_OK


def cmd_calibrate(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    model = load_model(args.model)
    res = calibrate(model.H, cfg.build_geometry())
    dump_json(
        {"kappa_star": res.kappa_star, "ell_star": res.ell_star, "rel_error": res.rel_error},
        out / "calibration.json",
    )
    return EXIT_OK


def cmd_design(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    model = load_model(args.model)
    c = cfg.control
    kind = args.type or c.type
    if kind == "p":
        ctrl = design_p(model.H, c.beta)
    else:
        ctrl = design_imc(model.H, model.surrogate, c.lambda_s, c.floor_fraction, c.realization)
    save_controller(ctrl, out / "controller.json")
    return EXIT_OK


def cmd_closed_loop(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    model = load_model(args.model)
    ctrl = controller_from_dict(load_json(args.controller), model)
    c = cfg.control
    if c.plant == "truth":
        plant = TruthLoopPlant(cfg.truth_plant_config())
    else:
        op = model.op
        if op is None:
            raise ConfigError("model has no operating point; closed loop needs h0")
        plant = SurrogateLoopPlant(model.surrogate, model.H, op)
    op = plant.op
    target = args.target_m if args.target_m is not None else c.h_target_m
    if target is not None and not target > 0:
        raise ConfigError("target thickness must be positive")
    if target is None:
        dref = np.zeros(op.n)
    elif ctrl.kind == "p":
        dref = shape_reference(target, op, ctrl.beta)
    else:
        dref = target - op.h0
    Ts = model.Ts
    res = simulate_closed_loop(plant, ctrl, dref, c.horizon_s, Ts, clamp=c.clamp)
    write_log_csv(res.log, out / "closed_loop.csv")
    dump_json(res.summary(), out / "summary.json")
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    out = _out_dir(args, cfg)
    model = load_model(args.model)
    data = read_log_csv(args.log)
    op = _operating_point(args.op, args.log)
    report = validate(to_deviation(data, op), model.surrogate, model.H)
    dump_json(report.to_dict(), out / "validation.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the flags appear before or after the subcommand
    common.add_argument("--config", default=argparse.SUPPRESS, help="run configuration JSON")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override io.seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(
        prog="slotdie",
        description="Slot-die thickness identification and control toolkit.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a PRBS experiment on the truth plant")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("identify", parents=[common], help="identify delay, poles and gain matrix")
    p.add_argument("--log", required=True, help="SignalLog CSV (absolute frame)")
    p.add_argument("--op", help="operating-point JSON (default: meta.json next to the log)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("calibrate-kernel", parents=[common], help="fit the Gaussian kernel family")
    p.add_argument("--model", required=True, help="model JSON, gain CSV or builtin:<name>")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("design-controller", parents=[common], help="design a P or IMC controller")
    p.add_argument("--model", required=True, help="model JSON or builtin:<name>")
    p.add_argument("--type", choices=("p", "imc"), help="override control.type")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("closed-loop", parents=[common], help="simulate the closed loop")
    p.add_argument("--model", required=True, help="model JSON or builtin:<name>")
    p.add_argument("--controller", required=True, help="controller JSON")
    p.add_argument("--target-m", type=float, help="override control.h_target_m [m]")
    p.set_defaults(func=cmd_closed_loop)

    p = sub.add_parser("validate", parents=[common], help="score a model against a log")
    p.add_argument("--log", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--op", help="operating-point JSON (default: meta.json next to the log)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None), ("out", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        cfg = RunConfig.load(args.config).with_seed(args.seed)
        return args.func(args, cfg)
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
