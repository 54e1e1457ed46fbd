"""Command-line entry point: ``fxpnlc {optimize,sweep,point,report}``."""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys

from .errors import ConfigurationError
from .experiment import (SweepConfig, SweepPaths, load_coefficients, optimize_and_store,
                         run_point, run_sweep, write_report)
from .nlc import NlcPlan

log = logging.getLogger("fxpnlc")


def _config(args) -> SweepConfig:
    over = {}
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.seed is not None:
        over["seeds"] = (args.seed,)
    if getattr(args, "output", None):
        over["output_dir"] = args.output
    scenario = "full" if args.full_scale else args.scenario
    if args.config:
        cfg = SweepConfig.from_file(args.config, scenario, **over)
    else:
        cfg = SweepConfig.from_scenario(scenario or "desk", **over)
    if cfg.scenario == "full":
        log.warning("full-scale scenario: 1000 km, %d symbols; expect many hours of compute",
                    cfg.n_symbols)
    return cfg


def cmd_optimize(args) -> dict:
    cfg = _config(args)
    paths = SweepPaths(Path(cfg.output_dir))
    formats = [args.format] if args.format else list(dict.fromkeys(cfg.formats + cfg.dbp_formats))
    powers = [args.power] if args.power is not None else list(cfg.launch_power_dbm)
    n_list = [args.n_coeffs] if args.n_coeffs else list(cfg.n_coeffs)
    written = []
    for fmt in formats:
        for seed in cfg.seeds:
            for p in powers:
                for n in n_list:
                    path = optimize_and_store(paths.coeffs, fmt, p, n, cfg.link, cfg.tx(fmt, seed),
                                              seed, cfg.optim_max_iters, cfg.float_fft_size_exp,
                                              force=args.force)
                    written.append(str(path))
    return {"coefficient_files": written}


def cmd_sweep(args) -> dict:
    cfg = _config(args)
    out = run_sweep(cfg, progress=lambda m: log.info(m))
    return {"csv": [str(p) for p in out]}


def cmd_report(args) -> dict:
    cfg = _config(args)
    return {"csv": [str(p) for p in write_report(cfg)]}


def cmd_point(args) -> dict:
    cfg = _config(args)
    seed = cfg.seeds[0]
    fmt = args.format or cfg.formats[0]
    paths = SweepPaths(Path(cfg.output_dir))
    common = dict(fft_size_exp=args.fft_size_exp, bit_depth=args.bits,
                  launch_power_dbm=args.power)
    if args.algorithm == "cdc":
        plan = NlcPlan.cdc(**common)
    elif args.algorithm == "dbp":
        plan = NlcPlan.dbp(args.steps, **common)
    else:
        c = load_coefficients(paths.coeffs, fmt, args.power, args.n_coeffs, cfg.link, seed)
        plan = NlcPlan.essfm(c, **common)
    rec = run_point(plan, cfg.link, cfg.tx(fmt, seed), seed, paths.waveforms,
                    cdc_fft_exps=cfg.fft_size_exp if args.bits is not None else None)
    return json.loads(rec.to_json())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fxpnlc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="sweep config file ([sweep] section)")
        p.add_argument("--scenario", choices=["desk", "full"], default=None)
        p.add_argument("--full-scale", action="store_true",
                       help="use the 1000 km scenario (hours of compute)")
        p.add_argument("--jobs", type=int, default=None, help="worker processes")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output", help="output directory (overrides config)")

    p = sub.add_parser("optimize", help="optimize ESSFM coefficients and write coefficient files")
    common(p)
    p.add_argument("--format", choices=["QPSK", "16QAM"])
    p.add_argument("--power", type=float, help="launch power in dBm")
    p.add_argument("--n-coeffs", type=int)
    p.add_argument("--force", action="store_true", help="re-optimize existing files")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="run or resume a scenario and write the CSV tables")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("point", help="run one configuration and print its record")
    common(p)
    p.add_argument("algorithm", choices=["cdc", "dbp", "essfm"])
    p.add_argument("--format", choices=["QPSK", "16QAM"])
    p.add_argument("--power", type=float, default=0.0)
    p.add_argument("--bits", type=int, default=None, help="bit depth (omit for float64)")
    p.add_argument("--fft-size-exp", type=int, default=10)
    p.add_argument("--steps", type=int, default=1, help="DBP steps per link")
    p.add_argument("--n-coeffs", type=int, default=16)
    p.set_defaults(func=cmd_point)

    p = sub.add_parser("report", help="rebuild the CSV tables from stored records")
    common(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        result = args.func(args)
    except ConfigurationError as exc:
        print(json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)}))
        return 2
    except Exception as exc:
        print(json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)}))
        return 1
    print(json.dumps({"status": "ok", "command": args.command, **result}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
