"""Command-line entry point: ``qhhg {evolve,parametric,wigner,validate}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, load_config, shipped_configs
from .propagator import PropagationError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("qhhg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhhg", description="Quantized-field high-harmonic generation simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", type=Path, required=config_required, help="scenario JSON file")
        p.add_argument("--output", type=Path, default=None, help="output directory (overrides output_dir)")
        p.add_argument("--threads", type=int, default=1, help="sector worker threads, 0 = one per CPU")
        return p

    ev = common(sub.add_parser("evolve", help="exact sector evolution and observables"))
    ev.add_argument("--dump-matrices", action="store_true", help="write sector matrices as (row, col, value) text")
    common(sub.add_parser("parametric", help="parametric predictions and pulse waveforms"))
    common(sub.add_parser("wigner", help="Wigner function of one mode at one time"))
    va = common(sub.add_parser("validate", help="oracle comparison battery"), config_required=False)
    va.add_argument("--include-heavy", action="store_true", help="also validate heavy shipped configs")
    return parser


def _validate(args) -> int:
    from .validation import format_report, report_dict, run_validate

    if args.config is not None:
        configs = [load_config(args.config)]
    else:
        configs = [load_config(p) for _, p in sorted(shipped_configs().items())]
        configs = [c for c in configs if args.include_heavy or not c.heavy]
    checks = []
    for cfg in configs:
        log.info("validating %s", cfg.name)
        checks.extend(run_validate(cfg, threads=args.threads))
    print(format_report(checks))
    report = report_dict(checks)
    out = args.output or (Path(configs[0].output_dir) if len(configs) == 1 and configs[0].output_dir else None)
    if out is not None:
        io.write_json_atomic(Path(out) / "validate.json", report)
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    from . import scenario

    try:
        if args.command == "validate":
            return _validate(args)
        cfg = load_config(args.config)
        if args.command == "evolve":
            manifest = scenario.run_scenario(cfg, args.output, args.threads, args.dump_matrices)
        elif args.command == "parametric":
            manifest = scenario.run_parametric(cfg, args.output)
        else:
            manifest = scenario.run_wigner(cfg, args.output, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PropagationError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (KeyError, ValueError) as exc:
        # malformed values that passed key checking (pulse blocks, grids)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name in manifest["outputs"]:
        log.info("wrote %s", name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
