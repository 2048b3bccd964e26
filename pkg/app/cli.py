"""
HomodyneQKD — Command Line
  run       run one scenario and write report.json / histogram.csv / peaks.csv
  sweep     vary one scenario field over a list of values, write sweep.csv
  selftest  fast invariant checks
  serve     start the HTTP API
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import ConfigError, SessionAborted

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ABORTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SELFTEST = 4


def _configure_logging() -> None:
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s | %(name)s | %(levelname)s | %(message)s",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homodyne-qkd",
        description="Coherent-state QPSK BB84 with balanced homodyne detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one scenario")
    run.add_argument("--config", required=True, help="Scenario JSON file or bundled scenario name")
    run.add_argument("--seed", type=int, default=None, help="Override the scenario seed (u64)")
    run.add_argument("--out", type=Path, default=None, help="Output directory")
    run.add_argument("--transport", choices=["queue", "socket"], default="queue",
                     help="Classical channel: in-process queues or a loopback socket")

    sweep = sub.add_parser("sweep", help="Sweep one scenario field")
    sweep.add_argument("--config", required=True, help="Scenario JSON file or bundled scenario name")
    sweep.add_argument("--param", required=True, help="Scenario field to vary")
    sweep.add_argument("--values", required=True, help="Comma-separated values")
    sweep.add_argument("--out", type=Path, default=None, help="Output directory")

    sub.add_parser("selftest", help="Run the fast invariant checks")

    serve = sub.add_parser("serve", help="Start the HTTP API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def _cmd_run(args) -> int:
    from app.services.scenarios import load_scenario, run_scenario

    cfg = load_scenario(args.config)
    if args.seed is not None:
        cfg = cfg.model_validate({**cfg.model_dump(), "seed": args.seed})
    result = run_scenario(cfg, out_dir=args.out, transport=args.transport)
    r = result.report
    print(
        f"{r.scenario or 'scenario'}: {r.n_key_bits} key bits from {r.n_pulses} pulses, "
        f"QBER {r.qber_estimate:.5f} (theory {r.qber_theory:.5f}) -> {result.paths['report'].parent}"
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from app.services.scenarios import load_scenario, run_sweep

    cfg = load_scenario(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    path = run_sweep(cfg, args.param, values, out_dir=args.out)
    print(f"sweep over {args.param}: {len(values)} points -> {path}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    from app.services.selftest import run_selftest

    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("app.main:app", host=args.host, port=args.port, log_level=settings.log_level.lower())
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "selftest": _cmd_selftest,
    "serve": _cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging()
    try:
        return COMMANDS[args.command](args)
    except SessionAborted as e:
        logger.error(f"Session aborted: {e.reason}")
        print(f"aborted: {e.reason}", file=sys.stderr)
        return EXIT_ABORTED
    except (ConfigError, ValidationError) as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
