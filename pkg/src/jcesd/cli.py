"""Command-line entry point: ``simulate``, ``sweep`` and ``validate``."""

import argparse
import logging
import sys

from .config import load_config
from .errors import JcesdError
from .harness import parse_snr_range, sweep

log = logging.getLogger("jcesd")


def _simulate(args) -> int:
    cfg = load_config(args.config)
    seeds = cfg.seeds if args.seed is None else [args.seed]
    rows = sweep(cfg, cfg.snr_db, seeds, args.out, resume=False)
    log.info("wrote %d rows to %s", len(rows), args.out)
    return 0


def _sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seeds < 1:
        raise JcesdError("--seeds must be >= 1")
    rows = sweep(cfg, parse_snr_range(args.snr), range(args.seeds), args.out,
                 resume=not args.no_resume)
    log.info("wrote %d rows to %s", len(rows), args.out)
    return 0


def _validate(args) -> int:
    from .validation import run_suite

    results = run_suite(args.suite)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jcesd", description="Semi-blind MU-MIMO link simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the config's SNR list and seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None, help="run only this seed")
    s.set_defaults(func=_simulate)

    w = sub.add_parser("sweep", help="run an SNR grid over seeds 0..N-1")
    w.add_argument("--config", required=True)
    w.add_argument("--snr", required=True, metavar="LO:HI:STEP")
    w.add_argument("--seeds", type=int, required=True)
    w.add_argument("--out", required=True)
    w.add_argument("--no-resume", action="store_true",
                   help="recompute cells already present in --out")
    w.set_defaults(func=_sweep)

    v = sub.add_parser("validate", help="run the built-in self-checks")
    v.add_argument("--suite", choices=("invariants", "appendix", "all"), default="all")
    v.set_defaults(func=_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (JcesdError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
