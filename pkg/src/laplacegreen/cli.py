"""Command line: ``laplacegreen <command> --config run.yaml [flags]``.

Exit codes: 0 success, 1 a check failed, 2 bad config, input or usage.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .experiments import COMMANDS, USAGE, run_exponents
from .io import CsvFormatError


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="laplacegreen",
                                 description="Laplace time averages of Floquet dynamics via Green functions.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", metavar="DIR", help="output directory (default: config 'output')")
        p.add_argument("--n-e", type=int, metavar="INT", help="quadrature nodes on the circle")
        p.add_argument("--tol", type=float, metavar="FLOAT", help="pass/fail tolerance")
        p.add_argument("--seed", type=int, metavar="INT")
        p.add_argument("--threads", type=int, metavar="INT")
        if name == "exponents":
            p.add_argument("--series", metavar="CSV", help="series file with columns m,h")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(
            n_e=args.n_e, tol=args.tol, seed=args.seed, threads=args.threads, out=args.out)
        if args.command == "exponents":
            res = run_exponents(cfg, cfg.output, args.series)
        else:
            res = COMMANDS[args.command](cfg, cfg.output)
    except (ConfigError, CsvFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    for m in res.messages:
        print(m, file=sys.stderr)
    for f in res.files:
        print(f"wrote {f}")
    return res.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
