"""Command-line front end: ``hiphome run | dump-basis | dump-correctors | selftest``.

Exit codes: 0 success, 1 invariant failure, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, HiphomeError
from .experiments import PRESETS, dump_basis, dump_correctors, load_config, run
from .selftest import run_selftest, write_selftest_csv

EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("hiphome")


def _int_list(text: str) -> list:
    """``"1,2,5"`` or ``"1-6"`` (inclusive range) or a mix of both."""
    out = []
    try:
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    return out


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def _families(text: str | None) -> list | None:
    if text is None:
        return None
    return ["hiphome", "educated"] if text == "both" else [text]


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (sections override the preset)")
    p.add_argument("--preset", choices=PRESETS, help="start from a shipped preset")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--m", type=_int_list, help="modal indices, e.g. 1-6 or 2,4")
    p.add_argument("--h", type=_float_list, help="mesh sizes, e.g. 0.025,0.0125")
    p.add_argument("--family", choices=["hiphome", "educated", "legendre", "both"], help="basis families to run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiphome", description="Corrector-based hierarchical model reduction experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a parameter sweep and write errors.csv / summary.json")
    _add_config_args(p)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: available cores)")
    p.add_argument("--timing", action="store_true", help="fill the wall_ms column (makes the CSV non-reproducible)")
    p.add_argument("--fields", action="store_true", default=None, help="also dump reference and reduced fields")

    p = sub.add_parser("dump-basis", help="write the modal basis traces of each family")
    _add_config_args(p)

    p = sub.add_parser("dump-correctors", help="write corrector samples and effective coefficients")
    _add_config_args(p)

    p = sub.add_parser("selftest", help="run the invariant suite and write selftest.csv")
    p.add_argument("--out", type=Path, default=Path("."), help="directory for selftest.csv")
    return parser


def _config(args):
    cfg = load_config(args.config, args.preset)
    return cfg.with_overrides(m=args.m, h=args.h, families=_families(args.family), out=args.out, fields=getattr(args, "fields", None))


def _cmd_run(args) -> int:
    cfg = _config(args)
    report = run(cfg, jobs=args.jobs, timing=args.timing)
    paths = report.write()
    for p in paths[:2]:
        print(p)
    for c in report.invariants:
        if not c["passed"]:
            print(f"invariant failed: {c['check']} ({c.get('value', '')})", file=sys.stderr)
    if report.failures:
        for f in report.failures:
            print(f"failed: {f}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if report.ok else EXIT_INVARIANT


def _cmd_dump_basis(args) -> int:
    cfg = _config(args)
    paths, problem = dump_basis(cfg)
    for p in paths:
        print(p)
    if problem:
        print(f"degenerate basis: {problem}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_dump_correctors(args) -> int:
    for p in dump_correctors(_config(args)):
        print(p)
    return EXIT_OK


def _cmd_selftest(args) -> int:
    checks = run_selftest()
    args.out.mkdir(parents=True, exist_ok=True)
    path = write_selftest_csv(args.out / "selftest.csv", checks)
    bad = [c for c in checks if not c.passed]
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.value:.3e} (tol {c.tolerance:.1e})")
    print(path)
    return EXIT_INVARIANT if bad else EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "dump-basis": _cmd_dump_basis,
    "dump-correctors": _cmd_dump_correctors,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command != "selftest" and args.config is None and args.preset is None:
        parser.error("give --config and/or --preset")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HiphomeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
