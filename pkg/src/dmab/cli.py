"""Command-line entry point: ``dmab run|bounds|match|validate``.

Exit codes: 0 success, 1 invalid config or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .harness import ConfigError, emit_bound_csv, load_config, run_batch
from .matching import brute_force_matching, run_auction, surplus

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dmab", description="Multi-player bandit simulator with costly coordination.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a seeded batch and write the regret CSV")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="CSV path (overrides the config)")
    p.add_argument("-w", "--workers", type=int, help="parallel seeds (default: config, then $DMAB_WORKERS, then 1)")

    p = sub.add_parser("bounds", help="write the bound curve only")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("match", help="run the auction on a value matrix and compare with enumeration")
    p.add_argument("matrix", help="text file, one row per player, comma or whitespace separated")
    p.add_argument("--eps", type=float, required=True)

    p = sub.add_parser("validate", help="check a config and exit")
    p.add_argument("config")
    return ap


def _load_matrix(path: str) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8").replace(",", " ")
    rows = [r.split() for r in text.splitlines() if r.strip() and not r.lstrip().startswith("#")]
    try:
        V = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise ConfigError(path, f"not a numeric matrix: {exc}") from None
    if V.ndim != 2 or V.size == 0:
        raise ConfigError(path, "rows must all have the same length")
    return V


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.output or cfg.output
    if out is None:
        raise ConfigError("output", "no output path in the config and no --output given")
    res = run_batch(cfg, workers=args.workers, output=out)
    print(f"{cfg.name}: {len(cfg.seeds)} seeds, T={cfg.horizon}, final mean regret "
          f"{res.regret_mean[-1]:.4f}, bound {res.bound_name} {res.bound[-1]:.6g} -> {out}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    cfg = load_config(args.config)
    emit_bound_csv(cfg, args.output)
    print(f"bound curve -> {args.output}")
    return EXIT_OK


def _cmd_match(args) -> int:
    if not args.eps > 0:
        raise ConfigError("--eps", "must be positive")
    V = _load_matrix(args.matrix)
    if V.shape[0] > V.shape[1]:
        raise ConfigError(args.matrix, f"need players <= arms, got {V.shape}")
    assignment, state = run_auction(V, args.eps)
    got = surplus(V, assignment)
    pairs = ", ".join(f"{i + 1}->{a + 1}" for i, a in enumerate(assignment))
    print(f"matching: {pairs}")
    print(f"surplus: {got:.6g}")
    print(f"rounds: {state.rounds}")
    try:
        _, best = brute_force_matching(V)
    except ValueError:
        print("oracle: skipped (too many arms to enumerate)")
        return EXIT_OK
    gap = best - got
    print(f"oracle surplus: {best:.6g} (gap {gap:.3g}, within eps: {'yes' if gap <= args.eps else 'no'})")
    return EXIT_OK if gap <= args.eps else EXIT_RUNTIME


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"{args.config}: ok ({cfg.scenario}, {len(cfg.seeds)} seeds, T={cfg.horizon})")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "bounds": _cmd_bounds, "match": _cmd_match, "validate": _cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
