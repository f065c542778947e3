# src/skewlab/cli.py
from __future__ import annotations

import argparse
import logging
import sys

from . import experiments, settings
from .fixtures import FIXTURES, write_fixture
from .runtime import apply_runtime_options

logger = logging.getLogger(__name__)

_EXPERIMENT_HELP: dict[str, str] = {
    "verify-partition": "Sample-check the Markov partition and export its transition data",
    "properties": "Constant Jacobians, cs-holonomy invariance and the center exponent",
    "estimate-mu": "Estimate the Gibbs u-state and compare it across independent streams",
    "hitting": "Averages over the section hits of pushed plaques and their convergence rate",
    "transverse": "Holonomy invariance of the scaled transverse measure between two sections",
    "coupling": "Couple two reference measures and fit the stopping-time tail",
    "ldp": "Large-deviation tails of Birkhoff sums and the exact cylinder cumulant bound",
    "correlations": "Decay of correlations for catalog observable pairs",
    "center-atoms": "Look for finitely many atoms in center conditionals",
}


def _add_run_options(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument(
        "--config",
        default=None,
        help="Path to skewlab.yml. If omitted, uses env SKEWLAB_CONFIG, then ./skewlab.yml, then defaults.",
    )
    src.add_argument(
        "--fixture",
        default=None,
        choices=sorted(FIXTURES),
        help="Run against a shipped fixture instead of a config file.",
    )
    p.add_argument("--seed", default=None, help="Unsigned 64-bit seed (decimal or 0x-hex); overrides run-settings.seed")
    p.add_argument("--output-dir", default=None, help="Directory for results; overrides run-settings.output_dir")
    p.add_argument("--threads", type=int, default=None, help="Worker threads; never changes results")
    noise = p.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    noise.add_argument("--quiet", action="store_true", help="Only log warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="skewlab",
        description="skewlab - numerical laboratory for partially hyperbolic skew products over the cat map",
    )
    sub = p.add_subparsers(dest="cmd", required=True)

    for name in experiments.EXPERIMENTS:
        run_p = sub.add_parser(name, help=_EXPERIMENT_HELP[name])
        _add_run_options(run_p)

    sub.add_parser("list-fixtures", help="List the shipped fixture configs")

    init_p = sub.add_parser("init", help="Write a fixture as an editable config file")
    init_p.add_argument("fixture", choices=sorted(FIXTURES), help="Fixture to write")
    init_p.add_argument("--path", default="skewlab.yml", help="Destination (default: ./skewlab.yml)")
    init_p.add_argument("--force", action="store_true", help="Overwrite an existing file")

    return p


def _die(msg: str) -> int:
    print(f"skewlab: error: {msg}", file=sys.stderr)
    return 2


def _configure_logging(*, verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root = logging.getLogger("skewlab")
    root.setLevel(level)
    if not any(getattr(h, "_skewlab", False) for h in root.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handler._skewlab = True  # type: ignore[attr-defined]
        root.addHandler(handler)


def _list_fixtures() -> int:
    for f in FIXTURES.values():
        print(f"{f.name:<20} {f.description}")
    return 0


def _init(args: argparse.Namespace) -> int:
    try:
        result = write_fixture(args.fixture, args.path, force=bool(args.force))
    except FileExistsError as e:
        print(f"skewlab: error: {e}", file=sys.stderr)
        print("Use --force to overwrite.", file=sys.stderr)
        return 2
    verb = "Overwrote" if result.overwritten else "Created"
    print(f"{verb} config file: {result.path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.cmd == "list-fixtures":
        return _list_fixtures()
    if args.cmd == "init":
        return _init(args)

    _configure_logging(verbose=bool(args.verbose), quiet=bool(args.quiet))
    # each invocation starts from a clean runtime context and config cache
    settings.reset_runtime_context()
    try:
        apply_runtime_options(
            config_path=args.config,
            fixture=args.fixture,
            seed=args.seed,
            output_dir=args.output_dir,
            threads=args.threads,
        )
        summary, artifacts = experiments.run(args.cmd)
    except (ValueError, RuntimeError) as e:
        return _die(str(e))

    status = "passed" if summary.passed else "FAILED"
    print(f"{args.cmd}: {status} ({artifacts.directory})")
    for name, ok in sorted(summary.checks.items()):
        print(f"  {'ok  ' if ok else 'FAIL'} {name}")
    return 0 if summary.passed else 1


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
