"""Command line: ``build``, ``verify``, ``hull-test`` and ``plot``.

Exit codes: 0 all hard invariants pass, 2 invariant failure, 3 budget,
4 I/O, 5 configuration or usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_inject
from .construction import BudgetError, ContractError
from .geometry import GeometryError
from .persist import ArtifactError, load_artifacts, read_clouds, report_json, write_build
from .pipeline import build, verify_artifacts
from .varieties import EmptyBoundaryError
from .verify import search_hull_certificate

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_BUDGET = 3
EXIT_IO = 4
EXIT_CONFIG = 5

log = logging.getLogger("bidisk_hull")


def _parse_point(text: str) -> tuple[complex, complex]:
    try:
        z, w = text.split(",")
        return complex(z.replace("i", "j")), complex(w.replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse point {text!r}; expected e.g. '0,0.5j'") from exc


def cmd_build(args) -> int:
    config = load_config(args.config)
    injected = tuple(parse_inject(s) for s in args.inject) if args.inject else None
    config = config.with_overrides(
        stages=args.stages, seed=args.seed, output_dir=args.out,
        injected_pairs=injected,
    )
    config = type(config).from_dict(config.to_dict())  # re-validate after overrides
    result = build(config)
    path = write_build(result, config.output_dir)
    print(result.report.summary())
    print(f"\nmanifest: {path}")
    print(f"hard invariants: {'PASS' if result.report.passed else 'FAIL'}")
    return EXIT_OK if result.report.passed else EXIT_INVARIANT


def cmd_verify(args) -> int:
    art, data = load_artifacts(args.manifest)
    report = verify_artifacts(art)
    print(report.summary())
    stored = json.dumps(data["report"], indent=2, sort_keys=True)
    identical = stored == report_json(report)
    print(f"\nbuild-time report reproduced: {'identical' if identical else 'MISMATCH'}")
    if not identical:
        old = {(r["name"], r["stage"], r["index"]): r["margin"] for r in data["report"]}
        for r in report:
            key = (r.name, r.stage, r.index)
            if old.get(key) != r.margin:
                print(f"  margin mismatch {key}: stored {old.get(key)!r} now {r.margin!r}")
    return EXIT_OK if identical and report.passed else EXIT_INVARIANT


def cmd_hull_test(args) -> int:
    target = _parse_point(args.target)
    clouds = read_clouds(Path(args.cloud))
    if args.set:
        if args.set not in clouds:
            raise ConfigError(f"set {args.set!r} not in {sorted(clouds)}")
        S = clouds[args.set]
    else:
        S = next(iter(clouds.values()))
        for c in list(clouds.values())[1:]:
            S = S.concat(c)
    cert = search_hull_certificate(target, S, args.degree, args.budget, args.seed)
    if cert is None:
        print("consistent with hull membership")
    else:
        print(f"certificate: {cert.describe()}")
        print(f"margin: {cert.margin!r}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_gaps, plot_projection

    if not args.which:
        print("plot: choose at least one of --which proj1 proj2 gaps", file=sys.stderr)
        return EXIT_CONFIG
    art, data = load_artifacts(args.manifest)
    root = Path(args.manifest)
    root = root if root.is_dir() else root.parent
    out = Path(args.out) if args.out else root / "plots"
    for which in args.which:
        if which == "proj1":
            p = plot_projection(art.V, art.Y, 1, out / "proj1.svg")
        elif which == "proj2":
            p = plot_projection(art.V, art.Y, 2, out / "proj2.svg")
        else:
            p = plot_gaps(art.chosen_indices, art.gaps, out / "gaps.svg")
        print(p)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bidisk-hull", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="run the construction and the check suite")
    b.add_argument("--config", help="JSON configuration file")
    b.add_argument("--stages", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--out", help="output directory")
    b.add_argument("--inject", action="append", metavar="POLY:RE,IM",
                   help="force a (polynomial, target) pair, e.g. '(z+w)/2:0.5,0'")
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify", help="re-run the checks from a build directory or manifest")
    v.add_argument("manifest")
    v.set_defaults(func=cmd_verify)

    h = sub.add_parser("hull-test", help="search for a polynomial separating a point from a cloud")
    h.add_argument("target", help="point as 'z,w', e.g. '0,0.5' or '0.1+0.2j,0'")
    h.add_argument("cloud", help="cloud CSV file")
    h.add_argument("--set", help="restrict to rows with this set label")
    h.add_argument("--degree", type=int, default=3)
    h.add_argument("--budget", type=int, default=10_000)
    h.add_argument("--seed", type=int, default=0)
    h.set_defaults(func=cmd_hull_test)

    p = sub.add_parser("plot", help="SVG projections and gap plot")
    p.add_argument("manifest")
    p.add_argument("--which", nargs="*", choices=["proj1", "proj2", "gaps"], default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except EmptyBoundaryError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ArtifactError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GeometryError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
