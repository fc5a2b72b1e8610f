"""Command-line interface: ``simulate``, ``fuse`` and ``match``.

Exit status is 0 on success, 2 on a bad config, density file or argument.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .estimators import fuse_local_densities
from .io import (
    SchemaError,
    density_to_json,
    label_map_to_json,
    label_to_json,
    load_density,
    partition_to_json,
    save_json,
)
from .matching import DEFAULT_THRESHOLD, match
from .sim import ConfigError, load_config, monte_carlo, write_outputs

log = logging.getLogger("lrfsfusion")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 already; route the message through the same path as other errors
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    p = _Parser(prog="lrfsfusion", description="Fusion of labeled random finite set densities.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a Monte Carlo tracking scenario")
    s.add_argument("config", help="scenario JSON file")
    s.add_argument("--trials", type=int, help="number of trials (default: from config)")
    s.add_argument("--seed", type=int, help="master seed (default: from config)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--fusion", choices=["mil", "gci", "none"], help="fusion rule (default: from config)")
    s.add_argument("--family", choices=["lmb", "mdglmb"], help="density family (default: from config)")
    s.add_argument("--jobs", type=int, default=1, help="parallel trials (results do not depend on it)")

    f = sub.add_parser("fuse", help="fuse local densities stored as JSON")
    f.add_argument("inputs", nargs="+", help="density JSON files, one per agent")
    f.add_argument("--rule", choices=["mil", "gci"], default="mil")
    f.add_argument("--weights", type=float, nargs="+", help="agent weights (default: uniform)")
    f.add_argument("--no-match", action="store_true", help="assume the labels are already shared")
    f.add_argument("--cost", choices=["jsd", "csd", "kld"], default="jsd", help="label matching cost")
    f.add_argument("--td", type=float, default=DEFAULT_THRESHOLD, help="cost of leaving a label unmatched")
    f.add_argument("--out", required=True, help="output density JSON")

    m = sub.add_parser("match", help="match the labels of two densities")
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--cost", choices=["jsd", "csd", "kld"], default="jsd")
    m.add_argument("--td", type=float, default=DEFAULT_THRESHOLD, help="cost of leaving a label unmatched")
    m.add_argument("--out", help="write the result here instead of stdout")
    return p


def _simulate(args):
    config = load_config(args.config)
    changes = {k: v for k, v in (("fusion", args.fusion), ("family", args.family)) if v is not None}
    if changes:
        config = config.replace(**changes)
    if args.trials is not None and args.trials < 1:
        raise ConfigError("--trials must be at least 1")
    if args.jobs == 0:
        raise ConfigError("--jobs must be nonzero")
    result = monte_carlo(config, args.trials, args.seed, n_jobs=args.jobs)
    out = write_outputs(result, args.out)
    print(
        f"{config.name}: fusion={config.fusion} family={config.family} trials={result.ospa.shape[0]} "
        f"mean OSPA={result.overall_ospa():.3f} card error={result.card_error():.3f} "
        f"({result.wall_clock:.1f} s) -> {out}"
    )
    for k, err in result.diverged:
        print(f"warning: trial {k} diverged: {err}", file=sys.stderr)
    return 0


def _fuse(args):
    densities = [load_density(p) for p in args.inputs]
    if len({type(d) for d in densities}) > 1:
        raise SchemaError("all inputs must belong to the same family")
    if args.td <= 0:
        raise ConfigError("--td must be positive")
    try:
        fused, label_map, partition = fuse_local_densities(
            densities, args.rule, args.weights, match=not args.no_match, match_cost=args.cost, match_threshold=args.td
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    doc = density_to_json(fused)
    doc["label_map"] = label_map_to_json(label_map)
    if partition is not None:
        doc["partition"] = partition_to_json(partition)
    save_json(doc, args.out)
    print(f"fused {len(densities)} densities with {args.rule} -> {args.out}")
    return 0


def _match(args):
    if args.td <= 0:
        raise ConfigError("--td must be positive")
    a, b = load_density(args.a), load_density(args.b)
    res = match(a, b, args.cost, args.td)
    doc = {
        "cost": args.cost,
        "threshold": args.td,
        "total_cost": res.total_cost,
        "pairs": [[label_to_json(x), label_to_json(y)] for x, y in res.label_pairs],
        "unmatched_a": [label_to_json(res.labels1[i]) for i in res.unmatched1],
        "unmatched_b": [label_to_json(res.labels2[j]) for j in res.unmatched2],
    }
    if args.out:
        save_json(doc, args.out)
    else:
        print(json.dumps(doc, indent=1))
    return 0


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"simulate": _simulate, "fuse": _fuse, "match": _match}
    try:
        return handlers[args.command](args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: file not found", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

