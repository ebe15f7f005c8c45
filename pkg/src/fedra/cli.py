"""Command-line entry point: ``fedra <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from fedra.catalog import CatalogError, FederationCatalog, load_catalog, serialize_catalog
from fedra.containment import ContainmentError, bgp_contains
from fedra.rdf import RDFSyntaxError
from fedra.selection import plan_to_json, select_sources
from fedra.simulator import (
    SimulationError,
    load_logs,
    load_queries,
    parse_dt,
    run_experiment,
    write_report,
)
from fedra.sparql import (
    SPARQLSyntaxError,
    UnsupportedConstructError,
    parse_query,
    parse_view,
    render_service_query,
)
from fedra.synthetic import generate_federation

log = logging.getLogger("fedra")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTERNAL = 3

# errors caused by the user's inputs rather than by this program
INPUT_ERRORS = (OSError, CatalogError, SPARQLSyntaxError, UnsupportedConstructError, RDFSyntaxError,
                ContainmentError, SimulationError, ValueError)


class UsageError(Exception):
    pass


def _dt_list(text: str) -> list[float]:
    try:
        return [parse_dt(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid dt {text!r}; use a non-negative integer or 'inf'") from None


def _dt(text: str) -> float:
    values = _dt_list(text)
    if len(values) != 1:
        raise argparse.ArgumentTypeError("select takes a single dt")
    return values[0]


def _view_sizes(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition("-")
    try:
        a, b = int(lo), int(hi or lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid size range {text!r}; expected e.g. 1-6") from None
    if not 1 <= a <= b:
        raise argparse.ArgumentTypeError(f"invalid size range {text!r}")
    return a, b


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_federation(path: str, now: int | None) -> FederationCatalog:
    catalog = load_catalog(_read(path))
    return catalog if now is None else catalog.with_now(now)


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_select(args) -> int:
    catalog = _load_federation(args.federation, args.now)
    q = parse_query(_read(args.query))
    plan = select_sources(q, catalog, args.dt)
    if args.emit == "service-query":
        text = render_service_query(q, plan)
    else:
        text = plan_to_json(plan, q, args.dt, catalog.now)
    _write(text, args.out)
    nss = sum(len(e) for e in plan.assignments.values())
    nsps = sum(len(e & plan.public) for e in plan.assignments.values())
    print(f"NSS={nss} NSPS={nsps} SST={plan.sst_seconds:.3f}s", file=sys.stderr)
    for w in plan.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    catalog = _load_federation(args.federation, args.now)
    logs = load_logs(args.logs)
    if not Path(args.queries).is_dir():
        raise UsageError(f"queries directory not found: {args.queries}")
    queries = load_queries(args.queries)
    rows = run_experiment(catalog, logs, queries, args.dt, execute=not args.no_execute, workers=args.workers)
    if args.out in (None, "-"):
        write_report(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_report(rows, fh)
        if args.plot:
            from fedra.plotting import plot_report

            png = plot_report(rows, Path(args.out).with_suffix(".png"))
            log.info("wrote %s", png)
    failed = sum(1 for r in rows if any(w.startswith("error:") for w in r.warnings))
    print(f"{len(rows)} rows, {failed} with errors", file=sys.stderr)
    return EXIT_OK


def containment_verdict(a, b) -> str:
    ab, ba = bgp_contains(a, b), bgp_contains(b, a)
    if ab and ba:
        return "equivalent"
    if ab:
        return "A ⊒ B"
    if ba:
        return "B ⊒ A"
    return "incomparable"


def cmd_containment(args) -> int:
    a = parse_view(_read(args.view_a))
    b = parse_view(_read(args.view_b))
    print(containment_verdict(a, b))
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        catalog = _load_federation(args.federation, args.now)
    except CatalogError as exc:
        for e in exc.errors:
            print(f"invalid: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.logs:
        missing = sorted(set(catalog.origins) - set(load_logs(args.logs)))
        if missing:
            for ds in missing:
                print(f"invalid: no update log for dataset {ds}", file=sys.stderr)
            return EXIT_USAGE
    print(f"ok: {len(catalog.endpoints)} endpoints, {len(catalog.origins)} origins, "
          f"{len(catalog.replicas)} replicas, now={catalog.now}")
    return EXIT_OK


def cmd_gen_federation(args) -> int:
    if args.endpoints < 1:
        raise UsageError("--endpoints must be >= 1")
    if args.fragments < 0:
        raise UsageError("--fragments must be >= 0")
    logs = load_logs(args.logs)
    if not logs:
        raise UsageError(f"no *.log files in {args.logs}")
    catalog = generate_federation(
        logs, args.endpoints, args.fragments, args.seed,
        min_copies=args.min_copies, max_copies=args.max_copies, view_sizes=args.view_sizes,
        constant_rate=args.constant_rate, fresh=args.fresh, cover_predicates=args.cover_predicates,
        now=args.now,
    )
    text = serialize_catalog(catalog)
    # self-check: what we write must load back unchanged
    if serialize_catalog(load_catalog(text)) != text:
        raise RuntimeError("generated catalog does not round-trip")
    _write(text, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedra", description="Replication-aware source selection for SPARQL federations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="compute the endpoint map for one query")
    p.add_argument("--federation", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--dt", type=_dt, default=float("inf"), help="age limit (integer or 'inf'; default inf)")
    p.add_argument("--now", type=int)
    p.add_argument("--emit", choices=("map", "service-query"), default="map")
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="select, execute and score a directory of queries")
    p.add_argument("--federation", required=True)
    p.add_argument("--logs", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--dt", type=_dt_list, default=[float("inf")], help="comma-separated age limits, e.g. 0,1,2")
    p.add_argument("--now", type=int)
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; the simulation draws no random numbers")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-execute", action="store_true", help="selection only; leave execution columns blank")
    p.add_argument("--out")
    p.add_argument("--plot", action="store_true", help="also write a PNG next to --out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("containment", help="compare two CONSTRUCT views")
    p.add_argument("view_a")
    p.add_argument("view_b")
    p.set_defaults(func=cmd_containment)

    p = sub.add_parser("validate", help="check a federation catalog")
    p.add_argument("--federation", required=True)
    p.add_argument("--logs")
    p.add_argument("--now", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen-federation", help="generate a random federation from base logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--endpoints", type=int, required=True, help="number of replica hosts")
    p.add_argument("--fragments", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--now", type=int)
    p.add_argument("--min-copies", type=int, default=0)
    p.add_argument("--max-copies", type=int, default=3)
    p.add_argument("--view-sizes", type=_view_sizes, default=(1, 6))
    p.add_argument("--constant-rate", type=float, default=0.0)
    p.add_argument("--fresh", action="store_true", help="sync every replica at now")
    p.add_argument("--cover-predicates", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_federation)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("FEDRA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except CatalogError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, *INPUT_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # pragma: no cover - reported, not raised
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
