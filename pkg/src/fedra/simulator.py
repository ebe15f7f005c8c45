"""Desk-scale federation simulator.

Replicas are materialised from the origin update logs at their sync time,
selection plans are executed directly against those stores, and answers
are scored against the fresh union of all origin datasets.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from fedra.catalog import UNBOUNDED, FederationCatalog, is_universal
from fedra.rdf import (
    Graph,
    SolutionBag,
    UpdateLog,
    construct,
    graph_at_time,
    join_solutions,
    match_pattern,
    parse_log,
    union_graphs,
)
from fedra.selection import SelectionPlan, format_dt, nsps, nss, select_sources
from fedra.sparql import Query, UnsupportedConstructError, ViewDefinition, parse_query, triple_patterns

log = logging.getLogger(__name__)

REPORT_HEADER = ["query", "dt", "nss", "nsps", "sst_seconds", "etue_seconds",
                 "answers", "completeness", "staleness", "warnings"]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class EndpointStore:
    endpoint: str
    graphs: dict[str, Graph] = field(default_factory=dict)

    def graph(self) -> Graph:
        return union_graphs(self.graphs.values())


@dataclass
class MetricsRow:
    query: str
    dt: float
    nss: int | None = None
    nsps: int | None = None
    sst_seconds: float | None = None
    etue_seconds: float | None = None
    answers: int | None = None
    completeness: float | None = None
    staleness: float | None = None
    warnings: list[str] = field(default_factory=list)

    def as_record(self) -> list[str]:
        def num(x, fmt):
            return "" if x is None else format(x, fmt)

        return [
            self.query,
            str(format_dt(self.dt)),
            num(self.nss, "d"),
            num(self.nsps, "d"),
            num(self.sst_seconds, ".3f"),
            num(self.etue_seconds, ".3f"),
            num(self.answers, "d"),
            num(self.completeness, ".4f"),
            num(self.staleness, ".4f"),
            " | ".join(self.warnings),
        ]


def materialize_replica(log_: UpdateLog, view: ViewDefinition, sync_time: int) -> Graph:
    """Contents of a fragment copied from ``log_`` at ``sync_time``."""
    return construct(graph_at_time(log_, sync_time), view.body)


def build_stores(catalog: FederationCatalog, logs: Mapping[str, UpdateLog]) -> dict[str, EndpointStore]:
    """Materialise every origin and replica of the catalog."""
    missing = sorted(set(catalog.origins) - set(logs))
    if missing:
        raise SimulationError(f"no update log for datasets {missing}")
    graphs: dict[str, dict[str, Graph]] = {e: {} for e in catalog.endpoints}
    fresh = {ds: graph_at_time(logs[ds], catalog.now) for ds in catalog.origins}
    snapshots: dict[tuple[str, int], Graph] = {}
    for rep in catalog.fragments():
        if is_universal(rep.fragment_id):
            graphs[rep.host][rep.fragment_id] = fresh[rep.source_dataset]
            continue
        key = (rep.source_dataset, rep.sync_time)
        if key not in snapshots:
            snapshots[key] = graph_at_time(logs[rep.source_dataset], rep.sync_time)
        graphs[rep.host][rep.fragment_id] = construct(snapshots[key], rep.view.body)
    return {e: EndpointStore(e, g) for e, g in graphs.items()}


def _require_bgp(q: Query) -> None:
    if q.form != "select" or not q.is_bgp() or q.filters:
        raise UnsupportedConstructError("the simulator only executes SELECT queries over a plain BGP")


def _finish(q: Query, bag: SolutionBag) -> SolutionBag:
    out_vars = q.output_variables()
    if not bag.rows:
        return SolutionBag.empty(out_vars)
    bag = bag.project(out_vars)
    return bag.distinct() if q.distinct else bag


def execute_plan(q: Query, plan: SelectionPlan | Mapping, stores: Mapping[str, EndpointStore]) -> SolutionBag:
    """Evaluate a BGP query, reading each pattern only from its assigned endpoints.

    Matches for one pattern are unioned at the triple level across the
    endpoints' graphs and then joined across patterns in query order.
    """
    _require_bgp(q)
    assignments = plan.assignments if isinstance(plan, SelectionPlan) else plan
    bag = SolutionBag.unit()
    cache: dict[frozenset[str], Graph] = {}
    for i, tp in enumerate(triple_patterns(q)):
        eps = frozenset(assignments.get((i, tp), ()))
        unknown = sorted(e for e in eps if e not in stores)
        if unknown:
            raise SimulationError(f"plan references endpoints without a store: {unknown}")
        if eps not in cache:
            cache[eps] = union_graphs(g for e in sorted(eps) for g in stores[e].graphs.values())
        bag = join_solutions(bag, match_pattern(cache[eps], tp))
        if not bag.rows:
            return SolutionBag.empty(q.output_variables())
    return _finish(q, bag)


def evaluate_query(q: Query, graph: Graph) -> SolutionBag:
    _require_bgp(q)
    bag = SolutionBag.unit()
    for tp in triple_patterns(q):
        bag = join_solutions(bag, match_pattern(graph, tp))
        if not bag.rows:
            return SolutionBag.empty(q.output_variables())
    return _finish(q, bag)


def oracle_answer(q: Query, catalog: FederationCatalog, logs: Mapping[str, UpdateLog] | Iterable[UpdateLog]) -> SolutionBag:
    """Expected answer: ``q`` over the union of every origin dataset at ``now``."""
    if not isinstance(logs, Mapping):
        logs = {lg.dataset_id: lg for lg in logs}
    return evaluate_query(q, union_graphs(graph_at_time(logs[ds], catalog.now) for ds in sorted(catalog.origins)))


def endpoint_oracle_answer(q: Query, stores: Mapping[str, EndpointStore]) -> SolutionBag:
    """Execution with every pattern sent to every endpoint."""
    everyone = frozenset(stores)
    plan = {(i, tp): everyone for i, tp in enumerate(triple_patterns(q))}
    return execute_plan(q, plan, stores)


def completeness(obtained: SolutionBag, expected: SolutionBag) -> float:
    """Share of expected answers obtained (bag intersection); 1.0 when nothing is expected."""
    if len(expected) == 0:
        return 1.0
    return obtained.intersection_size(expected) / len(expected)


def staleness(obtained: SolutionBag, expected: SolutionBag) -> float:
    """Share of obtained answers that are not expected (bag difference); 0.0 when nothing obtained."""
    if len(obtained) == 0:
        return 0.0
    return obtained.difference_size(expected) / len(obtained)


def _run_one(qid: str, q: Query | None, error: str | None, catalog: FederationCatalog,
             logs: Mapping[str, UpdateLog], stores, dt: float, execute: bool) -> MetricsRow:
    row = MetricsRow(qid, dt)
    if error is not None:
        row.warnings.append(f"error: {error}")
        return row
    try:
        t0 = time.perf_counter()
        plan = select_sources(q, catalog, dt)
        row.sst_seconds = round(time.perf_counter() - t0, 3)
        row.nss, row.nsps = nss(plan), nsps(plan)
        row.warnings += plan.warnings
        if not execute:
            return row
        try:
            _require_bgp(q)
        except UnsupportedConstructError as exc:
            row.warnings.append(f"not executed: {exc}")
            return row
        t0 = time.perf_counter()
        obtained = execute_plan(q, plan, stores)
        row.etue_seconds = round(time.perf_counter() - t0, 3)
        expected = oracle_answer(q, catalog, logs)
        row.answers = len(obtained)
        row.completeness = completeness(obtained, expected)
        row.staleness = staleness(obtained, expected)
    except Exception as exc:  # recorded per row; the run goes on
        log.debug("query %s failed", qid, exc_info=True)
        row.warnings.append(f"error: {type(exc).__name__}: {exc}")
    return row


def run_experiment(catalog: FederationCatalog, logs: Mapping[str, UpdateLog],
                   queries: Sequence[tuple[str, Query | str]], dt: float | Sequence[float] = UNBOUNDED,
                   *, execute: bool = True, workers: int = 1) -> list[MetricsRow]:
    """Select, execute and score every query for every age limit in ``dt``.

    Rows come back grouped by query, in input order, one per age limit.
    """
    dts = [dt] if isinstance(dt, (int, float)) else list(dt)
    parsed: list[tuple[str, Query | None, str | None]] = []
    for qid, q in queries:
        if isinstance(q, str):
            try:
                q = parse_query(q)
            except Exception as exc:
                parsed.append((qid, None, str(exc)))
                continue
        parsed.append((qid, q, None))
    stores = build_stores(catalog, logs) if execute and parsed else {}
    jobs = [(qid, q, err, d) for qid, q, err in parsed for d in dts]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda j: _run_one(j[0], j[1], j[2], catalog, logs, stores, j[3], execute), jobs))
    return [_run_one(qid, q, err, catalog, logs, stores, d, execute) for qid, q, err, d in jobs]


def write_report(rows: Iterable[MetricsRow], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for row in rows:
        writer.writerow(row.as_record())


def report_csv(rows: Iterable[MetricsRow]) -> str:
    buf = io.StringIO()
    write_report(rows, buf)
    return buf.getvalue()


def read_report(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def load_logs(directory: str | Path) -> dict[str, UpdateLog]:
    """Read ``<dataset>.log`` files; the file stem is the dataset id."""
    out = {}
    for path in sorted(Path(directory).glob("*.log")):
        out[path.stem] = parse_log(path.read_text(encoding="utf-8"), path.stem)
    return out


def load_queries(directory: str | Path) -> list[tuple[str, str]]:
    """Read ``*.rq`` / ``*.sparql`` files sorted by name; the stem is the query id."""
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix in (".rq", ".sparql"))
    return [(p.stem, p.read_text(encoding="utf-8")) for p in paths]


def parse_dt(text: str) -> float:
    if text.strip().lower() in ("inf", "unbounded", "infinity"):
        return UNBOUNDED
    value = int(text)
    if value < 0:
        raise ValueError("dt must be >= 0")
    return value


def is_unbounded(dt: float) -> bool:
    return isinstance(dt, float) and math.isinf(dt)
