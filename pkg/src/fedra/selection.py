"""Replication-aware source selection.

Per triple pattern: pre-select fresh-enough relevant fragments, group
endpoints offering the same fragment, prune groups whose data another group
already offers and steer away from public endpoints.  Across patterns: a
greedy set cover picks the endpoints, and each group then keeps one of them.
"""

from __future__ import annotations

import json
import logging
import math
import time
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from fedra.catalog import (
    UNBOUNDED,
    Candidate,
    FederationCatalog,
    preselect,
    replica_family,
)
from fedra.containment import bgp_contains, contains_for_pattern, subsumes
from fedra.rdf import TriplePattern
from fedra.sparql import Query, ViewDefinition, format_query, triple_patterns

log = logging.getLogger(__name__)

PatternKey = tuple[int, TriplePattern]


class CoverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CandidateGroup:
    """Endpoints offering the same contribution patterns of one dataset."""

    dataset: str
    contributions: frozenset[TriplePattern]  # canonical patterns
    members: frozenset[str]
    universal: bool = False
    contained: bool = False  # views strictly inside another member's view

    @property
    def key(self) -> tuple[str, frozenset[TriplePattern]]:
        return (self.dataset, self.contributions)

    def sort_key(self):
        return (sorted(self.members), self.dataset, sorted(p.sort_key() for p in self.contributions))

    def is_public_only(self, public: frozenset[str]) -> bool:
        return self.members <= public

    def covered_by(self, other: "CandidateGroup") -> bool:
        return all(any(subsumes(o, p) for o in other.contributions) for p in self.contributions)

    def describe(self) -> str:
        pats = ", ".join(str(p) for p in sorted(self.contributions, key=TriplePattern.sort_key))
        return f"{{{', '.join(sorted(self.members))}}}[{self.dataset}: {pats}]"


@dataclass(frozen=True)
class CoverInstance:
    universe: tuple[str, ...]
    subsets: dict[str, frozenset[str]]
    elements: dict[str, tuple[int, CandidateGroup]] = field(default_factory=dict)


@dataclass
class PatternTrace:
    candidates: list[Candidate] = field(default_factory=list)
    grouped: list[CandidateGroup] = field(default_factory=list)
    pruned: list[CandidateGroup] = field(default_factory=list)
    final: list[CandidateGroup] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass
class SelectionPlan:
    assignments: dict[PatternKey, frozenset[str]]
    diagnostics: dict[PatternKey, PatternTrace] = field(default_factory=dict)
    endpoint_urls: dict[str, str | None] = field(default_factory=dict)
    public: frozenset[str] = frozenset()
    cover_instance: CoverInstance | None = None
    cover: frozenset[str] = frozenset()
    sst_seconds: float = 0.0

    @property
    def warnings(self) -> list[str]:
        out = []
        for (i, tp), trace in sorted(self.diagnostics.items(), key=lambda kv: kv[0][0]):
            out += [f"pattern {i} ({tp}): {w}" for w in trace.warnings]
        return out

    @property
    def uncovered(self) -> list[PatternKey]:
        return [k for k, eps in sorted(self.assignments.items(), key=lambda kv: kv[0][0]) if not eps]

    def by_index(self) -> list[tuple[TriplePattern, frozenset[str]]]:
        return [(tp, eps) for (i, tp), eps in sorted(self.assignments.items(), key=lambda kv: kv[0][0])]


def _tiebreak(public: frozenset[str]):
    return lambda e: (e in public, e)


def group_equivalent(candidates: Iterable[Candidate], k: TriplePattern | None = None) -> list[CandidateGroup]:
    """Partition candidates by (dataset, contribution set up to renaming).

    Inside one partition, replicas whose view yields strictly fewer
    ``k``-matching triples than another replica's view (whole-view
    containment when ``k`` is None) move to a single ``contained`` group,
    which pruning always discards in favour of the partition's main group.
    """
    buckets: dict[tuple, list[Candidate]] = {}
    for c in candidates:
        key = (c.source_dataset, frozenset(p.canonical for p in c.contributions))
        buckets.setdefault(key, []).append(c)
    groups = []
    for (ds, contribs), members in buckets.items():
        views = sorted({c.view for c in members if not c.universal and c.view is not None},
                       key=lambda v: (len(v.body), str(v)))
        top, rest = _maximal_classes(views, k)
        kept = {v for cls in top for v in cls}
        main = [c for c in members if c.universal or c.view in kept]
        groups.append(CandidateGroup(ds, contribs, frozenset(c.endpoint for c in main),
                                     any(c.universal for c in main)))
        if rest:
            dominated = set(rest)
            eps = frozenset(c.endpoint for c in members if c.view in dominated)
            groups.append(CandidateGroup(ds, contribs, eps, False, contained=True))
    return sorted(groups, key=CandidateGroup.sort_key)


def clear_caches() -> None:
    """Forget memoised view comparisons (for cold-start timing)."""
    _contains.cache_clear()
    _constants.cache_clear()


def _maximal_classes(views: Sequence[ViewDefinition], k: TriplePattern | None
                     ) -> tuple[list[list[ViewDefinition]], list[ViewDefinition]]:
    """Split views into equivalence classes of maximal ones and the dominated rest.

    Each view is compared with the current maxima only; containment is
    transitive, so a view beaten once stays beaten.
    """
    top: list[list[ViewDefinition]] = []
    rest: list[ViewDefinition] = []
    for v in views:
        placed = False
        for cls in top:
            if _contains(cls[0], v, k):
                if _contains(v, cls[0], k):
                    cls.append(v)
                else:
                    rest.append(v)
                placed = True
                break
        if placed:
            continue
        beaten = [cls for cls in top if _contains(v, cls[0], k)]
        for cls in beaten:
            top.remove(cls)
            rest.extend(cls)
        top.append([v])
    return top, sorted(rest, key=lambda v: (len(v.body), str(v)))


@lru_cache(maxsize=1 << 14)
def _constants(view: ViewDefinition) -> frozenset:
    return frozenset(t for tp in view.body for t in tp.terms if not t.is_var)


def _may_contain(outer: ViewDefinition, inner: ViewDefinition, k: TriplePattern | None) -> bool:
    # necessary for a homomorphism outer -> (specialised) inner: outer's
    # constants occur in inner or k, and each outer pattern fits some inner one
    extra = frozenset(t for t in k.terms if not t.is_var) if k is not None else frozenset()
    if not _constants(outer) <= _constants(inner) | extra:
        return False
    return all(
        any(all(a.is_var or b.is_var or a == b for a, b in zip(o.terms, i.terms)) for i in inner.body)
        for o in outer.body
    )


@lru_cache(maxsize=1 << 16)
def _contains(outer: ViewDefinition, inner: ViewDefinition, k: TriplePattern | None) -> bool:
    if not _may_contain(outer, inner, k):
        return False
    if k is None:
        return bgp_contains(outer, inner)
    return contains_for_pattern(outer, inner, k)



def prune_contained(groups: Sequence[CandidateGroup], k: TriplePattern | None = None,
                    public: frozenset[str] = frozenset(), *, allow_public_dominators: bool = False
                    ) -> list[CandidateGroup]:
    """Delete groups whose patterns another group of the same dataset already subsumes.

    Only groups with a non-public member dominate unless
    ``allow_public_dominators``; that way public-only origins never crowd
    out replicas before the public-endpoint step; the exception is a
    partition's main group, which always removes the partition's
    ``contained`` group.  Under mutual subsumption a ``contained`` group
    loses, otherwise the smallest member id survives.
    """
    alive = sorted(groups, key=CandidateGroup.sort_key)
    for g in sorted(alive, key=lambda g: min(g.members), reverse=True):
        for h in alive:
            if h is g or h.dataset != g.dataset:
                continue
            # the main group of a bucket always beats the bucket's contained group
            same_bucket = g.contained and not h.contained and h.key == g.key
            if not same_bucket and not allow_public_dominators and h.is_public_only(public):
                continue
            if g.covered_by(h) and (g.contained or not h.contained or not h.covered_by(g)):
                alive = [x for x in alive if x is not g]
                break
    return alive


def drop_public(groups: Sequence[CandidateGroup], public: frozenset[str],
                family: Mapping[str, frozenset[TriplePattern]] | None = None,
                *, keep_public_members: bool = False, warnings: list[str] | None = None
                ) -> list[CandidateGroup]:
    """Steer selection away from public endpoints.

    Public members leave every group that has a non-public member.  A
    public-only group goes away when surviving non-public groups of its
    dataset subsume all its patterns, or, for an origin's whole-dataset
    group, when every pattern that any replica of the dataset offers for
    this triple pattern (``family``) is offered by a surviving non-public
    group.  The second case may lose origin-only triples and is reported
    in ``warnings``.
    """
    family = family or {}
    mixed: list[CandidateGroup] = []
    public_only: list[CandidateGroup] = []
    for g in groups:
        if g.is_public_only(public):
            public_only.append(g)
        elif keep_public_members:
            mixed.append(g)
        else:
            mixed.append(CandidateGroup(g.dataset, g.contributions, g.members - public, g.universal, g.contained))

    kept = []
    for g in public_only:
        peers = [h for h in mixed if h.dataset == g.dataset]
        if peers and all(any(subsumes(o, p) for h in peers for o in h.contributions) for p in g.contributions):
            continue
        fam = family.get(g.dataset, frozenset())
        if g.universal and peers and fam and all(
            any(subsumes(o, p) for h in peers for o in h.contributions) for p in fam
        ):
            if warnings is not None:
                warnings.append(
                    f"origin {', '.join(sorted(g.members))} of dataset {g.dataset} dropped in favour of its "
                    "replicas; answer may be incomplete relative to origin")
            continue
        kept.append(g)
    return sorted(mixed + kept, key=CandidateGroup.sort_key)


def build_cover_instance(per_pattern_groups: Mapping[int, Sequence[CandidateGroup]]) -> CoverInstance:
    """One universe element per (pattern, group); endpoints cover their groups."""
    universe: list[str] = []
    subsets: dict[str, set[str]] = {}
    elements: dict[str, tuple[int, CandidateGroup]] = {}
    for i in sorted(per_pattern_groups):
        for j, g in enumerate(sorted(per_pattern_groups[i], key=CandidateGroup.sort_key), start=1):
            el = f"k{i + 1}_{j}"
            universe.append(el)
            elements[el] = (i, g)
            for e in g.members:
                subsets.setdefault(e, set()).add(el)
    return CoverInstance(tuple(universe), {e: frozenset(s) for e, s in sorted(subsets.items())}, elements)


def greedy_set_cover(instance: CoverInstance, public: frozenset[str] = frozenset()) -> list[str]:
    """Greedy cover: most uncovered elements first, then non-public, then id."""
    uncovered = set(instance.universe)
    chosen: list[str] = []
    order = _tiebreak(public)
    remaining = dict(instance.subsets)
    while uncovered:
        best, gain = None, 0
        for e in sorted(remaining, key=order):
            n = len(remaining[e] & uncovered)
            if n > gain:
                best, gain = e, n
        if best is None:
            raise CoverError(f"elements {sorted(uncovered)} are not covered by any endpoint")
        chosen.append(best)
        uncovered -= remaining.pop(best)
    return chosen


SEARCH_BUDGET = 50_000


def finalize(plan_groups: Mapping[int, Sequence[CandidateGroup]], cover: Iterable[str],
             public: frozenset[str] = frozenset()) -> dict[int, frozenset[str]]:
    """Pick, per pattern, the fewest endpoints that reach every group.

    Among equally small choices: fewest public endpoints, then most
    endpoints from ``cover``, then smallest ids.  ``cover`` must reach every
    group; it bounds the search and is the fallback if the exact search runs
    out of budget.
    """
    cover = frozenset(cover)
    out: dict[int, frozenset[str]] = {}
    for i, groups in plan_groups.items():
        sets = [g.members for g in groups]
        for g in groups:
            if not g.members & cover:
                raise CoverError(f"group {g.describe()} of pattern {i} has no endpoint in the cover")
        out[i] = frozenset(_min_hitting_set(sets, public, cover))
    return out


def _min_hitting_set(sets: Sequence[frozenset[str]], public: frozenset[str], cover: frozenset[str]) -> list[str]:
    def rank(chosen) -> tuple:
        return (len(chosen), sum(e in public for e in chosen), sum(e not in cover for e in chosen), sorted(chosen))

    # greedy answer restricted to the cover: a valid starting bound
    left, start = list(sets), []
    while left:
        e = min(cover & frozenset().union(*left),
                key=lambda e: (-sum(e in s for s in left), e in public, e))
        start.append(e)
        left = [s for s in left if e not in s]
    best = [rank(start), start]
    nodes = 0

    def search(chosen: list[str], left: list[frozenset[str]]):
        nonlocal nodes
        nodes += 1
        if nodes > SEARCH_BUDGET:
            return
        if not left:
            r = rank(chosen)
            if r < best[0]:
                best[0], best[1] = r, list(chosen)
            return
        if len(chosen) + 1 > best[0][0]:
            return
        pivot = min(left, key=lambda s: (len(s), sorted(s)))
        for e in sorted(pivot, key=lambda e: (e in public, e not in cover, e)):
            chosen.append(e)
            search(chosen, [s for s in left if e not in s])
            chosen.pop()

    search([], [s for s in sets])
    return best[1]


def select_sources(q: Query, catalog: FederationCatalog, dt: float = UNBOUNDED, *,
                   keep_public_members: bool = False) -> SelectionPlan:
    """Compute the endpoint map for every triple pattern of ``q``.

    ``keep_public_members`` leaves public endpoints inside mixed groups,
    which only changes the cover instance that is built (useful to inspect
    the reduction); the final plan still prefers non-public endpoints.
    """
    start = time.perf_counter()
    public = catalog.public
    patterns = triple_patterns(q)
    traces: dict[int, PatternTrace] = {}
    plan_groups: dict[int, list[CandidateGroup]] = {}

    for i, k in enumerate(patterns):
        trace = PatternTrace()
        trace.candidates = preselect(catalog, k, dt)
        trace.grouped = group_equivalent(trace.candidates, k)
        trace.pruned = prune_contained(trace.grouped, k, public)
        family = {ds: replica_family(catalog, ds, k) for ds in {g.dataset for g in trace.pruned}}
        dropped = drop_public(trace.pruned, public, family, keep_public_members=keep_public_members,
                              warnings=trace.warnings)
        trace.final = prune_contained(dropped, k, public, allow_public_dominators=True)
        if not trace.final:
            trace.warnings.append("no fresh-enough relevant source; pattern left unassigned")
        traces[i] = trace
        plan_groups[i] = trace.final

    instance = build_cover_instance(plan_groups)
    cover = greedy_set_cover(instance, public)
    chosen = finalize(plan_groups, cover, public)
    elapsed = time.perf_counter() - start
    for i, k in enumerate(patterns):
        log.debug("pattern %d %s -> %s", i, k, sorted(chosen[i]))

    return SelectionPlan(
        assignments={(i, k): chosen[i] for i, k in enumerate(patterns)},
        diagnostics={(i, k): traces[i] for i, k in enumerate(patterns)},
        endpoint_urls=catalog.urls,
        public=public,
        cover_instance=instance,
        cover=frozenset(cover),
        sst_seconds=round(elapsed, 3),
    )


def nss(plan: SelectionPlan) -> int:
    return sum(len(eps) for eps in plan.assignments.values())


def nsps(plan: SelectionPlan, public: Iterable[str] | None = None) -> int:
    pub = plan.public if public is None else frozenset(public)
    return sum(len(eps & pub) for eps in plan.assignments.values())


def format_dt(dt: float) -> str | int:
    return "inf" if dt == UNBOUNDED or (isinstance(dt, float) and math.isinf(dt)) else int(dt)


def plan_to_dict(plan: SelectionPlan, q: Query, dt: float, now: int) -> dict:
    return {
        "query": format_query(q),
        "dt": format_dt(dt),
        "now": now,
        "assignments": [
            {"index": i, "pattern": str(tp), "endpoints": sorted(eps, key=_tiebreak(plan.public))}
            for (i, tp), eps in sorted(plan.assignments.items(), key=lambda kv: kv[0][0])
        ],
        "nss": nss(plan),
        "nsps": nsps(plan),
        "sst_seconds": plan.sst_seconds,
        "warnings": plan.warnings,
    }


def plan_to_json(plan: SelectionPlan, q: Query, dt: float, now: int) -> str:
    return json.dumps(plan_to_dict(plan, q, dt, now), indent=2) + "\n"
