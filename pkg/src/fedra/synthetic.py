"""Seeded generators for update logs, fragment views, federations and queries."""

from __future__ import annotations

import random
from typing import Mapping, Sequence

from fedra.catalog import Endpoint, FederationCatalog, OriginDeclaration, ReplicaDescriptor
from fedra.rdf import (
    DELETE,
    INSERT,
    Graph,
    Term,
    Triple,
    TriplePattern,
    UpdateLog,
    UpdateOp,
    graph_at_time,
    iri,
    var,
)
from fedra.sparql import Query, ViewDefinition, format_view, parse_query


def random_log(rng: random.Random, dataset_id: str, *, nodes: int = 12, predicates: Sequence[str] = ("p1", "p2", "p3"),
               inserts: int = 20, epochs: int = 3, delete_rate: float = 0.0) -> UpdateLog:
    """Random insert/delete history spread over ``epochs`` time units.

    Node names are shared across datasets (``n0``, ``n1``, ...) so that
    queries can join data coming from different origins.
    """
    ops: list[UpdateOp] = []
    live: list[Triple] = []
    for _ in range(inserts):
        t = rng.randrange(epochs)
        triple = Triple(iri(f"n{rng.randrange(nodes)}"), iri(rng.choice(list(predicates))), iri(f"n{rng.randrange(nodes)}"))
        ops.append(UpdateOp(t, INSERT, triple))
        live.append(triple)
        if live and rng.random() < delete_rate:
            victim = rng.choice(live)
            ops.append(UpdateOp(rng.randrange(t, epochs), DELETE, victim))
    return UpdateLog(dataset_id, tuple(ops))


def _connected_sample(rng: random.Random, graph: Graph, size: int) -> list[Triple]:
    triples = sorted(graph, key=Triple.sort_key)
    if not triples:
        return []
    picked = [rng.choice(triples)]
    while len(picked) < size:
        nodes = {t.subject for t in picked} | {t.object for t in picked}
        frontier = [t for t in triples if t not in picked and (t.subject in nodes or t.object in nodes)]
        if not frontier:
            break
        picked.append(rng.choice(frontier))
    return picked


def _generalise(rng: random.Random, triples: Sequence[Triple], constant_rate: float,
                predicate_var_rate: float = 0.0) -> list[TriplePattern]:
    names: dict[Term, Term] = {}
    keep = {}
    out = []
    for t in triples:
        terms = []
        for pos, term in enumerate(t.terms):
            if pos == 1:
                terms.append(var(f"p{len(out)}") if rng.random() < predicate_var_rate else term)
                continue
            if term not in keep:
                keep[term] = rng.random() < constant_rate
            if keep[term]:
                terms.append(term)
            else:
                terms.append(names.setdefault(term, var(f"x{len(names)}")))
        out.append(TriplePattern(*terms))
    return out


def random_view(rng: random.Random, graph: Graph, size: int, constant_rate: float = 0.0) -> ViewDefinition | None:
    """A connected view of up to ``size`` patterns shaped after ``graph``'s data."""
    sample = _connected_sample(rng, graph, size)
    if not sample:
        return None
    body = _generalise(rng, sample, constant_rate)
    # drop repeated patterns
    uniq = list(dict.fromkeys(body))
    return ViewDefinition(tuple(uniq))


def random_query(rng: random.Random, graph: Graph, patterns: int, *, constant_rate: float = 0.2,
                 predicate_var_rate: float = 0.0, distinct: bool | None = None) -> Query:
    """A connected SELECT query built from a random walk over ``graph``."""
    sample = _connected_sample(rng, graph, patterns)
    if not sample:
        raise ValueError("cannot build a query over an empty graph")
    body = _generalise(rng, sample, constant_rate, predicate_var_rate)
    if all(tp.is_ground() for tp in body):
        first = body[0]
        body[0] = TriplePattern(var("x0"), first.predicate, first.object)
    if distinct is None:
        distinct = rng.random() < 0.5
    text = "SELECT " + ("DISTINCT " if distinct else "") + "* WHERE {\n"
    text += "".join(f"  {tp} .\n" for tp in body) + "}\n"
    return parse_query(text)


def generate_federation(logs: Mapping[str, UpdateLog], endpoints: int, fragments: int, seed: int | str = 0, *,
                        min_copies: int = 0, max_copies: int = 3, view_sizes: tuple[int, int] = (1, 6),
                        constant_rate: float = 0.0, fresh: bool = False, cover_predicates: bool = False,
                        now: int | None = None) -> FederationCatalog:
    """Random federation over ``logs``: one public origin per dataset plus ``endpoints`` replica hosts.

    Fragment sizes cycle through ``view_sizes`` so each size gets the same
    share; each fragment is copied onto ``min_copies``..``max_copies``
    distinct hosts.  Views depend only on ``seed`` and ``fragments``, never
    on the number of hosts, so federations of different sizes built with
    one seed replicate the same fragments.  ``cover_predicates`` adds one
    single-pattern fragment per dataset predicate, which makes every
    dataset reconstructible from its replicas.
    """
    if endpoints < 1:
        raise ValueError("endpoints must be >= 1")
    if fragments < 0:
        raise ValueError("fragments must be >= 0")
    if not logs:
        raise ValueError("at least one base log is required")
    view_rng = random.Random(f"{seed}:views")
    place_rng = random.Random(f"{seed}:placement:{endpoints}")
    datasets = sorted(logs)
    if now is None:
        now = max(logs[ds].last_time for ds in datasets)
    current = {ds: graph_at_time(logs[ds], now) for ds in datasets}
    vocab = {ds: frozenset(logs[ds].predicates()) for ds in datasets}

    eps = {f"O-{ds}": Endpoint(f"O-{ds}", f"http://origin-{ds.lower()}.example.org/sparql", True) for ds in datasets}
    hosts = [f"R{i:03d}" for i in range(1, endpoints + 1)]
    eps.update({h: Endpoint(h, f"http://{h.lower()}.example.org/sparql", False) for h in hosts})
    origins = {ds: OriginDeclaration(ds, f"O-{ds}", vocab[ds]) for ds in datasets}

    specs: list[tuple[str, str, ViewDefinition]] = []
    lo, hi = view_sizes
    for j in range(fragments):
        ds = datasets[j % len(datasets)]
        size = lo + (j // len(datasets)) % (hi - lo + 1)
        view = random_view(view_rng, current[ds], size, constant_rate)
        if view is not None:
            specs.append((f"{ds}-f{j:04d}", ds, view))
    if cover_predicates:
        for ds in datasets:
            for n, p in enumerate(sorted(vocab[ds])):
                specs.append((f"{ds}-c{n:03d}", ds, ViewDefinition((TriplePattern(var("x"), p, var("y")),))))

    replicas = []
    for frag, ds, view in specs:
        copies = place_rng.randint(max(min_copies, 0 if not cover_predicates or "-f" in frag else 1),
                                   max(max_copies, min_copies))
        for host in sorted(place_rng.sample(hosts, min(copies, len(hosts)))):
            epochs = [t for t in logs[ds].epochs if t <= now] or [0]
            sync = now if fresh else place_rng.choice(epochs)
            replicas.append(ReplicaDescriptor(frag, ds, f"O-{ds}", view, sync, host))
    replicas.sort(key=lambda r: (r.host, r.fragment_id))
    return FederationCatalog(eps, origins, tuple(replicas), now)


def view_texts(catalog: FederationCatalog) -> list[str]:
    return sorted({format_view(r.view) for r in catalog.replicas})
