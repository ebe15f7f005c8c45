"""Federation catalogs: endpoints, origins, replicas and candidate pre-selection.

The catalog file is a JSON document::

    {"now": 2,
     "endpoints": [{"id": "E1", "url": "http://e1/sparql", "public": true}, ...],
     "origins":   [{"dataset": "D", "endpoint": "E1", "predicates": ["p1"]}, ...],
     "replicas":  [{"fragment": "D1", "dataset": "D", "source_endpoint": "E1",
                    "host": "E3", "view": "CONSTRUCT WHERE { ... }", "sync_time": 1}]}

``predicates`` is optional.  When present it lists the only predicates the
dataset may contain, and candidates offering other predicates are dropped.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

from fedra.containment import ContributionPattern, contribution
from fedra.rdf import Term, TriplePattern
from fedra.sparql import SPARQLSyntaxError, ViewDefinition, format_view, parse_view

UNBOUNDED = math.inf
UNIVERSAL_VIEW = parse_view("CONSTRUCT WHERE { ?s ?p ?o }")
UNIVERSAL_PREFIX = "origin:"

_TOP_KEYS = {"now", "endpoints", "origins", "replicas"}
_ENDPOINT_KEYS = {"id", "url", "public"}
_ORIGIN_KEYS = {"dataset", "endpoint", "predicates"}
_REPLICA_KEYS = {"fragment", "dataset", "source_endpoint", "host", "view", "sync_time"}


class CatalogError(ValueError):
    """Every violation found while loading a catalog."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) if self.errors else "invalid catalog")


@dataclass(frozen=True)
class Endpoint:
    id: str
    url: str | None = None
    public: bool = False


@dataclass(frozen=True)
class OriginDeclaration:
    dataset_id: str
    endpoint: str
    predicates: frozenset[Term] | None = None


@dataclass(frozen=True)
class ReplicaDescriptor:
    fragment_id: str
    source_dataset: str
    source_endpoint: str
    view: ViewDefinition
    sync_time: int
    host: str


@dataclass(frozen=True)
class Candidate:
    endpoint: str
    fragment_id: str
    source_dataset: str
    contributions: frozenset[ContributionPattern]
    age: int
    universal: bool = False
    view: ViewDefinition | None = None


@dataclass(frozen=True)
class FederationCatalog:
    endpoints: dict[str, Endpoint]
    origins: dict[str, OriginDeclaration]
    replicas: tuple[ReplicaDescriptor, ...]
    now: int
    # per-view contribution cache shared by copies of a catalog
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def public(self) -> frozenset[str]:
        return frozenset(e.id for e in self.endpoints.values() if e.public)

    @property
    def urls(self) -> dict[str, str | None]:
        return {e.id: e.url for e in self.endpoints.values()}

    def with_now(self, now: int) -> "FederationCatalog":
        """Same federation evaluated at another current time."""
        late = [r for r in self.replicas if r.sync_time > now]
        if late:
            raise CatalogError([f"now={now} precedes sync_time {r.sync_time} of replica "
                                f"{r.fragment_id}@{r.host}" for r in late])
        return replace(self, now=now, _cache=self._cache)

    def universal_fragments(self) -> list[ReplicaDescriptor]:
        """Origins as replicas of the whole dataset, always fresh."""
        return [
            ReplicaDescriptor(UNIVERSAL_PREFIX + o.dataset_id, o.dataset_id, o.endpoint,
                              UNIVERSAL_VIEW, self.now, o.endpoint)
            for o in sorted(self.origins.values(), key=lambda o: o.dataset_id)
        ]

    def fragments(self) -> list[ReplicaDescriptor]:
        return self.universal_fragments() + list(self.replicas)

    def contributions(self, view: ViewDefinition, dataset: str, k: TriplePattern) -> frozenset[ContributionPattern]:
        key = (view, dataset, k)
        hit = self._cache.get(key)
        if hit is None:
            hit = contribution(view, k)
            vocab = self.origins[dataset].predicates if dataset in self.origins else None
            if vocab is not None:
                hit = frozenset(c for c in hit if c.pattern.predicate.is_var or c.pattern.predicate in vocab)
            self._cache[key] = hit
        return hit


def is_universal(fragment_id: str) -> bool:
    return fragment_id.startswith(UNIVERSAL_PREFIX)


def age(replica: ReplicaDescriptor, now: int) -> int:
    """Elapsed epochs since the replica's last included update."""
    if is_universal(replica.fragment_id):
        return 0
    if now < replica.sync_time:
        raise ValueError(f"now={now} precedes sync_time={replica.sync_time}")
    return now - replica.sync_time


def preselect(catalog: FederationCatalog, k: TriplePattern, dt: float = UNBOUNDED) -> list[Candidate]:
    """Fragments relevant to ``k`` whose age is within ``dt``, origins included."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    out = []
    for rep in catalog.fragments():
        a = age(rep, catalog.now)
        if a > dt:
            continue
        contribs = catalog.contributions(rep.view, rep.source_dataset, k)
        if contribs:
            out.append(Candidate(rep.host, rep.fragment_id, rep.source_dataset, contribs, a,
                                 universal=is_universal(rep.fragment_id), view=rep.view))
    out.sort(key=lambda c: (c.endpoint, c.fragment_id))
    return out


# --- loading ---------------------------------------------------------------

def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def catalog_from_dict(doc) -> FederationCatalog:
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise CatalogError(["top level must be an object"])
    for key in sorted(set(doc) - _TOP_KEYS):
        errors.append(f"unknown top-level key {key!r}")
    for key in ("now", "endpoints", "origins"):
        if key not in doc:
            errors.append(f"missing top-level key {key!r}")
    now = doc.get("now", 0)
    if not _is_int(now) or now < 0:
        errors.append("'now' must be a non-negative integer")
        now = 0

    endpoints: dict[str, Endpoint] = {}
    for i, raw in enumerate(_as_list(doc.get("endpoints", []), "endpoints", errors)):
        where = f"endpoints[{i}]"
        if not _check_keys(raw, _ENDPOINT_KEYS, {"id", "public"}, where, errors):
            continue
        eid, url, public = raw["id"], raw.get("url"), raw["public"]
        if not isinstance(eid, str) or not eid:
            errors.append(f"{where}: 'id' must be a non-empty string")
            continue
        if url is not None and not isinstance(url, str):
            errors.append(f"{where}: 'url' must be a string")
            url = None
        if not isinstance(public, bool):
            errors.append(f"{where}: 'public' must be a boolean")
            public = bool(public)
        if eid in endpoints:
            errors.append(f"{where}: duplicate endpoint id {eid!r}")
            continue
        endpoints[eid] = Endpoint(eid, url, public)

    origins: dict[str, OriginDeclaration] = {}
    for i, raw in enumerate(_as_list(doc.get("origins", []), "origins", errors)):
        where = f"origins[{i}]"
        if not _check_keys(raw, _ORIGIN_KEYS, {"dataset", "endpoint"}, where, errors):
            continue
        ds, ep = raw["dataset"], raw["endpoint"]
        if not isinstance(ds, str) or not ds:
            errors.append(f"{where}: 'dataset' must be a non-empty string")
            continue
        if ep not in endpoints:
            errors.append(f"{where}: dangling reference: endpoint {ep!r} is not declared")
        if ds in origins:
            errors.append(f"{where}: dataset {ds!r} already has an origin endpoint")
            continue
        preds = None
        if "predicates" in raw:
            preds = _parse_predicates(raw["predicates"], where, errors)
        origins[ds] = OriginDeclaration(ds, ep, preds)

    replicas: list[ReplicaDescriptor] = []
    seen: dict[tuple[str, str], int] = {}
    fragment_defs: dict[str, tuple[str, ViewDefinition]] = {}
    for i, raw in enumerate(_as_list(doc.get("replicas", []), "replicas", errors)):
        where = f"replicas[{i}]"
        if not _check_keys(raw, _REPLICA_KEYS, _REPLICA_KEYS, where, errors):
            continue
        frag, ds, src, host, view_text, sync = (raw[k] for k in
                                                ("fragment", "dataset", "source_endpoint", "host", "view", "sync_time"))
        ok = True
        for name, value in (("fragment", frag), ("dataset", ds), ("source_endpoint", src), ("host", host)):
            if not isinstance(value, str) or not value:
                errors.append(f"{where}: {name!r} must be a non-empty string")
                ok = False
        if not ok:
            continue
        if is_universal(frag):
            errors.append(f"{where}: fragment ids may not start with {UNIVERSAL_PREFIX!r}")
        if src not in endpoints:
            errors.append(f"{where}: dangling reference: source_endpoint {src!r} is not declared")
        if host not in endpoints:
            errors.append(f"{where}: dangling reference: host {host!r} is not declared")
        if ds not in origins:
            errors.append(f"{where}: dangling reference: dataset {ds!r} has no origin")
        elif src in endpoints and origins[ds].endpoint != src:
            errors.append(f"{where}: source_endpoint {src!r} is not the origin of dataset {ds!r}")
        if not _is_int(sync) or sync < 0:
            errors.append(f"{where}: 'sync_time' must be a non-negative integer")
            continue
        if sync > now:
            errors.append(f"{where}: sync_time {sync} is later than now={now}")
        if not isinstance(view_text, str):
            errors.append(f"{where}: 'view' must be a string")
            continue
        try:
            view = parse_view(view_text)
        except SPARQLSyntaxError as exc:
            errors.append(f"{where}: view parse error: {exc}")
            continue
        if (frag, host) in seen:
            errors.append(f"{where}: fragment {frag!r} listed twice on host {host!r}")
            continue
        seen[(frag, host)] = i
        if frag in fragment_defs and fragment_defs[frag] != (ds, view):
            errors.append(f"{where}: fragment {frag!r} redefined with a different dataset or view")
            continue
        fragment_defs[frag] = (ds, view)
        replicas.append(ReplicaDescriptor(frag, ds, src, view, sync, host))

    if errors:
        raise CatalogError(errors)
    replicas.sort(key=lambda r: (r.host, r.fragment_id))
    return FederationCatalog(endpoints, origins, tuple(replicas), now)


def _as_list(value, name: str, errors: list[str]) -> list:
    if not isinstance(value, list):
        errors.append(f"{name!r} must be an array")
        return []
    return value


def _check_keys(raw, allowed: set, required: set, where: str, errors: list[str]) -> bool:
    if not isinstance(raw, dict):
        errors.append(f"{where}: must be an object")
        return False
    ok = True
    for key in sorted(set(raw) - allowed):
        errors.append(f"{where}: unknown key {key!r}")
    for key in sorted(required - set(raw)):
        errors.append(f"{where}: missing field {key!r}")
        ok = False
    return ok


def _parse_predicates(value, where: str, errors: list[str]) -> frozenset[Term] | None:
    from fedra.rdf import RDFSyntaxError, parse_term

    if not isinstance(value, list):
        errors.append(f"{where}: 'predicates' must be an array")
        return None
    out = set()
    for tok in value:
        try:
            out.add(parse_term(tok) if isinstance(tok, str) else None)
        except RDFSyntaxError as exc:
            errors.append(f"{where}: bad predicate {tok!r}: {exc}")
    if None in out:
        errors.append(f"{where}: predicates must be strings")
        out.discard(None)
    return frozenset(out)


def load_catalog(text: str) -> FederationCatalog:
    """Parse and validate a catalog document, reporting all violations at once."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError([f"invalid JSON: {exc}"]) from None
    return catalog_from_dict(doc)


def catalog_to_dict(catalog: FederationCatalog) -> dict:
    origins = []
    for o in sorted(catalog.origins.values(), key=lambda o: o.dataset_id):
        entry = {"dataset": o.dataset_id, "endpoint": o.endpoint}
        if o.predicates is not None:
            entry["predicates"] = sorted(p.n3() for p in o.predicates)
        origins.append(entry)
    endpoints = []
    for e in sorted(catalog.endpoints.values(), key=lambda e: e.id):
        entry = {"id": e.id}
        if e.url is not None:
            entry["url"] = e.url
        entry["public"] = e.public
        endpoints.append(entry)
    return {
        "now": catalog.now,
        "endpoints": endpoints,
        "origins": origins,
        "replicas": [
            {"fragment": r.fragment_id, "dataset": r.source_dataset, "source_endpoint": r.source_endpoint,
             "host": r.host, "view": format_view(r.view), "sync_time": r.sync_time}
            for r in catalog.replicas
        ],
    }


def serialize_catalog(catalog: FederationCatalog) -> str:
    return json.dumps(catalog_to_dict(catalog), indent=2) + "\n"


def replica_family(catalog: FederationCatalog, dataset: str, k: TriplePattern) -> frozenset:
    """Canonical contribution patterns for ``k`` from every replica of ``dataset``, any age."""
    out = set()
    for rep in catalog.replicas:
        if rep.source_dataset == dataset:
            out.update(c.canonical for c in catalog.contributions(rep.view, dataset, k))
    return frozenset(out)


def iter_datasets(catalog: FederationCatalog) -> Iterable[str]:
    return sorted(catalog.origins)
