import copy
import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedra.catalog import (
    UNBOUNDED,
    CatalogError,
    age,
    catalog_from_dict,
    catalog_to_dict,
    load_catalog,
    preselect,
    replica_family,
    serialize_catalog,
)
from fedra.rdf import TriplePattern, iri, var


def P(*terms):
    return TriplePattern(*(var(t[1:]) if t.startswith("?") else iri(t) for t in terms))


FEDERATION = Path(__file__).resolve().parents[1] / "data" / "worked_example" / "federation.json"
K1 = P("?s", "p1", "?o")
K2 = P("?o", "p4", "?r")


@pytest.fixture
def doc(worked_dir):
    return json.loads((worked_dir / "federation.json").read_text())


@pytest.fixture
def cat(doc):
    return catalog_from_dict(doc)


def _hosts(cands):
    return sorted(c.endpoint for c in cands)


def test_worked_example_loads(cat):
    assert cat.now == 2
    assert cat.public == {"E1", "E2"}
    assert {o.dataset_id: o.endpoint for o in cat.origins.values()} == {"D": "E1", "F": "E2"}
    ages = {(r.fragment_id, r.host): age(r, cat.now) for r in cat.replicas}
    assert ages == {("D1", "E3"): 1, ("D2", "E4"): 2, ("D3", "E5"): 0, ("F1", "E5"): 0, ("F2", "E6"): 1}


def test_origins_are_fresh_universal_fragments(cat):
    unis = cat.universal_fragments()
    assert [(u.fragment_id, u.host) for u in unis] == [("origin:D", "E1"), ("origin:F", "E2")]
    assert all(age(u, cat.now) == 0 for u in unis)


def test_age_examples(cat):
    rep = next(r for r in cat.replicas if r.fragment_id == "D3")
    assert age(rep, rep.sync_time) == 0
    with pytest.raises(ValueError):
        age(rep, rep.sync_time - 1)


def test_preselect_examples(cat):
    assert _hosts(preselect(cat, K2, 1)) == ["E2", "E5", "E6"]
    assert _hosts(preselect(cat, K1, 1)) == ["E1", "E3", "E5"]
    assert _hosts(preselect(cat, K1, UNBOUNDED)) == ["E1", "E3", "E4", "E5"]


def test_preselect_zero_tolerance_keeps_fresh_fragments(cat):
    assert {c.fragment_id for c in preselect(cat, K1, 0)} == {"origin:D", "D3"}
    stale = cat.with_now(5)
    assert _hosts(preselect(stale, K1, 0)) == ["E1"]
    assert _hosts(preselect(stale, K2, 0)) == ["E2"]


def test_candidates_carry_contributions_and_ages(cat):
    by_frag = {c.fragment_id: c for c in preselect(cat, K2, UNBOUNDED)}
    assert {c.canonical for c in by_frag["F1"].contributions} == {P("o2", "p4", "?v0")}
    assert {c.canonical for c in by_frag["F2"].contributions} == {P("?v0", "p4", "o3")}
    assert by_frag["F2"].age == 1
    assert by_frag["origin:F"].universal and not by_frag["F1"].universal


def test_predicate_vocabulary_limits_origins(cat):
    # D declares no p4 triples, so neither its origin nor its replicas serve k2
    assert "origin:D" not in {c.fragment_id for c in preselect(cat, K2)}
    assert "D1" not in {c.fragment_id for c in preselect(cat, K2)}
    assert "origin:D" in {c.fragment_id for c in preselect(cat, P("?s", "?p", "?o"))}


def test_preselect_rejects_negative_threshold(cat):
    with pytest.raises(ValueError):
        preselect(cat, K1, -1)


def test_replica_family(cat):
    assert replica_family(cat, "D", K1) == {P("?v0", "p1", "?v1")}
    assert replica_family(cat, "F", K2) == {P("o2", "p4", "?v0"), P("?v0", "p4", "o3")}


def test_minimal_catalog():
    cat = load_catalog('{"now": 0, "endpoints": [{"id": "E", "public": true}],'
                       ' "origins": [{"dataset": "D", "endpoint": "E"}]}')
    assert cat.replicas == ()
    assert _hosts(preselect(cat, K1, 0)) == ["E"]


def test_round_trip(cat):
    again = load_catalog(serialize_catalog(cat))
    assert catalog_to_dict(again) == catalog_to_dict(cat)
    assert again == cat


def _errors(doc):
    with pytest.raises(CatalogError) as info:
        catalog_from_dict(doc)
    return info.value.errors


def test_dangling_source_endpoint(doc):
    doc["replicas"][0]["source_endpoint"] = "E9"
    errs = _errors(doc)
    assert any("dangling reference" in e and "E9" in e for e in errs)


def test_all_violations_reported_together(doc):
    bad = copy.deepcopy(doc)
    bad["endpoints"].append({"id": "E1", "public": False})
    bad["replicas"][1]["host"] = "nowhere"
    bad["replicas"][2]["view"] = "CONSTRUCT WHERE { ?x p1 }"
    bad["replicas"][3]["sync_time"] = 7
    del bad["replicas"][4]["fragment"]
    bad["extra"] = 1
    errs = _errors(bad)
    assert len(errs) == 6
    assert any("duplicate endpoint id" in e for e in errs)
    assert any("host 'nowhere'" in e for e in errs)
    assert any("view parse error" in e for e in errs)
    assert any("later than now" in e for e in errs)
    assert any("missing field 'fragment'" in e for e in errs)
    assert any("unknown top-level key" in e for e in errs)


@pytest.mark.parametrize("mutate, needle", [
    (lambda d: d["origins"].append({"dataset": "D", "endpoint": "E3"}), "already has an origin"),
    (lambda d: d["replicas"][0].update(source_endpoint="E2"), "not the origin"),
    (lambda d: d["replicas"][0].update(dataset="Z"), "has no origin"),
    (lambda d: d["replicas"].append(dict(d["replicas"][0])), "listed twice"),
    (lambda d: d["replicas"].append(dict(d["replicas"][0], host="E6", view="CONSTRUCT WHERE { ?a p2 ?b }")),
     "redefined"),
    (lambda d: d["replicas"][0].update(fragment="origin:X"), "may not start"),
    (lambda d: d.update(now=-1), "non-negative"),
    (lambda d: d["endpoints"][0].update(public="yes"), "boolean"),
])
def test_schema_errors(doc, mutate, needle):
    mutate(doc)
    assert any(needle in e for e in _errors(doc))


def test_invalid_json():
    with pytest.raises(CatalogError, match="invalid JSON"):
        load_catalog("{not json")


def test_with_now_rejects_earlier_time(cat):
    with pytest.raises(CatalogError):
        cat.with_now(1)
    assert cat.with_now(4).now == 4


pattern_terms = st.sampled_from(["?a", "?b", "p1", "p2", "p4", "o2", "o3"])
ks = st.builds(lambda s, p, o: P(s, p, o), pattern_terms, pattern_terms, pattern_terms)


@settings(max_examples=80, deadline=None)
@given(ks, st.integers(0, 3), st.integers(0, 3))
def test_preselect_is_monotone_in_threshold(k, d1, d2):
    cat = load_catalog(FEDERATION.read_text())
    lo, hi = sorted((d1, d2))
    small, big = preselect(cat, k, lo), preselect(cat, k, hi)
    assert set(small) <= set(big)
    for c in big:
        assert c.age <= hi and c.contributions


@settings(max_examples=50, deadline=None)
@given(ks)
def test_origins_without_vocabulary_serve_every_pattern(k):
    cat = load_catalog('{"now": 3, "endpoints": [{"id": "E", "public": true}, {"id": "R", "public": false}],'
                       ' "origins": [{"dataset": "D", "endpoint": "E"}],'
                       ' "replicas": [{"fragment": "F", "dataset": "D", "source_endpoint": "E", "host": "R",'
                       ' "view": "CONSTRUCT WHERE { ?x p1 ?y }", "sync_time": 1}]}')
    assert "E" in _hosts(preselect(cat, k, 0))
