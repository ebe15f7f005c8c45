import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fedra.containment import (
    MAX_BODY,
    ContainmentError,
    bgp_contains,
    canonical,
    compatible,
    contains_for_pattern,
    contribution,
    has_homomorphism,
    maximal_patterns,
    subsumes,
    unify,
    view_equivalent,
)
from fedra.rdf import Graph, Triple, TriplePattern, construct, iri, var
from fedra.sparql import ViewDefinition, parse_view


def P(*terms):
    return TriplePattern(*(var(t[1:]) if t.startswith("?") else iri(t) for t in terms))


V1 = parse_view("CONSTRUCT WHERE { ?x p1 ?y . ?y ?p ?z }")
V2 = parse_view("CONSTRUCT WHERE { ?x p1 ?y . ?y p2 ?z }")
V3 = parse_view("CONSTRUCT WHERE { o2 p4 ?x }")
V4 = parse_view("CONSTRUCT WHERE { ?x p4 o3 }")
K1 = P("?s", "p1", "?o")
K2 = P("?o", "p4", "?r")


def test_compatible_examples():
    assert compatible(K2, P("o2", "p4", "?x"))
    assert not compatible(K2, P("?x", "p1", "?y"))
    assert not compatible(P("?x", "p", "?x"), P("a", "p", "b"))
    assert compatible(P("?x", "p", "?x"), P("a", "p", "?y"))


def test_compatible_treats_sides_independently():
    # same variable name on both sides does not link them
    assert compatible(P("?x", "p", "a"), P("b", "p", "?x"))


def test_unify_examples():
    assert unify(K2, P("o2", "p4", "?x")).pattern == P("o2", "p4", "?v1")
    assert unify(K2, P("?x", "p4", "o3")).pattern == P("?v0", "p4", "o3")
    assert unify(P("?s", "?p", "?o"), P("a", "b", "c")).pattern == P("a", "b", "c")
    assert unify(K1, P("?x", "p4", "?y")) is None


def test_unify_propagates_repeated_variables():
    # ?x ?p ?x against a p ?y forces ?y = a
    assert unify(P("?x", "?p", "?x"), P("a", "p", "?y")).pattern == P("a", "p", "a")
    assert unify(P("?s", "p", "?o"), P("?z", "p", "?z")).pattern == P("?v0", "p", "?v0")


def test_subsumes_examples():
    assert subsumes(K2, P("o2", "p4", "?x"))
    assert not subsumes(P("o2", "p4", "?x"), P("?x", "p4", "o3"))
    assert not subsumes(P("?x", "p4", "o3"), P("o2", "p4", "?x"))
    assert subsumes(V1.body[1], V1.body[1])
    assert not subsumes(P("?x", "p", "?x"), P("a", "p", "b"))
    assert subsumes(P("?x", "p", "?y"), P("?z", "p", "?z"))


def test_bgp_contains_examples():
    assert bgp_contains(V1, V2)
    assert not bgp_contains(V2, V1)
    assert not bgp_contains(V3, V4) and not bgp_contains(V4, V3)
    for v in (V1, V2, V3, V4):
        assert bgp_contains(v, v)


def test_view_equivalence():
    renamed = parse_view("CONSTRUCT WHERE { ?a p1 ?b . ?b ?q ?c }")
    assert view_equivalent(V1, V1)
    assert view_equivalent(V1, renamed)
    assert not view_equivalent(V1, V2)


def test_plain_homomorphism_is_not_enough_for_construct_views():
    outer = parse_view("CONSTRUCT WHERE { ?x p ?y . ?x q ?z }")
    inner = parse_view("CONSTRUCT WHERE { a p b . a q c . d p e }")
    assert has_homomorphism(outer, inner)
    # "d p e" needs a q-edge out of d, which inner does not guarantee
    assert not bgp_contains(outer, inner)
    assert not _oracle(outer, inner)


def test_contribution_examples():
    assert {c.pattern for c in contribution(V1, K1)} == {P("?v0", "p1", "?v1")}
    assert {c.canonical for c in contribution(V3, K2)} == {P("o2", "p4", "?v0")}
    assert contribution(V3, K1) == frozenset()


def test_contribution_keeps_only_maximal_patterns():
    v = parse_view("CONSTRUCT WHERE { ?x p1 o1 . ?y p1 ?z }")
    assert {c.canonical for c in contribution(v, K1)} == {P("?v0", "p1", "?v1")}
    assert maximal_patterns([P("?a", "p", "b"), P("?c", "p", "?d"), P("?e", "p", "?e")]) == {P("?v0", "p", "?v1")}


def test_canonical_renaming():
    assert canonical(P("?z", "p", "?a")) == canonical(P("?q", "p", "?r")) == P("?v0", "p", "?v1")
    assert canonical(P("?z", "p", "?z")) == P("?v0", "p", "?v0")


def test_body_size_guard():
    big = ViewDefinition(tuple(P(f"?x{i}", "p", f"?x{i + 1}") for i in range(MAX_BODY + 1)))
    with pytest.raises(ContainmentError):
        bgp_contains(big, V1)


def test_contains_for_pattern_examples():
    # the k1 part of V2 sits inside the k1 part of V1
    assert contains_for_pattern(V1, V2, K1)
    assert not contains_for_pattern(V2, V1, K1)
    # restricted to p3 triples a plain p3 fragment covers a join view,
    # although the whole views are incomparable
    cover = parse_view("CONSTRUCT WHERE { ?a p3 ?b }")
    joined = parse_view("CONSTRUCT WHERE { ?a p1 ?b . ?b p3 ?c }")
    k = P("?s", "p3", "?o")
    assert contains_for_pattern(cover, joined, k)
    assert not bgp_contains(cover, joined)
    # irrelevant inner views are trivially contained
    assert contains_for_pattern(V3, V2, K2)


def test_contains_for_pattern_uses_constants_of_k():
    outer = parse_view("CONSTRUCT WHERE { a p ?y }")
    inner = parse_view("CONSTRUCT WHERE { ?x p ?y }")
    assert contains_for_pattern(outer, inner, P("a", "p", "?o"))
    assert not contains_for_pattern(outer, inner, P("?s", "p", "?o"))


# --- oracles ---------------------------------------------------------------

def _frozen(tp):
    return Triple(*(iri("frz-" + t.lexical) if t.is_var else t for t in tp.terms))


def _oracle(outer, inner):
    """Freeze inner, run outer's CONSTRUCT on it, check inner's triples come back."""
    g = Graph(_frozen(tp) for tp in inner.body)
    return set(g) <= set(construct(g, outer.body))


terms = st.sampled_from(["?x", "?y", "?z", "c1", "c2"])
preds = st.sampled_from(["p1", "p2", "?p"])
patterns = st.builds(lambda s, p, o: P(s, p, o), terms, preds, terms)
views = st.lists(patterns, min_size=1, max_size=3, unique=True).map(lambda b: ViewDefinition(tuple(b)))
consts = st.sampled_from(["c1", "c2", "c3"])
graphs = st.frozensets(st.builds(lambda s, p, o: Triple(iri(s), iri(p), iri(o)), consts,
                                 st.sampled_from(["p1", "p2"]), consts), max_size=12).map(Graph)


@settings(max_examples=150, deadline=None)
@given(views, views)
def test_bgp_contains_agrees_with_canonical_instance(a, b):
    assert bgp_contains(a, b) == _oracle(a, b)


@settings(max_examples=150, deadline=None)
@given(views, views, graphs)
def test_containment_is_sound_on_instances(a, b, g):
    if bgp_contains(a, b):
        assert construct(g, b.body) <= construct(g, a.body)


def _matching(graph, k):
    return {t for t in graph if subsumes(k, TriplePattern(*t.terms))}


@settings(max_examples=150, deadline=None)
@given(views, views, patterns, graphs)
def test_pattern_restricted_containment_is_sound(a, b, k, g):
    if contains_for_pattern(a, b, k):
        assert _matching(construct(g, b.body), k) <= _matching(construct(g, a.body), k)


@settings(max_examples=150, deadline=None)
@given(views, views)
def test_whole_view_containment_implies_restricted(a, b):
    if bgp_contains(a, b):
        for k in (P("?s", "?p", "?o"), P("?s", "p1", "?o"), P("c1", "?p", "?o")):
            assert contains_for_pattern(a, b, k)


@settings(max_examples=100, deadline=None)
@given(views)
def test_universal_pattern_matches_whole_view(v):
    u = P("?s", "?p", "?o")
    assert contains_for_pattern(v, v, u)


@settings(max_examples=300, deadline=None)
@given(views, views, views)
def test_containment_is_transitive(a, b, c):
    if bgp_contains(a, b) and bgp_contains(b, c):
        assert bgp_contains(a, c)


@settings(max_examples=100, deadline=None)
@given(views, st.sampled_from(["c1", "c2", "p2"]))
def test_specialising_a_view_makes_it_contained(v, c):
    names = {t for tp in v.body for t in tp.terms if t.is_var}
    assume(names)
    target = sorted(names, key=str)[0]
    narrower = ViewDefinition(tuple(TriplePattern(*(iri(c) if t == target else t for t in tp.terms)) for tp in v.body))
    assert bgp_contains(v, narrower)


@settings(max_examples=200, deadline=None)
@given(patterns, patterns)
def test_pattern_relation_properties(t1, t2):
    assert compatible(t1, t2) == compatible(t2, t1)
    assert subsumes(t1, t1)
    if subsumes(t1, t2):
        assert compatible(t1, t2)
    u = unify(t1, t2)
    assert (u is not None) == compatible(t1, t2)
    if u is not None:
        assert subsumes(t1, u.pattern)
        assert subsumes(t2, u.pattern)


@settings(max_examples=200, deadline=None)
@given(patterns, patterns, patterns)
def test_subsumption_is_transitive(a, b, c):
    if subsumes(a, b) and subsumes(b, c):
        assert subsumes(a, c)


@settings(max_examples=150, deadline=None)
@given(views, patterns)
def test_contribution_is_pairwise_non_subsuming(v, k):
    pats = [c.pattern for c in contribution(v, k)]
    for p in pats:
        assert subsumes(k, p)
        assert not any(q != p and subsumes(q, p) for q in pats)
