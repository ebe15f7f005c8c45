import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedra.rdf import (
    DELETE,
    INSERT,
    Graph,
    RDFSyntaxError,
    SolutionBag,
    Term,
    Triple,
    TriplePattern,
    UpdateLog,
    UpdateOp,
    construct,
    evaluate_bgp,
    format_log,
    graph_at_time,
    iri,
    join_solutions,
    lit,
    match_pattern,
    parse_log,
    parse_term,
    var,
)


def T(s, p, o):
    return Triple(iri(s), iri(p), iri(o))


def P(*terms):
    return TriplePattern(*(var(t[1:]) if t.startswith("?") else iri(t) for t in terms))


def rows(bag):
    """Bag as a sorted list of {var: bare-name} dicts with multiplicity."""
    out = []
    for row, n in bag.rows.items():
        d = {v: t.n3() for v, t in zip(bag.variables, row)}
        out += [d] * n
    return sorted(out, key=lambda d: sorted(d.items()))


D_LOG = """\
0 I s1 p1 o1 .
0 I o1 p2 o2 .
0 I s2 p1 o3 .
0 I o3 p3 o4 .
1 I o1 p2 o7 .
2 I o3 p3 o8 .
"""


def test_term_equality_and_validation():
    assert iri("a") == Term("iri", "urn:fedra:a")
    assert iri("a") != lit("a")
    assert var("?x") == var("x")
    with pytest.raises(ValueError):
        Term("iri", "")
    with pytest.raises(ValueError):
        Term("blank", "b0")


def test_bare_tokens_print_bare():
    assert iri("s1").n3() == "s1"
    assert iri("http://example.org/a").n3() == "<http://example.org/a>"
    assert lit('say "hi"').n3() == '"say \\"hi\\""'
    assert str(P("?s", "p1", "?o")) == "?s p1 ?o"


def test_triple_rejects_variables():
    with pytest.raises(ValueError):
        Triple(var("x"), iri("p"), iri("o"))


def test_graph_has_set_semantics():
    g = Graph([T("a", "p", "b"), T("a", "p", "b")])
    assert len(g) == 1
    assert g == {T("a", "p", "b")}


def test_match_pattern_fig2_e1_contents():
    g = Graph([T("s1", "p1", "o1"), T("s2", "p1", "o3"), T("o1", "p2", "o2")])
    assert rows(match_pattern(g, P("?s", "p1", "?o"))) == [{"s": "s1", "o": "o1"}, {"s": "s2", "o": "o3"}]


def test_match_pattern_edge_cases():
    assert len(match_pattern(Graph(), P("?s", "?p", "?o"))) == 0
    assert rows(match_pattern(Graph([T("a", "p", "a"), T("a", "p", "b")]), P("?x", "p", "?x"))) == [{"x": "a"}]
    assert rows(match_pattern(Graph([T("a", "p", "b")]), P("?x", "p", "?y"))) == [{"x": "a", "y": "b"}]


def test_ground_pattern_matches_once():
    g = Graph([T("a", "p", "b")])
    bag = match_pattern(g, P("a", "p", "b"))
    assert bag.variables == () and len(bag) == 1
    assert len(match_pattern(g, P("a", "p", "c"))) == 0


def test_graph_at_time_fig2_log():
    log = parse_log(D_LOG, "D")
    at_t = {T("s1", "p1", "o1"), T("o1", "p2", "o2"), T("s2", "p1", "o3"), T("o3", "p3", "o4")}
    assert graph_at_time(log, 0) == at_t
    assert graph_at_time(log, 2) == at_t | {T("o1", "p2", "o7"), T("o3", "p3", "o8")}


def test_insert_then_delete_and_delete_of_absent():
    log = parse_log("0 I x p y .\n1 D x p y .\n1 D q p r .\n", "D")
    assert graph_at_time(log, 0) == {T("x", "p", "y")}
    assert len(graph_at_time(log, 1)) == 0


def test_log_sort_is_stable_on_ties():
    log = parse_log("1 I a p b .\n0 I c p d .\n1 D a p b .\n", "D")
    assert [(op.time, op.kind) for op in log.ops] == [(0, INSERT), (1, INSERT), (1, DELETE)]
    assert graph_at_time(log, 1) == {T("c", "p", "d")}
    assert log.epochs == [0, 1]


@pytest.mark.parametrize("line", [
    "x I a p b .",
    "-1 I a p b .",
    "0 X a p b .",
    "0 I a p .",
    "0 I ?a p b .",
    "0 I a p b",
])
def test_parse_log_errors_carry_line_numbers(line):
    with pytest.raises(RDFSyntaxError, match="line 2"):
        parse_log("0 I a p b .\n" + line + "\n", "D")


def test_parse_log_skips_comments_and_blank_lines():
    log = parse_log("# header\n\n0 I <http://x.org/a> p \"lit\" .\n", "D")
    assert log.ops[0].triple.object == lit("lit")


def test_parse_term_forms():
    assert parse_term("<http://a.org/x>") == Term("iri", "http://a.org/x")
    assert parse_term('"x y"') == lit("x y")
    assert parse_term("s1") == iri("s1")
    with pytest.raises(RDFSyntaxError):
        parse_term("<unterminated")


def test_join_examples():
    o1, o2, o3, o5 = iri("o1"), iri("o2"), iri("o3"), iri("o5")
    left = SolutionBag.from_bindings(("o",), [{"o": o1}])
    assert rows(join_solutions(left, SolutionBag.from_bindings(("o", "r"), [{"o": o1, "r": o3}]))) == [
        {"o": "o1", "r": "o3"}]
    assert len(join_solutions(left, SolutionBag.from_bindings(("o", "r"), [{"o": o2, "r": o5}]))) == 0
    a, b = iri("a"), iri("b")
    twice = SolutionBag.from_bindings(("o",), [{"o": a}, {"o": a}])
    out = join_solutions(twice, SolutionBag.from_bindings(("o", "r"), [{"o": a, "r": b}]))
    assert rows(out) == [{"o": "a", "r": "b"}] * 2


def test_bag_ops():
    a, b, c = iri("a"), iri("b"), iri("c")
    x = SolutionBag.from_bindings(("v",), [{"v": a}, {"v": c}])
    y = SolutionBag.from_bindings(("v",), [{"v": a}, {"v": b}])
    assert x.intersection_size(y) == 1
    assert x.difference_size(y) == 1
    dup = SolutionBag.from_bindings(("v", "w"), [{"v": a, "w": b}, {"v": a, "w": c}])
    assert len(dup.project(["v"])) == 2
    assert len(dup.project(["v"]).distinct()) == 1


def test_bag_equality_ignores_column_order():
    a, b = iri("a"), iri("b")
    assert SolutionBag.from_bindings(("x", "y"), [{"x": a, "y": b}]) == SolutionBag.from_bindings(
        ("y", "x"), [{"x": a, "y": b}])


def test_construct_instantiates_body():
    g = graph_at_time(parse_log(D_LOG, "D"), 0)
    v2 = [P("?x", "p1", "?y"), P("?y", "p2", "?z")]
    assert construct(g, v2) == {T("s1", "p1", "o1"), T("o1", "p2", "o2")}


names = st.sampled_from(["a", "b", "c", "d"])
preds = st.sampled_from(["p", "q"])
triples = st.builds(T, names, preds, names)
graphs = st.frozensets(triples, max_size=12).map(Graph)


@settings(max_examples=60, deadline=None)
@given(graphs)
def test_all_variable_pattern_returns_every_triple(g):
    assert len(match_pattern(g, P("?s", "?p", "?o"))) == len(g)


@settings(max_examples=60, deadline=None)
@given(graphs)
def test_bgp_order_does_not_matter(g):
    body = [P("?x", "p", "?y"), P("?y", "q", "?z"), P("?z", "?r", "?x")]
    ref = evaluate_bgp(g, body)
    assert evaluate_bgp(g, body[::-1]) == ref
    assert evaluate_bgp(g, [body[1], body[0], body[2]]) == ref


@settings(max_examples=60, deadline=None)
@given(graphs, graphs)
def test_join_is_commutative(g1, g2):
    a = match_pattern(g1, P("?x", "p", "?y"))
    b = match_pattern(g2, P("?y", "?r", "?z"))
    assert join_solutions(a, b) == join_solutions(b, a)


ops = st.lists(st.tuples(st.integers(0, 4), st.sampled_from([INSERT, DELETE]), triples), max_size=15)


@settings(max_examples=60, deadline=None)
@given(ops)
def test_log_format_round_trip(raw):
    log = UpdateLog("D", tuple(UpdateOp(t, k, tr) for t, k, tr in raw))
    again = parse_log(format_log(log), "D")
    assert again.ops == log.ops


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), triples), max_size=15), st.integers(0, 4), st.integers(0, 4))
def test_insert_only_logs_grow_monotonically(raw, t1, t2):
    log = UpdateLog("D", tuple(UpdateOp(t, INSERT, tr) for t, tr in raw))
    lo, hi = sorted((t1, t2))
    assert graph_at_time(log, lo) <= graph_at_time(log, hi)
