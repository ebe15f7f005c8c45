"""Parser and printer for the SPARQL subset used by queries and fragment views.

Supported: PREFIX declarations, ``SELECT [DISTINCT] (vars | *) WHERE``,
``CONSTRUCT WHERE { triples }``, basic graph patterns, OPTIONAL, UNION,
SERVICE, nested groups and FILTER (kept as opaque text).  Bare tokens are
IRIs in the ``urn:fedra:`` namespace.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence, Union

from fedra.rdf import BARE_NS, IRI, LITERAL, Term, TriplePattern, var

__all__ = [
    "SPARQLSyntaxError",
    "UnsupportedConstructError",
    "TriplesBlock",
    "OptionalPattern",
    "UnionPattern",
    "ServicePattern",
    "Filter",
    "GroupPattern",
    "PatternBlock",
    "Query",
    "ViewDefinition",
    "parse_query",
    "parse_view",
    "triple_patterns",
    "format_query",
    "format_view",
    "render_service_query",
]

DEFAULT_PREFIXES = {
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
    "owl": "http://www.w3.org/2002/07/owl#",
    "foaf": "http://xmlns.com/foaf/0.1/",
    "dbo": "http://dbpedia.org/ontology/",
    "dbpedia": "http://dbpedia.org/ontology/",
    "dbr": "http://dbpedia.org/resource/",
}

_UNSUPPORTED_KEYWORDS = {
    "ASK", "DESCRIBE", "BIND", "VALUES", "GRAPH", "MINUS", "ORDER", "LIMIT",
    "OFFSET", "GROUP", "HAVING", "FROM", "BASE", "REDUCED", "EXISTS", "NOT",
}
_KEYWORDS = {"SELECT", "DISTINCT", "WHERE", "CONSTRUCT", "OPTIONAL", "UNION",
             "FILTER", "PREFIX", "SERVICE"}


class SPARQLSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


class UnsupportedConstructError(SPARQLSyntaxError):
    """Valid SPARQL that falls outside the supported subset."""


# --- syntax tree -----------------------------------------------------------

@dataclass(frozen=True)
class TriplesBlock:
    patterns: tuple[TriplePattern, ...]


@dataclass(frozen=True)
class OptionalPattern:
    group: "GroupPattern"


@dataclass(frozen=True)
class UnionPattern:
    branches: tuple["GroupPattern", ...]


@dataclass(frozen=True)
class ServicePattern:
    endpoint: str
    group: "GroupPattern"


@dataclass(frozen=True)
class Filter:
    text: str


Element = Union[TriplesBlock, OptionalPattern, UnionPattern, ServicePattern, Filter, "GroupPattern"]


@dataclass(frozen=True)
class GroupPattern:
    elements: tuple


@dataclass(frozen=True)
class PatternBlock:
    kind: str  # basic | optional | union-branch
    patterns: tuple[TriplePattern, ...]


@dataclass(frozen=True)
class Query:
    form: str  # select | construct
    distinct: bool
    projection: tuple[str, ...] | None  # None means '*'
    where: GroupPattern
    prefixes: tuple[tuple[str, str], ...] = ()

    @property
    def filters(self) -> list[str]:
        out: list[str] = []

        def walk(el):
            if isinstance(el, Filter):
                out.append(el.text)
            for child in _children(el):
                walk(child)

        walk(self.where)
        return out

    @property
    def blocks(self) -> list[PatternBlock]:
        out: list[PatternBlock] = []

        def walk(el, kind):
            if isinstance(el, TriplesBlock):
                out.append(PatternBlock(kind, el.patterns))
            elif isinstance(el, OptionalPattern):
                walk(el.group, "optional")
            elif isinstance(el, UnionPattern):
                for b in el.branches:
                    walk(b, "union-branch")
            elif isinstance(el, (GroupPattern, ServicePattern)):
                for child in _children(el):
                    walk(child, kind)

        walk(self.where, "basic")
        return out

    def is_bgp(self) -> bool:
        """True when the WHERE clause is a plain basic graph pattern."""
        return all(isinstance(el, TriplesBlock) for el in self.where.elements)

    def variables(self) -> list[str]:
        seen: list[str] = []
        for tp in triple_patterns(self):
            seen += [v for v in tp.variables() if v not in seen]
        return seen

    def output_variables(self) -> list[str]:
        return list(self.projection) if self.projection is not None else self.variables()


@dataclass(frozen=True)
class ViewDefinition:
    """A ``CONSTRUCT WHERE`` fragment description; head and body coincide."""

    body: tuple[TriplePattern, ...]
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.body:
            raise ValueError("view body must be non-empty")
        object.__setattr__(self, "_hash", hash(self.body))

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return format_view(self)


def _children(el) -> tuple:
    if isinstance(el, GroupPattern):
        return el.elements
    if isinstance(el, (OptionalPattern, ServicePattern)):
        return (el.group,)
    if isinstance(el, UnionPattern):
        return el.branches
    return ()


def _patterns_in(el) -> Iterator[TriplePattern]:
    if isinstance(el, TriplesBlock):
        yield from el.patterns
    for child in _children(el):
        yield from _patterns_in(child)


def triple_patterns(q: Query) -> list[TriplePattern]:
    """All triple patterns in source order, duplicates kept."""
    return list(_patterns_in(q.where))


# --- scanner ---------------------------------------------------------------

_TOKEN_SPEC = [
    ("ws", r"\s+"),
    ("comment", r"\#[^\n]*"),
    ("iri", r"<[^<>\"{}|^`\\\s]*>"),
    ("string", r'"(?:[^"\\\n]|\\.)*"|\'(?:[^\'\\\n]|\\.)*\''),
    ("var", r"[?$][A-Za-z0-9_]+"),
    ("pname", r"[A-Za-z][A-Za-z0-9_\-]*:[A-Za-z0-9_\-]*(?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?"),
    ("pname_empty", r":[A-Za-z0-9_\-]+"),
    ("word", r"[A-Za-z0-9_][A-Za-z0-9_\-]*"),
    ("punct", r"[{}().*;,]"),
    ("other", r"\S"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{rx})" for name, rx in _TOKEN_SPEC))


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper()


@dataclass
class _Scanner:
    text: str
    pos: int = 0
    prefixes: dict = field(default_factory=lambda: dict(DEFAULT_PREFIXES))
    _peeked: _Tok | None = None

    def _linecol(self, pos: int) -> tuple[int, int]:
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, msg: str, pos: int | None = None, cls=SPARQLSyntaxError):
        line, col = self._linecol(self.pos if pos is None else pos)
        return cls(msg, line, col)

    def _scan(self) -> _Tok:
        while True:
            if self.pos >= len(self.text):
                return _Tok("eof", "", self.pos)
            m = _TOKEN_RE.match(self.text, self.pos)
            assert m is not None
            kind = m.lastgroup
            start = self.pos
            self.pos = m.end()
            if kind in ("ws", "comment"):
                continue
            return _Tok(kind, m.group(), start)

    def peek(self) -> _Tok:
        if self._peeked is None:
            self._peeked = self._scan()
        return self._peeked

    def next(self) -> _Tok:
        tok = self.peek()
        self._peeked = None
        return tok

    def at_keyword(self, kw: str) -> bool:
        tok = self.peek()
        return tok.kind == "word" and tok.upper == kw

    def expect_keyword(self, kw: str) -> _Tok:
        tok = self.next()
        if not (tok.kind == "word" and tok.upper == kw):
            raise self.error(f"expected {kw}, found {tok.text or 'end of input'!r}", tok.pos)
        return tok

    def expect_punct(self, ch: str) -> _Tok:
        tok = self.next()
        if tok.text != ch or tok.kind != "punct":
            raise self.error(f"expected {ch!r}, found {tok.text or 'end of input'!r}", tok.pos)
        return tok

    def balanced_text(self) -> str:
        """Raw text of a FILTER constraint: ``( ... )`` or ``name( ... )``."""
        assert self._peeked is None or self._peeked.pos >= 0
        if self._peeked is not None:
            self.pos = self._peeked.pos
            self._peeked = None
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        start = self.pos
        m = re.compile(r"[A-Za-z_][A-Za-z0-9_:]*").match(self.text, self.pos)
        if m:
            self.pos = m.end()
            while self.pos < len(self.text) and self.text[self.pos].isspace():
                self.pos += 1
        if self.pos >= len(self.text) or self.text[self.pos] != "(":
            raise self.error("expected '(' after FILTER")
        depth = 0
        i = self.pos
        while i < len(self.text):
            ch = self.text[i]
            if ch in "\"'":
                j = i + 1
                while j < len(self.text) and self.text[j] != ch:
                    j += 2 if self.text[j] == "\\" else 1
                i = j + 1
                continue
            if ch == "<":
                m2 = re.compile(r"<[^<>\"{}|^`\\\s]*>").match(self.text, i)
                if m2:
                    i = m2.end()
                    continue
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    self.pos = i + 1
                    return " ".join(self.text[start:self.pos].split())
            i += 1
        raise self.error("unbalanced parentheses in FILTER", start)


# --- parser ----------------------------------------------------------------

def _term(sc: _Scanner, tok: _Tok) -> Term:
    if tok.kind == "var":
        return var(tok.text[1:])
    if tok.kind == "iri":
        if len(tok.text) <= 2:
            raise sc.error("empty IRI", tok.pos)
        return Term(IRI, tok.text[1:-1])
    if tok.kind == "string":
        body = re.sub(r"\\(.)", r"\1", tok.text[1:-1])
        if not body:
            raise sc.error("empty literals are not supported", tok.pos, UnsupportedConstructError)
        nxt = sc.peek()
        if nxt.kind == "other" and nxt.text in "@^" and nxt.pos == tok.pos + len(tok.text):
            raise sc.error("language tags and datatypes are not supported", nxt.pos, UnsupportedConstructError)
        return Term(LITERAL, body)
    if tok.kind in ("pname", "pname_empty"):
        prefix, _, local = tok.text.partition(":")
        if prefix not in sc.prefixes:
            raise sc.error(f"undeclared prefix {prefix + ':'!r}", tok.pos)
        return Term(IRI, sc.prefixes[prefix] + local)
    if tok.kind == "word":
        if tok.upper in _KEYWORDS or tok.upper in _UNSUPPORTED_KEYWORDS:
            raise sc.error(f"expected a term, found keyword {tok.text!r}", tok.pos)
        return Term(IRI, BARE_NS + tok.text)
    if tok.kind == "other" and tok.text in "/|^+!":
        raise sc.error("property paths are not supported", tok.pos, UnsupportedConstructError)
    raise sc.error(f"expected a term, found {tok.text or 'end of input'!r}", tok.pos)


def _is_term_start(tok: _Tok) -> bool:
    if tok.kind in ("var", "iri", "string", "pname", "pname_empty"):
        return True
    return tok.kind == "word" and tok.upper not in _KEYWORDS and tok.upper not in _UNSUPPORTED_KEYWORDS


def _triples(sc: _Scanner) -> list[TriplePattern]:
    out = []
    while _is_term_start(sc.peek()):
        terms = []
        for _ in range(3):
            tok = sc.next()
            if tok.kind == "punct" and tok.text in ";,":
                raise sc.error("predicate/object lists are not supported", tok.pos, UnsupportedConstructError)
            terms.append(_term(sc, tok))
        nxt = sc.peek()
        if nxt.kind == "punct" and nxt.text in ";,":
            raise sc.error("predicate/object lists are not supported", nxt.pos, UnsupportedConstructError)
        if nxt.kind == "other" and nxt.text in "/|^+?":
            raise sc.error("property paths are not supported", nxt.pos, UnsupportedConstructError)
        out.append(TriplePattern(*terms))
        if nxt.kind == "punct" and nxt.text == ".":
            sc.next()
        else:
            break
    return out


def _group(sc: _Scanner) -> GroupPattern:
    open_tok = sc.expect_punct("{")
    elements: list = []
    while True:
        tok = sc.peek()
        if tok.kind == "eof":
            raise sc.error("unterminated group pattern", open_tok.pos)
        if tok.kind == "punct" and tok.text == "}":
            sc.next()
            break
        if _is_term_start(tok):
            elements.append(TriplesBlock(tuple(_triples(sc))))
            continue
        if tok.kind == "word":
            kw = tok.upper
            if kw == "OPTIONAL":
                sc.next()
                elements.append(OptionalPattern(_group(sc)))
            elif kw == "FILTER":
                sc.next()
                elements.append(Filter(sc.balanced_text()))
            elif kw == "SERVICE":
                sc.next()
                if sc.at_keyword("SILENT"):
                    raise sc.error("SERVICE SILENT is not supported", cls=UnsupportedConstructError)
                iri_tok = sc.next()
                if iri_tok.kind != "iri":
                    raise sc.error("SERVICE requires an IRI", iri_tok.pos)
                elements.append(ServicePattern(iri_tok.text[1:-1], _group(sc)))
            elif kw == "SELECT":
                raise sc.error("subqueries are not supported", tok.pos, UnsupportedConstructError)
            elif kw in _UNSUPPORTED_KEYWORDS:
                raise sc.error(f"{kw} is not supported", tok.pos, UnsupportedConstructError)
            else:
                raise sc.error(f"unexpected {tok.text!r}", tok.pos)
            _skip_dot(sc)
            continue
        if tok.kind == "punct" and tok.text == "{":
            branches = [_group(sc)]
            while sc.at_keyword("UNION"):
                sc.next()
                branches.append(_group(sc))
            elements.append(UnionPattern(tuple(branches)) if len(branches) > 1 else branches[0])
            _skip_dot(sc)
            continue
        raise sc.error(f"unexpected {tok.text!r}", tok.pos)
    group = GroupPattern(tuple(elements))
    if not any(True for _ in _patterns_in(group)):
        raise sc.error("empty group pattern", open_tok.pos)
    return group


def _skip_dot(sc: _Scanner) -> None:
    tok = sc.peek()
    if tok.kind == "punct" and tok.text == ".":
        sc.next()


def _prologue(sc: _Scanner) -> list[tuple[str, str]]:
    declared = []
    while sc.at_keyword("PREFIX"):
        sc.next()
        name = sc.next()
        if name.kind == "pname" and name.text.endswith(":"):
            prefix = name.text[:-1]
        elif name.kind == "other" and name.text == ":":
            prefix = ""
        else:
            raise sc.error("expected a prefix name like 'ex:'", name.pos)
        iri_tok = sc.next()
        if iri_tok.kind != "iri":
            raise sc.error("expected <iri> in PREFIX declaration", iri_tok.pos)
        sc.prefixes[prefix] = iri_tok.text[1:-1]
        declared.append((prefix, iri_tok.text[1:-1]))
    return declared


def _expect_eof(sc: _Scanner) -> None:
    tok = sc.peek()
    if tok.kind != "eof":
        if tok.kind == "word" and tok.upper in _UNSUPPORTED_KEYWORDS:
            raise sc.error(f"{tok.upper} is not supported", tok.pos, UnsupportedConstructError)
        raise sc.error(f"unexpected trailing input {tok.text!r}", tok.pos)


def _construct_body(sc: _Scanner) -> tuple[TriplePattern, ...]:
    sc.expect_keyword("CONSTRUCT")
    tok = sc.peek()
    if not (tok.kind == "word" and tok.upper == "WHERE"):
        raise sc.error("only the short form CONSTRUCT WHERE { ... } is supported", tok.pos,
                       UnsupportedConstructError)
    sc.next()
    open_tok = sc.expect_punct("{")
    body = _triples(sc)
    close = sc.next()
    if close.text != "}":
        if close.kind == "word" and close.upper in ("OPTIONAL", "FILTER", "UNION", "SERVICE"):
            raise sc.error("view bodies must be basic graph patterns", close.pos, UnsupportedConstructError)
        raise sc.error(f"expected '}}', found {close.text or 'end of input'!r}", close.pos)
    if not body:
        raise sc.error("empty view body", open_tok.pos)
    return tuple(body)


def parse_query(text: str) -> Query:
    """Parse a SELECT query (or a CONSTRUCT WHERE view) into a :class:`Query`."""
    sc = _Scanner(text)
    prefixes = _prologue(sc)
    tok = sc.peek()
    if tok.kind == "word" and tok.upper == "CONSTRUCT":
        body = _construct_body(sc)
        _expect_eof(sc)
        return Query("construct", False, None, GroupPattern((TriplesBlock(body),)), tuple(prefixes))
    if not (tok.kind == "word" and tok.upper == "SELECT"):
        if tok.kind == "word" and tok.upper in _UNSUPPORTED_KEYWORDS:
            raise sc.error(f"{tok.upper} queries are not supported", tok.pos, UnsupportedConstructError)
        raise sc.error("expected SELECT or CONSTRUCT", tok.pos)
    sc.next()
    distinct = False
    if sc.at_keyword("DISTINCT"):
        sc.next()
        distinct = True
    elif sc.at_keyword("REDUCED"):
        raise sc.error("REDUCED is not supported", cls=UnsupportedConstructError)
    projection: list[str] | None = []
    if sc.peek().text == "*":
        sc.next()
        projection = None
    else:
        while sc.peek().kind == "var":
            projection.append(sc.next().text[1:])
        if sc.peek().text == "(":
            raise sc.error("projection expressions are not supported", cls=UnsupportedConstructError)
        if not projection:
            raise sc.error("expected projected variables or '*'", sc.peek().pos)
    if sc.at_keyword("FROM"):
        raise sc.error("FROM clauses are not supported", cls=UnsupportedConstructError)
    sc.expect_keyword("WHERE")
    where = _group(sc)
    _expect_eof(sc)
    q = Query("select", distinct, tuple(projection) if projection is not None else None, where, tuple(prefixes))
    if projection:
        known = set(q.variables())
        missing = [v for v in projection if v not in known]
        if missing:
            raise SPARQLSyntaxError(f"projected variables never appear in WHERE: {missing}")
        if len(set(projection)) != len(projection):
            raise SPARQLSyntaxError("duplicate projected variable")
    return q


def parse_view(text: str) -> ViewDefinition:
    """Parse ``CONSTRUCT WHERE { triples }`` into a :class:`ViewDefinition`."""
    sc = _Scanner(text)
    _prologue(sc)
    tok = sc.peek()
    if tok.kind == "word" and tok.upper == "SELECT":
        raise sc.error("a view must be a CONSTRUCT WHERE query, not SELECT", tok.pos)
    if not (tok.kind == "word" and tok.upper == "CONSTRUCT"):
        raise sc.error("expected CONSTRUCT WHERE", tok.pos)
    body = _construct_body(sc)
    _expect_eof(sc)
    return ViewDefinition(body)


# --- printing --------------------------------------------------------------

PatternHook = Callable[[int, TriplePattern, str], list[str]]


def _plain_pattern(index: int, tp: TriplePattern, indent: str) -> list[str]:
    return [f"{indent}{tp} ."]


def _emit_group(group: GroupPattern, indent: str, hook: PatternHook, counter: list[int]) -> list[str]:
    lines: list[str] = []
    inner = indent + "  "
    for el in group.elements:
        if isinstance(el, TriplesBlock):
            for tp in el.patterns:
                lines += hook(counter[0], tp, inner)
                counter[0] += 1
        elif isinstance(el, OptionalPattern):
            lines.append(f"{inner}OPTIONAL {{")
            lines += _emit_group(el.group, inner, hook, counter)
            lines.append(f"{inner}}}")
        elif isinstance(el, UnionPattern):
            for i, branch in enumerate(el.branches):
                lines.append(f"{inner}{'UNION ' if i else ''}{{")
                lines += _emit_group(branch, inner, hook, counter)
                lines.append(f"{inner}}}")
        elif isinstance(el, ServicePattern):
            lines.append(f"{inner}SERVICE <{el.endpoint}> {{")
            lines += _emit_group(el.group, inner, hook, counter)
            lines.append(f"{inner}}}")
        elif isinstance(el, Filter):
            lines.append(f"{inner}FILTER {el.text}")
        elif isinstance(el, GroupPattern):
            lines.append(f"{inner}{{")
            lines += _emit_group(el, inner, hook, counter)
            lines.append(f"{inner}}}")
    return lines


def _emit_query(q: Query, hook: PatternHook) -> str:
    lines = [f"PREFIX {p}: <{iri_}>" for p, iri_ in q.prefixes]
    if q.form == "construct":
        lines.append("CONSTRUCT WHERE {")
    else:
        head = "SELECT " + ("DISTINCT " if q.distinct else "")
        head += "*" if q.projection is None else " ".join("?" + v for v in q.projection)
        lines.append(head)
        lines.append("WHERE {")
    lines += _emit_group(q.where, "", hook, [0])
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_query(q: Query) -> str:
    """Pretty-print a query; ``parse_query(format_query(q)) == q``."""
    return _emit_query(q, _plain_pattern)


def format_view(view: ViewDefinition) -> str:
    return "CONSTRUCT WHERE { " + " . ".join(str(tp) for tp in view.body) + " }"


def render_service_query(q: Query, plan, urls: Mapping[str, str | None] | None = None) -> str:
    """Annotate every triple pattern with SERVICE clauses for its endpoints.

    ``plan`` needs ``assignments`` keyed by ``(index, pattern)`` and, unless
    ``urls`` is given, an ``endpoint_urls`` mapping.  Several endpoints for
    one pattern become a UNION of SERVICE blocks; a pattern with no
    endpoint is left unwrapped after a warning comment.
    """
    urls = dict(plan.endpoint_urls if urls is None else urls)
    assignments = plan.assignments
    patterns = triple_patterns(q)
    for i, tp in enumerate(patterns):
        if (i, tp) not in assignments:
            raise ValueError(f"plan has no entry for pattern {i}: {tp}")
    for eps in assignments.values():
        for e in eps:
            if not urls.get(e):
                raise ValueError(f"endpoint {e!r} has no URL")

    def hook(index: int, tp: TriplePattern, indent: str) -> list[str]:
        eps = sorted(assignments[(index, tp)])
        if not eps:
            return [f"{indent}# WARNING: no endpoint selected for pattern {index}", f"{indent}{tp} ."]
        if len(eps) == 1:
            return [f"{indent}SERVICE <{urls[eps[0]]}> {{ {tp} . }}"]
        out = []
        for j, e in enumerate(eps):
            out.append(f"{indent}{'UNION ' if j else ''}{{ SERVICE <{urls[e]}> {{ {tp} . }} }}")
        return out

    return _emit_query(q, hook)
