"""Triples, graphs, timestamped update logs and bag-semantics BGP matching.

Everything here is immutable once built. Bare tokens such as ``s1`` or
``p1`` are IRIs in the reserved ``urn:fedra:`` namespace so that small
hand-written examples stay readable.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

BARE_NS = "urn:fedra:"

IRI = "iri"
LITERAL = "literal"
VARIABLE = "variable"
_KIND_ORDER = {IRI: 0, LITERAL: 1, VARIABLE: 2}

_BARE_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_\-]*\Z")


class RDFSyntaxError(ValueError):
    """Malformed update-log line or term token."""


@dataclass(frozen=True, order=False)
class Term:
    kind: str
    lexical: str
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KIND_ORDER:
            raise ValueError(f"unknown term kind {self.kind!r}")
        if not self.lexical:
            raise ValueError("term lexical form must be non-empty")
        object.__setattr__(self, "_hash", hash((self.kind, self.lexical)))

    def __hash__(self) -> int:
        return self._hash

    @property
    def is_var(self) -> bool:
        return self.kind == VARIABLE

    def sort_key(self) -> tuple[int, str]:
        return (_KIND_ORDER[self.kind], self.lexical)

    def __lt__(self, other: "Term") -> bool:
        return self.sort_key() < other.sort_key()

    def n3(self) -> str:
        if self.kind == VARIABLE:
            return "?" + self.lexical
        if self.kind == LITERAL:
            return '"' + self.lexical.replace("\\", "\\\\").replace('"', '\\"') + '"'
        if self.lexical.startswith(BARE_NS):
            local = self.lexical[len(BARE_NS):]
            if _BARE_RE.match(local):
                return local
        return "<" + self.lexical + ">"

    def __str__(self) -> str:
        return self.n3()

    def __repr__(self) -> str:
        return f"Term({self.n3()})"


def iri(value: str) -> Term:
    """IRI term; a value without a scheme is placed in the bare namespace."""
    if ":" not in value:
        value = BARE_NS + value
    return Term(IRI, value)


def lit(value: str) -> Term:
    return Term(LITERAL, value)


def var(name: str) -> Term:
    return Term(VARIABLE, name.lstrip("?$"))


@dataclass(frozen=True)
class TriplePattern:
    """A triple whose positions may hold variables (predicate included)."""

    subject: Term
    predicate: Term
    object: Term
    _hash: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.subject, self.predicate, self.object)))

    def __hash__(self) -> int:
        return self._hash

    def __iter__(self) -> Iterator[Term]:
        return iter((self.subject, self.predicate, self.object))

    @property
    def terms(self) -> tuple[Term, Term, Term]:
        return (self.subject, self.predicate, self.object)

    def variables(self) -> list[str]:
        seen: list[str] = []
        for t in self.terms:
            if t.is_var and t.lexical not in seen:
                seen.append(t.lexical)
        return seen

    def is_ground(self) -> bool:
        return not any(t.is_var for t in self.terms)

    def substitute(self, mapping: Mapping[str, Term]) -> "TriplePattern":
        return TriplePattern(*(mapping.get(t.lexical, t) if t.is_var else t for t in self.terms))

    def sort_key(self):
        return tuple(t.sort_key() for t in self.terms)

    def __str__(self) -> str:
        return " ".join(t.n3() for t in self.terms)


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Term
    object: Term

    def __post_init__(self):
        for t in (self.subject, self.predicate, self.object):
            if t.is_var:
                raise ValueError(f"triples cannot contain variables: {t}")

    @property
    def terms(self) -> tuple[Term, Term, Term]:
        return (self.subject, self.predicate, self.object)

    def as_pattern(self) -> TriplePattern:
        return TriplePattern(self.subject, self.predicate, self.object)

    def sort_key(self):
        return tuple(t.sort_key() for t in self.terms)

    def __str__(self) -> str:
        return " ".join(t.n3() for t in self.terms) + " ."


class Graph:
    """Duplicate-free set of triples with a predicate index built on demand."""

    __slots__ = ("triples", "__dict__")

    def __init__(self, triples: Iterable[Triple] = ()):
        self.triples: frozenset[Triple] = frozenset(triples)

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    def __contains__(self, triple: object) -> bool:
        return triple in self.triples

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Graph):
            return self.triples == other.triples
        if isinstance(other, (set, frozenset)):
            return self.triples == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.triples)

    def __le__(self, other: "Graph") -> bool:
        return self.triples <= other.triples

    def __or__(self, other: "Graph") -> "Graph":
        return Graph(self.triples | other.triples)

    def __repr__(self) -> str:
        body = " ".join(str(t) for t in sorted(self.triples, key=Triple.sort_key))
        return f"Graph({{{body}}})"

    @cached_property
    def _by_predicate(self) -> dict[Term, list[Triple]]:
        index: dict[Term, list[Triple]] = {}
        for t in self.triples:
            index.setdefault(t.predicate, []).append(t)
        return index

    def candidates(self, pattern: TriplePattern) -> Iterable[Triple]:
        if pattern.predicate.is_var:
            return self.triples
        return self._by_predicate.get(pattern.predicate, ())

    @property
    def predicates(self) -> set[Term]:
        return set(self._by_predicate)


def union_graphs(graphs: Iterable[Graph]) -> Graph:
    out: set[Triple] = set()
    for g in graphs:
        out.update(g.triples)
    return Graph(out)


# --- update logs -----------------------------------------------------------

INSERT = "insert"
DELETE = "delete"


@dataclass(frozen=True)
class UpdateOp:
    time: int
    kind: str
    triple: Triple

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("update time must be >= 0")
        if self.kind not in (INSERT, DELETE):
            raise ValueError(f"unknown update kind {self.kind!r}")


@dataclass(frozen=True)
class UpdateLog:
    dataset_id: str
    ops: tuple[UpdateOp, ...] = ()

    def __post_init__(self):
        # stable sort keeps file order among equal times
        object.__setattr__(self, "ops", tuple(sorted(self.ops, key=lambda op: op.time)))

    @property
    def epochs(self) -> list[int]:
        return sorted({op.time for op in self.ops})

    @property
    def last_time(self) -> int:
        return self.ops[-1].time if self.ops else 0

    def predicates(self) -> set[Term]:
        return {op.triple.predicate for op in self.ops}


def graph_at_time(log: UpdateLog, t: int) -> Graph:
    """State of the dataset after replaying every op with ``time <= t``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    state: set[Triple] = set()
    for op in log.ops:
        if op.time > t:
            break
        if op.kind == INSERT:
            state.add(op.triple)
        else:
            state.discard(op.triple)
    return Graph(state)


_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<iri><[^<>"\s]*>)
      | (?P<lit>"(?:[^"\\]|\\.)*")
      | (?P<bare>[A-Za-z0-9_][A-Za-z0-9_\-:]*)
      | (?P<dot>\.)
    )""",
    re.VERBOSE,
)


def parse_term(token: str) -> Term:
    """Parse one ground term token: ``<iri>``, ``"literal"`` or a bare token."""
    if token.startswith("<") and token.endswith(">") and len(token) > 2:
        return Term(IRI, token[1:-1])
    if len(token) >= 2 and token.startswith('"') and token.endswith('"'):
        body = re.sub(r"\\(.)", r"\1", token[1:-1])
        if not body:
            raise RDFSyntaxError("empty literal")
        return Term(LITERAL, body)
    if _BARE_RE.match(token):
        return Term(IRI, BARE_NS + token)
    raise RDFSyntaxError(f"bad term token {token!r}")


def _tokens(line: str, lineno: int) -> list[str]:
    pos, out = 0, []
    line = line.rstrip()
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if not m or m.end() == pos:
            raise RDFSyntaxError(f"line {lineno}, column {pos + 1}: unexpected input {line[pos:pos + 20]!r}")
        out.append(m.group(m.lastgroup))
        pos = m.end()
        while pos < len(line) and line[pos].isspace():
            pos += 1
    return out


def parse_log(text: str, dataset_id: str) -> UpdateLog:
    """Parse the ``<time> <I|D> <s> <p> <o> .`` line format.

    Blank lines and ``#`` comment lines are skipped.
    """
    ops = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = _tokens(line, lineno)
        if len(toks) != 6 or toks[5] != ".":
            raise RDFSyntaxError(f"line {lineno}: expected '<time> <I|D> s p o .', got {line!r}")
        time_tok, kind_tok = toks[0], toks[1]
        if not time_tok.isdigit():
            raise RDFSyntaxError(f"line {lineno}: bad time {time_tok!r}")
        if kind_tok not in ("I", "D"):
            raise RDFSyntaxError(f"line {lineno}: op type must be I or D, got {kind_tok!r}")
        s, p, o = (parse_term(tok) for tok in toks[2:5])
        ops.append(UpdateOp(int(time_tok), INSERT if kind_tok == "I" else DELETE, Triple(s, p, o)))
    return UpdateLog(dataset_id, tuple(ops))


def format_log(log: UpdateLog) -> str:
    lines = []
    for op in log.ops:
        t = op.triple
        flag = "I" if op.kind == INSERT else "D"
        lines.append(f"{op.time} {flag} {t.subject.n3()} {t.predicate.n3()} {t.object.n3()} .")
    return "\n".join(lines) + ("\n" if lines else "")


# --- solutions -------------------------------------------------------------

Binding = dict  # variable name -> ground Term


@dataclass(frozen=True)
class SolutionBag:
    """Multiset of bindings over a fixed, ordered variable list.

    Rows are tuples aligned with ``variables``; ``rows`` maps each row to
    its multiplicity.  Equality is bag equality and ignores column order.
    """

    variables: tuple[str, ...]
    rows: Counter = field(default_factory=Counter)

    @classmethod
    def from_bindings(cls, variables: Sequence[str], bindings: Iterable[Mapping[str, Term]]) -> "SolutionBag":
        variables = tuple(variables)
        rows: Counter = Counter()
        for b in bindings:
            if set(b) != set(variables):
                raise ValueError(f"binding {dict(b)} does not bind exactly {variables}")
            row = tuple(b[v] for v in variables)
            if any(t.is_var for t in row):
                raise ValueError("bound values must be ground terms")
            rows[row] += 1
        return cls(variables, rows)

    @classmethod
    def unit(cls) -> "SolutionBag":
        """The join identity: one empty row."""
        return cls((), Counter({(): 1}))

    @classmethod
    def empty(cls, variables: Sequence[str] = ()) -> "SolutionBag":
        return cls(tuple(variables), Counter())

    def __len__(self) -> int:
        return sum(self.rows.values())

    def __iter__(self) -> Iterator[dict[str, Term]]:
        for row, n in sorted(self.rows.items(), key=lambda kv: [t.sort_key() for t in kv[0]]):
            for _ in range(n):
                yield dict(zip(self.variables, row))

    def _aligned(self, variables: Sequence[str]) -> Counter:
        idx = [self.variables.index(v) for v in variables]
        out: Counter = Counter()
        for row, n in self.rows.items():
            out[tuple(row[i] for i in idx)] += n
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SolutionBag):
            return NotImplemented
        if set(self.variables) != set(other.variables):
            return False
        return +self.rows == +other._aligned(self.variables)

    __hash__ = None  # type: ignore[assignment]

    def project(self, variables: Sequence[str]) -> "SolutionBag":
        missing = [v for v in variables if v not in self.variables]
        if missing:
            raise ValueError(f"cannot project unbound variables {missing}")
        return SolutionBag(tuple(variables), self._aligned(variables))

    def distinct(self) -> "SolutionBag":
        return SolutionBag(self.variables, Counter({row: 1 for row, n in self.rows.items() if n > 0}))

    def intersection_size(self, other: "SolutionBag") -> int:
        """Size of the min-multiplicity bag intersection."""
        if set(self.variables) != set(other.variables):
            return 0
        return sum((self.rows & other._aligned(self.variables)).values())

    def difference_size(self, other: "SolutionBag") -> int:
        """Size of ``self`` minus every occurrence in ``other`` (bag difference)."""
        if set(self.variables) != set(other.variables):
            return len(self)
        return sum((self.rows - other._aligned(self.variables)).values())

    def __repr__(self) -> str:
        return f"SolutionBag({self.variables}, {len(self)} rows)"


def match_pattern(graph: Graph, pattern: TriplePattern) -> SolutionBag:
    """One binding per triple of ``graph`` unifiable with ``pattern``."""
    variables = tuple(pattern.variables())
    rows: Counter = Counter()
    for triple in graph.candidates(pattern):
        binding: dict[str, Term] = {}
        ok = True
        for pt, tt in zip(pattern.terms, triple.terms):
            if pt.is_var:
                bound = binding.get(pt.lexical)
                if bound is None:
                    binding[pt.lexical] = tt
                elif bound != tt:
                    ok = False
                    break
            elif pt != tt:
                ok = False
                break
        if ok:
            rows[tuple(binding[v] for v in variables)] += 1
    return SolutionBag(variables, rows)


def join_solutions(left: SolutionBag, right: SolutionBag) -> SolutionBag:
    """Natural bag join on shared variables (multiplicities multiply)."""
    shared = [v for v in left.variables if v in right.variables]
    out_vars = left.variables + tuple(v for v in right.variables if v not in left.variables)
    li = [left.variables.index(v) for v in shared]
    ri = [right.variables.index(v) for v in shared]
    r_extra = [i for i, v in enumerate(right.variables) if v not in left.variables]

    index: dict[tuple, list[tuple[tuple, int]]] = {}
    for row, n in right.rows.items():
        if n > 0:
            index.setdefault(tuple(row[i] for i in ri), []).append((row, n))
    rows: Counter = Counter()
    for lrow, ln in left.rows.items():
        if ln <= 0:
            continue
        for rrow, rn in index.get(tuple(lrow[i] for i in li), ()):
            rows[lrow + tuple(rrow[i] for i in r_extra)] += ln * rn
    return SolutionBag(out_vars, rows)


def evaluate_bgp(graph: Graph, patterns: Sequence[TriplePattern]) -> SolutionBag:
    bag = SolutionBag.unit()
    for tp in patterns:
        bag = join_solutions(bag, match_pattern(graph, tp))
        if not bag.rows:
            break
    if not bag.rows:
        seen: list[str] = []
        for tp in patterns:
            seen += [v for v in tp.variables() if v not in seen]
        return SolutionBag.empty(seen)
    return bag


def construct(graph: Graph, body: Sequence[TriplePattern]) -> Graph:
    """Instantiate ``body`` for every BGP match and union the results."""
    bag = evaluate_bgp(graph, body)
    out: set[Triple] = set()
    for binding in bag.rows:
        mapping = dict(zip(bag.variables, binding))
        for tp in body:
            inst = tp.substitute(mapping)
            out.add(Triple(*inst.terms))
    return Graph(out)
