"""Triple-pattern unification/subsumption and containment between views."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from fedra.rdf import Term, TriplePattern, var
from fedra.sparql import ViewDefinition

MAX_BODY = 16


class ContainmentError(ValueError):
    pass


@dataclass(frozen=True)
class ContributionPattern:
    """Instance of a query triple pattern that a fragment can supply."""

    pattern: TriplePattern

    @property
    def canonical(self) -> TriplePattern:
        return canonical(self.pattern)

    def __str__(self) -> str:
        return str(self.pattern)


def canonical(tp: TriplePattern) -> TriplePattern:
    """Rename variables to v0, v1, ... in first-occurrence order."""
    names: dict[str, Term] = {}
    for t in tp.terms:
        if t.is_var and t.lexical not in names:
            names[t.lexical] = var(f"v{len(names)}")
    return tp.substitute(names)


class _Classes:
    """Union-find over tagged terms; a class may hold at most one constant."""

    def __init__(self):
        self.parent: dict = {}
        self.const: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return True
        ca, cb = self.const.get(ra), self.const.get(rb)
        if ca is not None and cb is not None and ca != cb:
            return False
        self.parent[rb] = ra
        if ca is None and cb is not None:
            self.const[ra] = cb
        return True


def _key(term: Term, side: int):
    return ("v", side, term.lexical) if term.is_var else ("c", term)


def _solve(t1: TriplePattern, t2: TriplePattern) -> _Classes | None:
    classes = _Classes()
    for a, b in zip(t1.terms, t2.terms):
        ka, kb = _key(a, 0), _key(b, 1)
        for k, t in ((ka, a), (kb, b)):
            if not t.is_var:
                root = classes.find(k)
                classes.const.setdefault(root, t)
        if not classes.union(ka, kb):
            return None
    return classes


def compatible(t1: TriplePattern, t2: TriplePattern) -> bool:
    """Whether some binding of both patterns' variables makes them equal."""
    return _solve(t1, t2) is not None


def unify(query_pattern: TriplePattern, view_pattern: TriplePattern) -> ContributionPattern | None:
    """Most general common instance of the two patterns, or ``None``.

    Fresh variables are named ``v<i>`` where ``i`` is the index of the first
    query variable of their class among the query pattern's distinct
    variables, so the result never reuses either input's names.
    """
    classes = _solve(query_pattern, view_pattern)
    if classes is None:
        return None
    order = list(dict.fromkeys(t for t in query_pattern.terms if t.is_var))
    names: dict = {}
    out = []
    for a in query_pattern.terms:
        root = classes.find(_key(a, 0))
        const = classes.const.get(root)
        if const is not None:
            out.append(const)
        else:
            out.append(names.setdefault(root, var(f"v{order.index(a)}")))
    return ContributionPattern(TriplePattern(*out))


def match_substitution(general: TriplePattern, specific: TriplePattern) -> dict[str, Term] | None:
    """Substitution over ``general``'s variables mapping it onto ``specific``."""
    sub: dict[str, Term] = {}
    for g, s in zip(general.terms, specific.terms):
        if g.is_var:
            if sub.setdefault(g.lexical, s) != s:
                return None
        elif g != s:
            return None
    return sub


def subsumes(general: TriplePattern, specific: TriplePattern) -> bool:
    return match_substitution(general, specific) is not None


def _fits(general: TriplePattern, target: TriplePattern) -> bool:
    return match_substitution(general, target) is not None


def _homomorphisms(outer: Sequence[TriplePattern], inner: Sequence[TriplePattern], fixed=None):
    """Yield mappings h with h(tp) in ``inner`` for every tp in ``outer``.

    ``fixed`` optionally pins one outer pattern index to one inner pattern.
    """
    cands = [[t for t in inner if _fits(tp, t)] for tp in outer]
    if fixed is not None:
        j, i = fixed
        cands[j] = [inner[i]] if _fits(outer[j], inner[i]) else []
    if any(not c for c in cands):
        return
    # most constrained first, then patterns sharing variables with those placed
    order: list[int] = []
    bound: set[str] = set()
    left = set(range(len(outer)))
    while left:
        nxt = min(left, key=lambda n: (len(cands[n]) > 1, -len(set(outer[n].variables()) & bound), len(cands[n]), n))
        order.append(nxt)
        left.remove(nxt)
        bound.update(outer[nxt].variables())

    def extend(pos: int, sub: dict[str, Term]):
        if pos == len(order):
            yield dict(sub)
            return
        tp = outer[order[pos]]
        for target in cands[order[pos]]:
            added = []
            ok = True
            for g, val in zip(tp.terms, target.terms):
                if g.is_var:
                    cur = sub.get(g.lexical)
                    if cur is None:
                        sub[g.lexical] = val
                        added.append(g.lexical)
                    elif cur != val:
                        ok = False
                        break
            if ok:
                yield from extend(pos + 1, sub)
            for name in added:
                del sub[name]

    yield from extend(0, {})


def _check_size(*views: ViewDefinition) -> None:
    for v in views:
        if len(v.body) > MAX_BODY:
            raise ContainmentError(f"view body has {len(v.body)} patterns; at most {MAX_BODY} supported")


def bgp_contains(outer: ViewDefinition, inner: ViewDefinition) -> bool:
    """True iff every triple the ``inner`` view can produce, ``outer`` can too.

    Inner variables are treated as frozen constants.  Each inner pattern must
    be the image of some outer pattern under a homomorphism of the whole
    outer body into the inner body; a homomorphism that merely exists is not
    enough because the view heads are their bodies.
    """
    _check_size(outer, inner)
    frozen_inner = [_freeze(tp) for tp in inner.body]
    outer_body = list(outer.body)
    for i in range(len(frozen_inner)):
        hit = False
        for j, tp in enumerate(outer_body):
            if not subsumes(tp, frozen_inner[i]):
                continue
            if next(_homomorphisms(outer_body, frozen_inner, fixed=(j, i)), None) is not None:
                hit = True
                break
        if not hit:
            return False
    return True


def contains_for_pattern(outer: ViewDefinition, inner: ViewDefinition, k: TriplePattern) -> bool:
    """True iff every ``k``-matching triple ``inner`` can produce, ``outer`` can too.

    For each inner pattern compatible with ``k``, the inner body is
    specialised by the most general unifier with ``k`` and frozen; ``outer``
    must then produce the specialised pattern on that canonical instance.
    """
    _check_size(outer, inner)
    outer_body = list(outer.body)
    frozen_cache: dict[tuple, list[TriplePattern]] = {}
    for tp in inner.body:
        classes = _solve(k, tp)
        if classes is None:
            continue
        sub: dict[str, Term] = {}
        reps: dict = {}
        for t in inner.body:
            for term in t.terms:
                if term.is_var and term.lexical not in sub:
                    root = classes.find(_key(term, 1))
                    const = classes.const.get(root)
                    sub[term.lexical] = const if const is not None else reps.setdefault(root, var(f"_c{len(reps)}"))
        sig = tuple(sorted((n, t.kind, t.lexical) for n, t in sub.items()))
        frozen_body = frozen_cache.get(sig)
        if frozen_body is None:
            frozen_body = frozen_cache[sig] = [_freeze(t.substitute(sub)) for t in inner.body]
        target = _freeze(tp.substitute(sub))
        i = frozen_body.index(target)
        if not any(_fits(o, target) and next(_homomorphisms(outer_body, frozen_body, fixed=(j, i)), None) is not None
                   for j, o in enumerate(outer_body)):
            return False
    return True


def has_homomorphism(outer: ViewDefinition, inner: ViewDefinition) -> bool:
    """Plain existence of a body homomorphism (no coverage requirement)."""
    _check_size(outer, inner)
    frozen_inner = [_freeze(tp) for tp in inner.body]
    return next(_homomorphisms(list(outer.body), frozen_inner), None) is not None


_FROZEN = "urn:fedra:frozen:"


def _freeze(tp: TriplePattern) -> TriplePattern:
    return TriplePattern(*(Term("iri", _FROZEN + t.lexical) if t.is_var else t for t in tp.terms))


def view_equivalent(a: ViewDefinition, b: ViewDefinition) -> bool:
    return bgp_contains(a, b) and bgp_contains(b, a)


def maximal_patterns(patterns: Iterable[TriplePattern]) -> frozenset[TriplePattern]:
    """Canonical patterns with every pattern subsumed by another dropped."""
    uniq = sorted({canonical(p) for p in patterns}, key=TriplePattern.sort_key)
    keep = []
    for p in uniq:
        if any(q != p and subsumes(q, p) for q in uniq):
            continue
        keep.append(p)
    return frozenset(keep)


def contribution(view: ViewDefinition, k: TriplePattern) -> frozenset[ContributionPattern]:
    """What ``view`` can supply for ``k``, one pattern per compatible body pattern.

    Joins between body patterns are ignored, so this over-approximates the
    fragment.  Results are canonical and pairwise non-subsuming.
    """
    found = []
    for tp in view.body:
        c = unify(k, tp)
        if c is not None:
            found.append(c.pattern)
    return frozenset(ContributionPattern(p) for p in maximal_patterns(found))
