"""Exact images of linear predicates through transition rows.

The solver only carries templates at a sparse set of locations; the
validator wants a predicate value at every location. This module fills the
gap: project a disjunct's rows through a transition by Fourier–Motzkin
elimination (cross-multiplied, so coefficients stay integral) and propagate
those images along the remaining acyclic part of the graph. Every cycle
passes through a template location, so a topological pass settles all the
rest, and single-step closure into the already-fixed locations is inherited
from the solved constraints instead of being re-proved.

Projection is exact over the rationals; over the integers it can only grow
a predicate, which is the safe direction for a set that must be closed
under successors.
"""

from __future__ import annotations

from math import gcd
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .poly import Poly
from .tsys import (
    Assertion,
    PP_FALSE,
    PropPredicate,
    Transition,
    TransitionSystem,
    prime,
)

MAX_ROWS = 24
MAX_DISJUNCTS = 16


def linear_coefficient(p: Poly, v: str) -> Optional[int]:
    """The coefficient of *v* in *p*, or None when *v* occurs nonlinearly."""
    coef = 0
    for mono, c in p.terms.items():
        if any(name == v for name, _ in mono):
            if mono != ((v, 1),):
                return None
            coef = c
    return coef


def _reduce_row(p: Poly) -> Poly:
    g = 0
    for c in p.terms.values():
        g = gcd(g, abs(c))
    if g > 1:
        return Poly({m: c // g for m, c in p.terms.items()})
    return p


def eliminate(rows: Sequence[Poly], v: str) -> Optional[List[Poly]]:
    """Fourier–Motzkin elimination of *v* from a conjunction of rows ≥ 0.

    Returns None when some row mentions *v* nonlinearly; an infeasible
    input surfaces as a negative-constant row in the output.
    """
    lower: List[Tuple[int, Poly]] = []  # a > 0 in a·v + rest ≥ 0
    upper: List[Tuple[int, Poly]] = []  # a < 0
    rest: List[Poly] = []
    for p in rows:
        a = linear_coefficient(p, v)
        if a is None:
            return None
        if a == 0:
            rest.append(p)
        elif a > 0:
            lower.append((a, p))
        else:
            upper.append((a, p))
    out = list(rest)
    for a, pl in lower:
        for b, pu in upper:
            combined = pl * (-b) + pu * a
            out.append(_reduce_row(combined))
    return out


def _tidy(rows: Iterable[Poly]) -> Optional[List[Poly]]:
    """Drop tautologies and duplicates; None for an infeasible conjunction."""
    seen = []
    for p in rows:
        if p.is_const():
            if p.const_value() < 0:
                return None
            continue
        q = _reduce_row(p)
        if q not in seen:
            seen.append(q)
    return seen


def project(rows: Sequence[Poly], drop: Sequence[str]) -> Optional[List[Poly]]:
    """Eliminate every variable in *drop*; None on nonlinear occurrence or
    row blow-up past MAX_ROWS. An infeasible conjunction projects to the
    canonical empty polyhedron [−1 ≥ 0] — callers that union images treat
    it as an empty contribution, not a failure."""
    cur: List[Poly] = list(rows)
    for v in sorted(drop, key=lambda v: sum(1 for p in cur if v in p.variables())):
        nxt = eliminate(cur, v)
        if nxt is None:
            return None
        tidied = _tidy(nxt)
        if tidied is None:
            return [Poly.const(-1)]
        if len(tidied) > MAX_ROWS:
            return None
        cur = tidied
    return cur


def post_image(
    variables: Sequence[str], pred: PropPredicate, t: Transition
) -> Optional[PropPredicate]:
    """{x' : ∃x. pred(x) ∧ rows_t(x, x')} as a predicate over the unprimed
    variables; None when the rows resist linear projection."""
    unpriming = {prime(v): v for v in variables}
    disjuncts: List[Assertion] = []
    for a in pred.disjuncts:
        rows = list(a.rows) + list(t.rows)
        projected = project(rows, list(variables))
        if projected is None:
            return None
        renamed = _tidy(p.rename(unpriming) for p in projected)
        if renamed is None:
            continue  # this disjunct contributes nothing through t
        cand = Assertion(tuple(renamed))
        if cand not in disjuncts:
            disjuncts.append(cand)
    return PropPredicate(tuple(disjuncts))


def complete_map(
    rev: TransitionSystem,
    fixed: Mapping[str, PropPredicate],
) -> Optional[Dict[str, PropPredicate]]:
    """Predicate values for the locations of *rev* missing from *fixed*.

    Requires the subgraph induced by the missing locations to be acyclic
    (true whenever *fixed* covers a cutpoint set of *rev*). Each missing
    location receives the union of the one-step images of its predecessors,
    taken in topological order. Returns only the newly computed entries, or
    None when projection fails or the union outgrows MAX_DISJUNCTS.
    """
    missing = [loc for loc in rev.locations if loc not in fixed]
    if not missing:
        return {}
    incoming: Dict[str, List[Transition]] = {loc: [] for loc in missing}
    needs: Dict[str, set] = {loc: set() for loc in missing}
    for t in rev.transitions:
        if t.target in incoming:
            if t.source == t.target:
                return None  # a cycle that avoids every fixed location
            incoming[t.target].append(t)
            if t.source in needs:
                needs[t.target].add(t.source)
    order: List[str] = []
    ready = [loc for loc in missing if not needs[loc]]
    pending = {loc: set(deps) for loc, deps in needs.items()}
    while ready:
        loc = ready.pop(0)
        order.append(loc)
        for other, deps in pending.items():
            if loc in deps:
                deps.discard(loc)
                if not deps and other not in order and other not in ready:
                    ready.append(other)
    if len(order) != len(missing):
        return None  # a cycle avoids every fixed location

    values: Dict[str, PropPredicate] = dict(fixed)
    out: Dict[str, PropPredicate] = {}
    for loc in order:
        pieces: List[Assertion] = []
        for t in incoming[loc]:
            src = values.get(t.source)
            if src is None or src.is_false_literal:
                continue
            img = post_image(rev.variables, src, t)
            if img is None:
                return None
            for d in img.disjuncts:
                if d not in pieces:
                    pieces.append(d)
        if len(pieces) > MAX_DISJUNCTS:
            return None
        values[loc] = PropPredicate(tuple(pieces)) if pieces else PP_FALSE
        out[loc] = values[loc]
    return out
