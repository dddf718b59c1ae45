"""Integer transition systems with polynomial assertions.

A system is (variables, locations, init, terminal, theta, transitions).
Transition relations are conjunctions of polynomial rows p(x, x') >= 0 over
current variables x and primed next-state variables x'. Propositional
predicates (disjunctions of conjunctions of rows) describe sets of
valuations at a location; a predicate map assigns one to every location.

Terminal locations carry an identity self-loop so every configuration of a
program-derived system has at least one successor; "the program terminates"
means the run reaches the terminal location and stutters there.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .poly import Poly

PRIME = "'"


class TsysError(ValueError):
    pass


def prime(var: str) -> str:
    return var + PRIME


def unprime(var: str) -> str:
    return var[:-1] if var.endswith(PRIME) else var


def is_primed(var: str) -> bool:
    return var.endswith(PRIME)


def swap_primes(p: Poly, variables: Sequence[str]) -> Poly:
    mapping = {}
    for v in variables:
        mapping[v] = prime(v)
        mapping[prime(v)] = v
    return p.rename(mapping)


def frame_rows(variables: Sequence[str], except_for: Iterable[str] = ()) -> tuple:
    """Identity rows x' = x for every variable not in *except_for*."""
    skip = set(except_for)
    rows = []
    for v in variables:
        if v in skip:
            continue
        d = Poly.var(prime(v)) - Poly.var(v)
        rows.extend([d, -d])
    return tuple(rows)


# ---------------------------------------------------------------------------
# assertions and predicates


@dataclass(frozen=True)
class Assertion:
    """Conjunction of polynomial rows p >= 0."""

    rows: tuple = ()

    def holds(self, env: Mapping[str, int]) -> bool:
        return all(p.evaluate(env) >= 0 for p in self.rows)

    def variables(self) -> frozenset:
        return frozenset(v for p in self.rows for v in p.variables())

    def conjoin(self, other: "Assertion") -> "Assertion":
        return Assertion(self.rows + other.rows)

    @property
    def is_trivially_false(self) -> bool:
        return any(p.is_const() and p.const_value() < 0 for p in self.rows)


TRUE_ASSERTION = Assertion(())
FALSE_ASSERTION = Assertion((Poly.const(-1),))


@dataclass(frozen=True)
class PropPredicate:
    """Disjunction of assertions; the empty disjunction is false."""

    disjuncts: tuple = ()

    def holds(self, env: Mapping[str, int]) -> bool:
        return any(a.holds(env) for a in self.disjuncts)

    def variables(self) -> frozenset:
        out: frozenset = frozenset()
        for a in self.disjuncts:
            out |= a.variables()
        return out

    @property
    def is_false_literal(self) -> bool:
        return not self.disjuncts

    @property
    def is_true_literal(self) -> bool:
        return any(not a.rows for a in self.disjuncts)


PP_TRUE = PropPredicate((TRUE_ASSERTION,))
PP_FALSE = PropPredicate(())

# A predicate map is a plain dict from location name to PropPredicate.
PredicateMap = dict


def _single_var_bounds(rows: Sequence[Poly]):
    """Extract per-variable constant interval bounds from linear rows."""
    lo: dict[str, int] = {}
    hi: dict[str, int] = {}
    for p in rows:
        vs = p.variables()
        if len(vs) != 1 or p.degree() != 1:
            continue
        (v,) = vs
        a = p.coefficient(((v, 1),))
        b = p.coefficient(())
        # a*v + b >= 0
        if a > 0:  # v >= ceil(-b / a)
            bound = -(b // a) if b % a == 0 else (-b + a - 1) // a
            lo[v] = max(lo.get(v, bound), bound)
        elif a < 0:  # v <= floor(b / -a)
            bound = b // (-a)
            hi[v] = min(hi.get(v, bound), bound)
    return lo, hi


def simplify_assertion(a: Assertion) -> Optional[Assertion]:
    """Drop duplicate rows; return None when the assertion is clearly empty."""
    seen = []
    for p in a.rows:
        if p.is_const():
            if p.const_value() < 0:
                return None
            continue  # trivially true row
        if p not in seen:
            seen.append(p)
    lo, hi = _single_var_bounds(seen)
    for v in set(lo) & set(hi):
        if lo[v] > hi[v]:
            return None
    return Assertion(tuple(seen))


def complement(pp: PropPredicate, cap: int = 64) -> PropPredicate:
    """Negate a predicate back into disjunctive form.

    not (OR_j AND_i p_ij >= 0) distributes to a disjunction over all choices
    of one violated row per disjunct; clearly-infeasible combinations are
    pruned. Raises TsysError when the result would exceed *cap* disjuncts.
    """
    if pp.is_false_literal:
        return PP_TRUE
    choice_sets = []
    for a in pp.disjuncts:
        if not a.rows:
            return PP_FALSE
        choice_sets.append([-p - 1 for p in a.rows])  # p < 0  <=>  -p - 1 >= 0
    out = []
    for combo in itertools.product(*choice_sets):
        cand = simplify_assertion(Assertion(tuple(combo)))
        if cand is None:
            continue
        if cand not in out:
            out.append(cand)
        if len(out) > cap:
            raise TsysError(f"complement exceeds {cap} disjuncts")
    return PropPredicate(tuple(out))


# ---------------------------------------------------------------------------
# transitions and systems


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    rows: tuple = ()
    ndet_var: Optional[str] = None

    def holds(self, env: Mapping[str, int]) -> bool:
        return all(p.evaluate(env) >= 0 for p in self.rows)

    def key(self):
        return (self.source, self.target, self.ndet_var)


@dataclass(frozen=True)
class TransitionSystem:
    variables: tuple
    locations: tuple
    init: str
    terminal: Optional[str]
    theta: Assertion
    transitions: tuple

    def __post_init__(self):
        out: dict[str, list] = {loc: [] for loc in self.locations}
        for t in self.transitions:
            out[t.source].append(t)
        object.__setattr__(self, "_outgoing", {k: tuple(v) for k, v in out.items()})

    def outgoing(self, loc: str) -> tuple:
        return self._outgoing[loc]

    @property
    def ndet_transitions(self) -> tuple:
        return tuple(t for t in self.transitions if t.ndet_var is not None)

    def validate(self) -> None:
        locs = set(self.locations)
        if len(locs) != len(self.locations):
            raise TsysError("duplicate location names")
        if self.init not in locs:
            raise TsysError(f"init location {self.init!r} not declared")
        if self.terminal is not None and self.terminal not in locs:
            raise TsysError(f"terminal location {self.terminal!r} not declared")
        allowed = set(self.variables) | {prime(v) for v in self.variables}
        for p in self.theta.rows:
            bad = p.variables() - set(self.variables)
            if bad:
                raise TsysError(f"theta mentions {sorted(bad)}")
        for t in self.transitions:
            if t.source not in locs or t.target not in locs:
                raise TsysError(f"transition {t.source}->{t.target} off the map")
            for p in t.rows:
                bad = p.variables() - allowed
                if bad:
                    raise TsysError(
                        f"transition {t.source}->{t.target} mentions {sorted(bad)}"
                    )
            if t.ndet_var is not None:
                if t.ndet_var not in self.variables:
                    raise TsysError(f"unknown ndet variable {t.ndet_var!r}")
                pv = prime(t.ndet_var)
                for p in t.rows:
                    if pv in p.variables():
                        raise TsysError(
                            f"ndet transition {t.source}->{t.target} constrains {pv}"
                        )
        if self.terminal is not None:
            outs = self.outgoing(self.terminal)
            if len(outs) != 1 or outs[0].target != self.terminal:
                raise TsysError("terminal location must carry exactly its self-loop")
            expected = set(frame_rows(self.variables))
            if set(outs[0].rows) != expected:
                raise TsysError("terminal self-loop must be the identity relation")


def reverse(
    ts: TransitionSystem, theta: Assertion, init_location: Optional[str] = None
) -> TransitionSystem:
    """Flip every transition and start from the old terminal under *theta*."""
    start = init_location if init_location is not None else ts.terminal
    if start is None:
        raise TsysError("reversal needs an initial location")
    for p in theta.rows:
        if any(is_primed(v) for v in p.variables()):
            raise TsysError("theta must not mention primed variables")
    rev = tuple(
        Transition(
            source=t.target,
            target=t.source,
            rows=tuple(swap_primes(p, ts.variables) for p in t.rows),
            ndet_var=None,
        )
        for t in ts.transitions
    )
    return TransitionSystem(
        variables=ts.variables,
        locations=ts.locations,
        init=start,
        terminal=None,
        theta=theta,
        transitions=rev,
    )


def restrict(ts: TransitionSystem, resolution: Mapping) -> TransitionSystem:
    """Replace each nondeterministic assignment by x' = R(x).

    *resolution* maps transition keys (source, target, ndet_var) to
    polynomials over the unprimed variables. Every ndet transition must be
    covered; other transitions pass through unchanged.
    """
    keys = {t.key() for t in ts.ndet_transitions}
    extra = set(resolution) - keys
    if extra:
        raise TsysError(f"resolution for unknown transitions: {sorted(extra)}")
    missing = keys - set(resolution)
    if missing:
        raise TsysError(f"resolution missing for: {sorted(missing)}")
    new = []
    for t in ts.transitions:
        if t.ndet_var is None:
            new.append(t)
            continue
        r = resolution[t.key()]
        if any(is_primed(v) for v in r.variables()):
            raise TsysError("resolution polynomial mentions primed variables")
        d = Poly.var(prime(t.ndet_var)) - r
        new.append(Transition(t.source, t.target, t.rows + (d, -d), None))
    return TransitionSystem(
        variables=ts.variables,
        locations=ts.locations,
        init=ts.init,
        terminal=ts.terminal,
        theta=ts.theta,
        transitions=tuple(new),
    )


# ---------------------------------------------------------------------------
# concrete stepping


@dataclass(frozen=True)
class TransitionShape:
    """Syntactic classification of a transition's rows for enumeration.

    guards: rows over unprimed variables only.
    updates: primed variables pinned to a polynomial of the current state.
    enumerated: primed variables that must be searched over a window.
    residual: leftover rows checked on the full (x, x') environment.
    """

    guards: tuple
    updates: tuple  # ((var, Poly), ...)
    enumerated: tuple
    residual: tuple


def analyze_transition(variables: Sequence[str], t: Transition) -> TransitionShape:
    guards = []
    rest = []
    for p in t.rows:
        if any(is_primed(v) for v in p.variables()):
            rest.append(p)
        else:
            guards.append(p)

    updates: dict[str, Poly] = {}
    rowset = {p for p in rest}
    consumed = set()
    for v in variables:
        pv = prime(v)
        for p in rest:
            if p in consumed or -p in consumed:
                continue
            vs = p.variables()
            if pv not in vs:
                continue
            mono = ((pv, 1),)
            a = p.coefficient(mono)
            if a != 1:
                continue
            tail = p - Poly.var(pv)
            if any(is_primed(w) for w in tail.variables()) or pv in tail.variables():
                continue
            if -p in rowset:
                # p = x' - e and e - x' both hold, so x' = e exactly
                updates[v] = -tail
                consumed.add(p)
                consumed.add(-p)
                break

    residual = [p for p in rest if p not in consumed]
    mentioned = {v for p in residual for v in p.variables() if is_primed(v)}
    enumerated = sorted(unprime(v) for v in mentioned if unprime(v) not in updates)
    # primed variables absent from every row are unconstrained (ndet)
    for v in variables:
        if v not in updates and v not in enumerated:
            if not any(prime(v) in p.variables() for p in t.rows):
                enumerated.append(v)
    return TransitionShape(
        guards=tuple(guards),
        updates=tuple(sorted(updates.items())),
        enumerated=tuple(enumerated),
        residual=tuple(residual),
    )


_SHAPE_CACHE: dict = {}


def transition_shape(ts: TransitionSystem, t: Transition) -> TransitionShape:
    key = (ts.variables, t)
    shape = _SHAPE_CACHE.get(key)
    if shape is None:
        shape = analyze_transition(ts.variables, t)
        if len(_SHAPE_CACHE) > 4096:
            _SHAPE_CACHE.clear()
        _SHAPE_CACHE[key] = shape
    return shape


Config = tuple  # (location, (v1, v2, ...))


def transition_successors(
    ts: TransitionSystem, t: Transition, vals: tuple, ndet_box: tuple
) -> list:
    """All next-state valuations reachable from *vals* through *t*.

    Unconstrained primed variables range over *ndet_box* (inclusive), which
    bounds the enumeration only — the relation itself is unbounded.
    """
    shape = transition_shape(ts, t)
    env = dict(zip(ts.variables, vals))
    if any(p.evaluate(env) < 0 for p in shape.guards):
        return []
    nxt = dict(env)
    for v, e in shape.updates:
        nxt[v] = e.evaluate(env)
    lo, hi = ndet_box
    out = []
    window = range(lo, hi + 1)
    for combo in itertools.product(window, repeat=len(shape.enumerated)):
        cand = dict(nxt)
        for v, value in zip(shape.enumerated, combo):
            cand[v] = value
        full = dict(env)
        for v in ts.variables:
            full[prime(v)] = cand[v]
        if all(p.evaluate(full) >= 0 for p in shape.residual):
            out.append(tuple(cand[v] for v in ts.variables))
    return out


def successors(ts: TransitionSystem, config: Config, ndet_box: tuple) -> list:
    loc, vals = config
    out = []
    for t in ts.outgoing(loc):
        for nxt in transition_successors(ts, t, vals, ndet_box):
            out.append((t.target, nxt))
    return out


def enumerate_box(nvars: int, box: tuple):
    lo, hi = box
    return itertools.product(range(lo, hi + 1), repeat=nvars)


# ---------------------------------------------------------------------------
# interchange format


def _row_to_sexp(p: Poly):
    return [">=", p.to_sexp(), 0]


def _row_from_sexp(form) -> Poly:
    if not (isinstance(form, list) and len(form) == 3 and form[0] == ">="):
        raise TsysError(f"expected (>= poly 0), got {form!r}")
    if form[2] != 0:
        raise TsysError("row right-hand side must be 0")
    return Poly.from_sexp(form[1])


def assertion_to_sexp(a: Assertion):
    return ["and"] + [_row_to_sexp(p) for p in a.rows]


def assertion_from_sexp(form) -> Assertion:
    if form == "true":
        return TRUE_ASSERTION
    if not (isinstance(form, list) and form and form[0] == "and"):
        raise TsysError(f"expected (and rows...), got {form!r}")
    return Assertion(tuple(_row_from_sexp(f) for f in form[1:]))


def predicate_to_sexp(pp: PropPredicate):
    if pp.is_false_literal:
        return "false"
    return ["or"] + [assertion_to_sexp(a) for a in pp.disjuncts]


def predicate_from_sexp(form) -> PropPredicate:
    if form == "false":
        return PP_FALSE
    if form == "true":
        return PP_TRUE
    if not (isinstance(form, list) and form and form[0] == "or"):
        raise TsysError(f"expected (or ...), got {form!r}")
    return PropPredicate(tuple(assertion_from_sexp(f) for f in form[1:]))


def system_to_sexp(ts: TransitionSystem):
    out = [
        "system",
        ["vars"] + list(ts.variables),
        ["locations"] + list(ts.locations),
        ["init", ts.init],
    ]
    if ts.terminal is not None:
        out.append(["terminal", ts.terminal])
    out.append(["theta"] + [_row_to_sexp(p) for p in ts.theta.rows])
    for t in ts.transitions:
        form = ["transition", t.source, t.target]
        if t.ndet_var is not None:
            form.append(["ndet", t.ndet_var])
        form.extend(_row_to_sexp(p) for p in t.rows)
        out.append(form)
    return out


def system_from_sexp(form) -> TransitionSystem:
    if not (isinstance(form, list) and form and form[0] == "system"):
        raise TsysError("expected (system ...)")
    fields: dict[str, list] = {}
    transitions = []
    for item in form[1:]:
        if not isinstance(item, list) or not item:
            raise TsysError(f"bad system item: {item!r}")
        if item[0] == "transition":
            transitions.append(item)
        else:
            fields[item[0]] = item[1:]
    try:
        variables = tuple(fields["vars"])
        locations = tuple(fields["locations"])
        init = fields["init"][0]
    except KeyError as e:
        raise TsysError(f"system missing {e.args[0]!r}") from None
    terminal = fields["terminal"][0] if "terminal" in fields else None
    theta = Assertion(tuple(_row_from_sexp(f) for f in fields.get("theta", [])))
    ts_list = []
    for item in transitions:
        src, tgt = item[1], item[2]
        rest = item[3:]
        ndet_var = None
        rows = []
        for f in rest:
            if isinstance(f, list) and f and f[0] == "ndet":
                ndet_var = f[1]
            else:
                rows.append(_row_from_sexp(f))
        ts_list.append(Transition(src, tgt, tuple(rows), ndet_var))
    ts = TransitionSystem(
        variables=variables,
        locations=locations,
        init=init,
        terminal=terminal,
        theta=theta,
        transitions=tuple(ts_list),
    )
    ts.validate()
    return ts
