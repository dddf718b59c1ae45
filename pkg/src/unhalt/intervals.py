"""Location-wise integer interval analysis.

A small forward abstract interpreter: every location gets a per-variable
interval, loops are stabilized by widening, and a few narrowing rounds pull
the bounds back down to the constants that actually guard the program. The
result is coarse but sound — it over-approximates every reachable valuation
and stays closed under every transition — which makes the induced band
predicates an inductive invariant map that costs no solver time at all.

Bounds are ints, with the module-level INF/NINF floats standing in for the
unbounded sides so comparisons stay ordinary.
"""

from __future__ import annotations

from collections import deque
from typing import Dict, List, Optional, Sequence, Tuple

from .poly import Poly
from .tsys import (
    Assertion,
    PP_FALSE,
    PropPredicate,
    TransitionSystem,
    is_primed,
    prime,
    transition_shape,
)

INF = float("inf")
NINF = float("-inf")

Interval = Tuple  # (lo, hi); ints, or NINF/INF on the open sides
Env = Dict[str, Interval]

TOP: Interval = (NINF, INF)

WIDEN_AFTER = 3
NARROW_ROUNDS = 12
REFINE_ROUNDS = 256


def _join(a: Interval, b: Interval) -> Interval:
    return (min(a[0], b[0]), max(a[1], b[1]))


def _meet(a: Interval, b: Interval) -> Optional[Interval]:
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    return None if lo > hi else (lo, hi)


def _widen(old: Interval, new: Interval) -> Interval:
    return (
        old[0] if new[0] >= old[0] else NINF,
        old[1] if new[1] <= old[1] else INF,
    )


def _env_join(a: Env, b: Env, variables: Sequence[str]) -> Env:
    return {v: _join(a[v], b[v]) for v in variables}


def _mul_bound(k: int, ivl: Interval) -> Interval:
    if k == 0:
        return (0, 0)
    lo, hi = k * ivl[0], k * ivl[1]
    return (lo, hi) if k > 0 else (hi, lo)


def _pow_interval(ivl: Interval, n: int) -> Interval:
    if n == 0:
        return (1, 1)
    if n == 1:
        return ivl
    lo, hi = ivl
    cands = [lo ** n, hi ** n]
    if n % 2 == 0 and lo < 0 < hi:
        cands.append(0)
    return (min(cands), max(cands))


def _mul_intervals(a: Interval, b: Interval) -> Interval:
    cands = []
    for x in a:
        for y in b:
            if 0 in (x, y):
                cands.append(0)
            else:
                cands.append(x * y)
    return (min(cands), max(cands))


def poly_interval(p: Poly, env: Env) -> Interval:
    """Interval bound on the values *p* takes over *env*."""
    lo, hi = 0, 0
    for mono, coef in p.terms.items():
        term: Interval = (1, 1)
        for v, exp in mono:
            term = _mul_intervals(term, _pow_interval(env.get(v, TOP), exp))
        term = _mul_bound(coef, term)
        lo, hi = lo + term[0], hi + term[1]
    return (lo, hi)


def _linear_parts(p: Poly) -> Optional[Tuple[Dict[str, int], int]]:
    """Split a degree-≤1 polynomial into (coefficients, constant)."""
    coefs: Dict[str, int] = {}
    const = 0
    for mono, coef in p.terms.items():
        if mono == ():
            const = coef
        elif len(mono) == 1 and mono[0][1] == 1:
            coefs[mono[0][0]] = coef
        else:
            return None
    return coefs, const


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def refine_by_row(env: Env, p: Poly) -> Optional[Env]:
    """Strengthen *env* with the constraint p ≥ 0; None means infeasible.

    Linear rows tighten each variable against the interval bounds of the
    others; anything nonlinear only contributes an infeasibility test.
    """
    if poly_interval(p, env)[1] < 0:
        return None
    lin = _linear_parts(p)
    if lin is None:
        return env
    coefs, const = lin
    out = dict(env)
    for v, a in coefs.items():
        if a == 0:
            continue
        rest_lo = const
        for w, c in coefs.items():
            if w == v:
                continue
            rest_lo += _mul_bound(c, out.get(w, TOP))[1]
        # a*v + rest >= 0 with rest <= rest_lo's best case bound
        if rest_lo in (INF, NINF):
            continue
        cur = out.get(v, TOP)
        if a > 0:  # v >= ceil(-rest_lo / a)
            bound = _ceil_div(-rest_lo, a)
            met = _meet(cur, (bound, INF))
        else:  # v <= floor(rest_lo / -a)
            bound = rest_lo // (-a)
            met = _meet(cur, (NINF, bound))
        if met is None:
            return None
        out[v] = met
    return out


def _transfer(ts: TransitionSystem, t, env: Env) -> Optional[Env]:
    """Abstract one transition: guard-refine, apply updates, free the rest."""
    shape = transition_shape(ts, t)
    cur: Optional[Env] = dict(env)
    for g in shape.guards:
        cur = refine_by_row(cur, g)
        if cur is None:
            return None
    nxt = dict(cur)
    for v, e in shape.updates:
        nxt[v] = poly_interval(e, cur)
    for v in shape.enumerated:
        nxt[v] = TOP
    # residual rows relate both states; use them to refine the primed side
    # (and to kill the edge when they cannot hold at all)
    if shape.residual:
        combined = dict(cur)
        for v in ts.variables:
            combined[prime(v)] = nxt[v]
        for r in shape.residual:
            refined = refine_by_row(combined, r)
            if refined is None:
                return None
            combined = refined
        nxt = {v: combined[prime(v)] for v in ts.variables}
    return nxt


def theta_env(ts: TransitionSystem) -> Env:
    env: Optional[Env] = {v: TOP for v in ts.variables}
    for row in ts.theta.rows:
        if any(is_primed(v) for v in row.variables()):
            continue
        env = refine_by_row(env, row)
        if env is None:  # unsatisfiable initial condition: no reachable states
            return {}
    return env


def analyze(ts: TransitionSystem) -> Dict[str, Env]:
    """Interval state per location; locations never reached are absent."""
    init = theta_env(ts)
    if not init:
        return {}
    state: Dict[str, Env] = {ts.init: init}
    hits: Dict[str, int] = {}
    work = deque([ts.init])
    while work:
        loc = work.popleft()
        for t in ts.outgoing(loc):
            out = _transfer(ts, t, state[loc])
            if out is None:
                continue
            cur = state.get(t.target)
            new = out if cur is None else _env_join(cur, out, ts.variables)
            if cur is not None and new == cur:
                continue
            hits[t.target] = hits.get(t.target, 0) + 1
            if cur is not None and hits[t.target] > WIDEN_AFTER:
                new = {v: _widen(cur[v], new[v]) for v in ts.variables}
            state[t.target] = new
            if t.target not in work:
                work.append(t.target)

    # narrowing: recompute exact one-step images and let them replace the
    # unbounded sides only, which keeps the map a post-fixpoint
    for _ in range(NARROW_ROUNDS):
        changed = False
        images: Dict[str, Env] = {ts.init: dict(init)}
        for loc, env in state.items():
            for t in ts.outgoing(loc):
                out = _transfer(ts, t, env)
                if out is None:
                    continue
                prev = images.get(t.target)
                images[t.target] = (
                    out if prev is None else _env_join(prev, out, ts.variables)
                )
        for loc, env in state.items():
            img = images.get(loc)
            if img is None:
                continue
            nxt = {}
            for v in ts.variables:
                lo = img[v][0] if env[v][0] == NINF else env[v][0]
                hi = img[v][1] if env[v][1] == INF else env[v][1]
                nxt[v] = (lo, hi)
            if nxt != env:
                state[loc] = nxt
                changed = True
        if not changed:
            break
    return _refine_components(ts, state, init)


def _strongly_connected(nodes: Sequence[str], succ: Dict[str, List[str]]) -> List[List[str]]:
    """Tarjan's algorithm, iteratively; components come out in reverse
    topological order of the condensation."""
    index: Dict[str, int] = {}
    low: Dict[str, int] = {}
    onstack = set()
    stack: List[str] = []
    comps: List[List[str]] = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        onstack.add(root)
        work = [(root, iter(succ.get(root, ())))]
        while work:
            node, it = work[-1]
            descended = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    onstack.add(nxt)
                    work.append((nxt, iter(succ.get(nxt, ()))))
                    descended = True
                    break
                if nxt in onstack:
                    low[node] = min(low[node], index[nxt])
            if descended:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    onstack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                comps.append(comp)
    return comps


def _refine_components(
    ts: TransitionSystem, state: Dict[str, Env], init: Env
) -> Dict[str, Env]:
    """Re-run the iteration exactly, one condensation component at a time.

    Widening can leave a bound open that the program in fact caps — most
    visibly on tight cycles and terminal self-loops, where narrowing has no
    fresh outside image to pull in. Components are small, so ascending
    iteration from the (already refined) entry images usually reaches the
    fixpoint in a bounded number of sweeps; a component that refuses to
    settle just keeps its widened value, which is still sound."""
    locs = [l for l in ts.locations if l in state]
    succ: Dict[str, List[str]] = {l: [] for l in locs}
    for t in ts.transitions:
        if t.source in state and t.target in state:
            succ[t.source].append(t.target)
    comps = _strongly_connected(locs, succ)
    refined: Dict[str, Optional[Env]] = {}

    def source_env(loc: str) -> Optional[Env]:
        return refined[loc] if loc in refined else state.get(loc)

    for comp in reversed(comps):  # topological order
        members = set(comp)
        vals: Dict[str, Optional[Env]] = {l: None for l in comp}
        if ts.init in members:
            vals[ts.init] = dict(init)
        internal = []
        for t in ts.transitions:
            if t.target not in members or t.source not in state:
                continue
            if t.source in members:
                internal.append(t)
                continue
            env = source_env(t.source)
            if env is None:
                continue
            out = _transfer(ts, t, env)
            if out is None:
                continue
            cur = vals[t.target]
            vals[t.target] = out if cur is None else _env_join(cur, out, ts.variables)
        stable = not internal
        for _ in range(REFINE_ROUNDS if internal else 0):
            changed = False
            for t in internal:
                env = vals[t.source]
                if env is None:
                    continue
                out = _transfer(ts, t, env)
                if out is None:
                    continue
                cur = vals[t.target]
                new = out if cur is None else _env_join(cur, out, ts.variables)
                if new != cur:
                    vals[t.target] = new
                    changed = True
            if not changed:
                stable = True
                break
        for l in comp:
            refined[l] = vals[l] if stable else state[l]

    return {l: refined[l] for l in locs if refined[l] is not None}


def band_rows(variables: Sequence[str], env: Env) -> List[Poly]:
    """The finite bounds of *env* as polynomial rows, in variable order."""
    rows: List[Poly] = []
    for v in variables:
        lo, hi = env.get(v, TOP)
        if lo != NINF:
            rows.append(Poly.var(v) - Poly.const(int(lo)))
        if hi != INF:
            rows.append(Poly.const(int(hi)) - Poly.var(v))
    return rows


def band_map(ts: TransitionSystem, state: Dict[str, Env]) -> dict:
    """The full analysis result as a predicate map over every location."""
    out = {}
    for loc in ts.locations:
        env = state.get(loc)
        if env is None:
            out[loc] = PP_FALSE
        else:
            out[loc] = PropPredicate((Assertion(tuple(band_rows(ts.variables, env))),))
    return out


def rank_variables(ts: TransitionSystem, state: Dict[str, Env]) -> List[str]:
    """Variables ordered by how informative their bands are.

    The widest total finite span wins: a wide band tracks the loop-progress
    structure of the program, while a near-constant band (a mode flag pinned
    to a few values) says little about where runs can go. Bounded-location
    count breaks ties, then declaration order."""

    def score(v: str):
        finite = 0
        span = 0
        for env in state.values():
            lo, hi = env.get(v, TOP)
            if lo != NINF and hi != INF:
                finite += 1
                span += int(hi - lo)
        return (-span, -finite, ts.variables.index(v))

    return sorted(ts.variables, key=score)


def pinned_rows(
    variables: Sequence[str],
    ranked: Sequence[str],
    env: Optional[Env],
    count: int,
) -> List[Optional[Poly]]:
    """Exactly *count* rows for a template pin: the strongest bands first
    (by the given variable ranking), padded with always-true zero rows.
    A None env (unreachable location) pins the empty predicate instead."""
    if env is None:
        rows: List[Optional[Poly]] = [Poly.const(-1)]
    else:
        rows = []
        for v in ranked:
            lo, hi = env.get(v, TOP)
            if lo != NINF:
                rows.append(Poly.var(v) - Poly.const(int(lo)))
            if hi != INF:
                rows.append(Poly.const(int(hi)) - Poly.var(v))
    rows = rows[:count]
    while len(rows) < count:
        rows.append(Poly())
    return rows
