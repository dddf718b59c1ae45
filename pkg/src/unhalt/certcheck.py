"""Solver-free audits of systems, predicate maps, and certificates.

Everything here works by brute enumeration over a bounded integer box, so
it shares no code path (and no failure mode) with the constraint encoding:
a bug in the Farkas-style encoding cannot hide from these checks, which is
the point. Verdicts over a box are sound refutations — a counterexample is
a real counterexample — while "ok" means "no violation within the box and
nondeterminism window".

Polynomial evaluation is vectorized with numpy over flattened grids, with
an exact object-dtype fallback when interval bounds say int64 could
overflow.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import reach
from .certificate import Certificate
from .poly import Poly
from .tsys import (
    Assertion,
    Config,
    PP_FALSE,
    PP_TRUE,
    PredicateMap,
    PropPredicate,
    Transition,
    TransitionSystem,
    TRUE_ASSERTION,
    complement,
    prime,
    restrict,
    reverse,
    successors,
    transition_shape,
)

DEFAULT_NDET_BOX = (-64, 63)
INT64_SAFE = 1 << 61
MAX_COMBO_WORK = 200_000_000


class CertcheckError(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""
    counterexample: Optional[tuple] = None

    def __bool__(self):
        return self.ok


# ---------------------------------------------------------------------------
# vectorized evaluation over a box


def _abs_bound(p: Poly, m: int) -> int:
    """Upper bound on |p| when every variable magnitude is at most m."""
    total = 0
    for mono, coef in p.terms.items():
        t = abs(coef)
        for _, e in mono:
            t *= m**e
        total += t
    return total


def _grid_env(variables: Sequence[str], box: tuple, dtype) -> dict:
    lo, hi = box
    axes = [np.arange(lo, hi + 1, dtype=np.int64) for _ in variables]
    mesh = np.meshgrid(*axes, indexing="ij") if variables else []
    env = {}
    for v, arr in zip(variables, mesh):
        flat = arr.ravel()
        env[v] = flat.astype(object) if dtype is object else flat
    return env


def _eval_poly(p: Poly, env: dict, ref):
    acc = np.zeros_like(ref)
    for mono, coef in p.terms.items():
        term = np.full_like(ref, coef)
        for v, e in mono:
            term = term * env[v] ** e
        acc = acc + term
    return acc


def _rows_mask(rows, env: dict, ref):
    mask = np.ones(ref.shape, dtype=bool)
    for p in rows:
        mask &= _eval_poly(p, env, ref) >= 0
        if not mask.any():
            break
    return mask


def _pred_mask(pp: PropPredicate, env: dict, ref):
    mask = np.zeros(ref.shape, dtype=bool)
    for a in pp.disjuncts:
        mask |= _rows_mask(a.rows, env, ref)
        if mask.all():
            break
    return mask


def _in_box_mask(arrays, box, ref):
    lo, hi = box
    mask = np.ones(ref.shape, dtype=bool)
    for arr in arrays:
        mask &= (arr >= lo) & (arr <= hi)
    return mask


def _poly_dtype(polys, m: int):
    return object if any(_abs_bound(p, m) > INT64_SAFE for p in polys) else np.int64


def _system_dtype(ts: TransitionSystem, extra_polys, box: tuple, ndet_box: tuple):
    m = max(abs(box[0]), abs(box[1]), abs(ndet_box[0]), abs(ndet_box[1]), 1)
    # successor values come from update polynomials; bound those first
    worst = m
    polys = list(extra_polys)
    for t in ts.transitions:
        shape = transition_shape(ts, t)
        polys.extend(shape.guards)
        polys.extend(shape.residual)
        for _, e in shape.updates:
            worst = max(worst, _abs_bound(e, m))
            polys.append(e)
    return _poly_dtype(polys, worst)


def _pm_polys(pm: PredicateMap):
    out = []
    for pp in pm.values():
        for a in pp.disjuncts:
            out.extend(a.rows)
    return out


def _lookup(pm: PredicateMap, loc: str) -> PropPredicate:
    try:
        return pm[loc]
    except KeyError:
        raise CertcheckError(f"predicate map has no entry for location {loc!r}")


def is_inductive(
    ts: TransitionSystem,
    pm: PredicateMap,
    box: tuple,
    ndet_box: tuple = DEFAULT_NDET_BOX,
    pairs_in_box: bool = False,
) -> Verdict:
    """Audit closure of *pm* under every transition, sources drawn from box.

    With ``pairs_in_box`` the step relation is restricted to box-to-box
    pairs on both ends, which makes the audit exactly symmetric under
    system reversal; without it, successors are checked wherever they land
    (the right mode for validating certificates).
    """
    dtype = _system_dtype(ts, _pm_polys(pm), box, ndet_box)
    env = _grid_env(ts.variables, box, dtype)
    ref = env[ts.variables[0]]
    lo_w, hi_w = ndet_box
    window = range(lo_w, hi_w + 1)

    for t in ts.transitions:
        shape = transition_shape(ts, t)
        active = _pred_mask(_lookup(pm, t.source), env, ref)
        if not active.any():
            continue
        active = active & _rows_mask(shape.guards, env, ref)
        if not active.any():
            continue
        succ = dict(env)
        for v, e in shape.updates:
            succ[v] = _eval_poly(e, env, ref)
        tgt_pred = _lookup(pm, t.target)

        if not shape.enumerated:
            full = dict(env)
            for v in ts.variables:
                full[prime(v)] = succ[v]
            step = active & _rows_mask(shape.residual, full, ref)
            if pairs_in_box:
                step &= _in_box_mask([succ[v] for v in ts.variables], box, ref)
            if not step.any():
                continue
            bad = step & ~_pred_mask(tgt_pred, succ, ref)
            if bad.any():
                idx = int(np.flatnonzero(bad)[0])
                x = tuple(int(env[v][idx]) for v in ts.variables)
                xp = tuple(int(succ[v][idx]) for v in ts.variables)
                return Verdict(
                    False,
                    f"not closed under {t.source}->{t.target}",
                    ((t.source, t.target), x, xp),
                )
            continue

        # Free successor variables: a state is safe outright when a target
        # disjunct not mentioning them already holds on the updated values,
        # since that disjunct then holds for every window value. The
        # remaining states get the window enumerated on compressed vectors.
        free = set(shape.enumerated)
        safe = np.zeros(ref.shape, dtype=bool)
        for a in tgt_pred.disjuncts:
            if not (a.variables() & free):
                safe |= _rows_mask(a.rows, succ, ref)
        pending = active & ~safe
        if not pending.any():
            continue
        sel = np.flatnonzero(pending)
        work = len(sel) * (len(window) ** len(shape.enumerated))
        if work > MAX_COMBO_WORK:
            raise CertcheckError(
                f"audit of {t.source}->{t.target} needs {work} combinations; "
                "shrink the box or window"
            )
        penv = {v: env[v][sel] for v in ts.variables}
        pref = ref[sel]
        psucc = {v: succ[v][sel] for v, _ in shape.updates}
        for combo in itertools.product(window, repeat=len(shape.enumerated)):
            cand = dict(psucc)
            for v, value in zip(shape.enumerated, combo):
                cand[v] = np.full_like(pref, value)
            full = dict(penv)
            for v in ts.variables:
                full[prime(v)] = cand[v]
            step = _rows_mask(shape.residual, full, pref)
            if pairs_in_box:
                step &= _in_box_mask([cand[v] for v in ts.variables], box, pref)
            if not step.any():
                continue
            bad = step & ~_pred_mask(tgt_pred, cand, pref)
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                x = tuple(int(penv[v][j]) for v in ts.variables)
                xp = tuple(int(cand[v][j]) for v in ts.variables)
                return Verdict(
                    False,
                    f"not closed under {t.source}->{t.target}",
                    ((t.source, t.target), x, xp),
                )
    return Verdict(True, "closed under all transitions within the box")


# ---------------------------------------------------------------------------
# successor existence and proper under-approximation


def _exists_successor_mask(
    ts: TransitionSystem,
    loc: str,
    env: dict,
    ref,
    ndet_box: tuple,
    into: Optional[PredicateMap] = None,
):
    """Mask of box states at *loc* with at least one successor, optionally
    restricted to successors satisfying *into* at the target location."""
    lo_w, hi_w = ndet_box
    window = range(lo_w, hi_w + 1)
    exists = np.zeros(ref.shape, dtype=bool)
    for t in ts.outgoing(loc):
        shape = transition_shape(ts, t)
        g = _rows_mask(shape.guards, env, ref) & ~exists
        if not g.any():
            continue
        succ = dict(env)
        for v, e in shape.updates:
            succ[v] = _eval_poly(e, env, ref)
        if not shape.enumerated:
            full = dict(env)
            for v in ts.variables:
                full[prime(v)] = succ[v]
            ok = g & _rows_mask(shape.residual, full, ref)
            if into is not None:
                ok &= _pred_mask(_lookup(into, t.target), succ, ref)
            exists |= ok
            continue
        if not shape.residual and into is None:
            exists |= g  # any window value yields a successor
            continue
        sel = np.flatnonzero(g)
        work = len(sel) * (len(window) ** len(shape.enumerated))
        if work > MAX_COMBO_WORK:
            raise CertcheckError(
                f"successor audit of {t.source}->{t.target} too large"
            )
        penv = {v: env[v][sel] for v in ts.variables}
        pref = ref[sel]
        psucc = {v: succ[v][sel] for v, _ in shape.updates}
        found = np.zeros(pref.shape, dtype=bool)
        for combo in itertools.product(window, repeat=len(shape.enumerated)):
            cand = dict(psucc)
            for v, value in zip(shape.enumerated, combo):
                cand[v] = np.full_like(pref, value)
            full = dict(penv)
            for v in ts.variables:
                full[prime(v)] = cand[v]
            ok = _rows_mask(shape.residual, full, pref)
            if into is not None:
                ok &= _pred_mask(_lookup(into, t.target), cand, pref)
            found |= ok
            if found.all():
                break
        out = np.zeros(ref.shape, dtype=bool)
        out[sel] = found
        exists |= out
    return exists


def is_proper_underapprox(
    ts: TransitionSystem,
    sub: TransitionSystem,
    box: tuple,
    ndet_box: tuple = DEFAULT_NDET_BOX,
) -> Verdict:
    """Audit that *sub* under-approximates *ts* without starving anyone:
    every sub-step is a ts-step, and wherever ts can move, sub can too."""
    if sub.variables != ts.variables or set(sub.locations) != set(ts.locations):
        return Verdict(False, "systems disagree on variables or locations")
    if sub.init != ts.init:
        return Verdict(False, "systems disagree on the initial location")
    dtype = (
        object
        if object in (_system_dtype(ts, [], box, ndet_box),
                      _system_dtype(sub, [], box, ndet_box))
        else np.int64
    )
    env = _grid_env(ts.variables, box, dtype)
    ref = env[ts.variables[0]]
    lo_w, hi_w = ndet_box
    window = range(lo_w, hi_w + 1)

    # 1. step inclusion, transition by transition
    for t in sub.transitions:
        shape = transition_shape(sub, t)
        peers = [p for p in ts.outgoing(t.source) if p.target == t.target]
        g = _rows_mask(shape.guards, env, ref)
        if not g.any():
            continue
        succ = dict(env)
        for v, e in shape.updates:
            succ[v] = _eval_poly(e, env, ref)
        if shape.enumerated:
            sel = np.flatnonzero(g)
            work = len(sel) * (len(window) ** len(shape.enumerated))
            if work > MAX_COMBO_WORK:
                raise CertcheckError("inclusion audit too large")
            penv = {v: env[v][sel] for v in ts.variables}
            pref = ref[sel]
            psucc = {v: succ[v][sel] for v, _ in shape.updates}
            for combo in itertools.product(window, repeat=len(shape.enumerated)):
                cand = dict(psucc)
                for v, value in zip(shape.enumerated, combo):
                    cand[v] = np.full_like(pref, value)
                full = dict(penv)
                for v in ts.variables:
                    full[prime(v)] = cand[v]
                step = _rows_mask(shape.residual, full, pref)
                if not step.any():
                    continue
                inc = np.zeros(pref.shape, dtype=bool)
                for p in peers:
                    inc |= _rows_mask(p.rows, full, pref)
                bad = step & ~inc
                if bad.any():
                    j = int(np.flatnonzero(bad)[0])
                    x = tuple(int(penv[v][j]) for v in ts.variables)
                    xp = tuple(int(cand[v][j]) for v in ts.variables)
                    return Verdict(
                        False,
                        f"step of {t.source}->{t.target} not in the original",
                        ((t.source, t.target), x, xp),
                    )
            continue
        full = dict(env)
        for v in ts.variables:
            full[prime(v)] = succ[v]
        step = g & _rows_mask(shape.residual, full, ref)
        if not step.any():
            continue
        inc = np.zeros(ref.shape, dtype=bool)
        for p in peers:
            inc |= _rows_mask(p.rows, full, ref)
        bad = step & ~inc
        if bad.any():
            idx = int(np.flatnonzero(bad)[0])
            x = tuple(int(env[v][idx]) for v in ts.variables)
            xp = tuple(int(succ[v][idx]) for v in ts.variables)
            return Verdict(
                False,
                f"step of {t.source}->{t.target} not in the original",
                ((t.source, t.target), x, xp),
            )

    # 2. no starvation: a ts-successor exists => a sub-successor exists
    for loc in ts.locations:
        can_ts = _exists_successor_mask(ts, loc, env, ref, ndet_box)
        can_sub = _exists_successor_mask(sub, loc, env, ref, ndet_box)
        starved = can_ts & ~can_sub
        if starved.any():
            idx = int(np.flatnonzero(starved)[0])
            x = tuple(int(env[v][idx]) for v in ts.variables)
            return Verdict(
                False,
                f"{loc} loses all successors in the restriction",
                ((loc,), x, None),
            )
    return Verdict(True, "proper under-approximation within the box")


# ---------------------------------------------------------------------------
# recurrence sets


def check_recurrence(
    ts: TransitionSystem,
    pm: PredicateMap,
    box: tuple,
    ndet_box: tuple = DEFAULT_NDET_BOX,
    closed: bool = True,
) -> Verdict:
    """Audit *pm* as a recurrence set: it contains an initial configuration
    and every member has a successor inside the set. A closed set must also
    be closed under *all* successors and exclude terminal configurations."""
    dtype = _system_dtype(ts, _pm_polys(pm) + list(ts.theta.rows), box, ndet_box)
    env = _grid_env(ts.variables, box, dtype)
    ref = env[ts.variables[0]]
    theta_mask = _rows_mask(ts.theta.rows, env, ref)
    init_in = theta_mask & _pred_mask(_lookup(pm, ts.init), env, ref)
    if not init_in.any():
        return Verdict(False, "no initial configuration inside the set")
    nonempty = False
    for loc in ts.locations:
        if ts.terminal is not None and loc == ts.terminal:
            if closed and _pred_mask(_lookup(pm, loc), env, ref).any():
                return Verdict(False, "set contains terminal configurations")
            continue
        members = _pred_mask(_lookup(pm, loc), env, ref)
        if not members.any():
            continue
        nonempty = True
        can_stay = _exists_successor_mask(ts, loc, env, ref, ndet_box, into=pm)
        stuck = members & ~can_stay
        if stuck.any():
            idx = int(np.flatnonzero(stuck)[0])
            x = tuple(int(env[v][idx]) for v in ts.variables)
            return Verdict(
                False,
                f"member at {loc} has no successor in the set",
                ((loc,), x, None),
            )
    if not nonempty:
        return Verdict(False, "set is empty over the box")
    if closed:
        v = is_inductive(ts, pm, box, ndet_box)
        if not v.ok:
            return Verdict(False, f"set is not closed: {v.reason}", v.counterexample)
    return Verdict(True, "recurrence set confirmed within the box")


# ---------------------------------------------------------------------------
# ground-truth labels by explicit search


@dataclass(frozen=True)
class BruteForceResult:
    status: str  # "all-terminate" | "nonterminating" | "inconclusive"
    reason: str = ""
    stem: Optional[tuple] = None  # path from an initial configuration
    cycle: Optional[tuple] = None  # repeating suffix, first config == last
    explored: int = 0


def brute_force_nonterm(
    ts: TransitionSystem,
    box: tuple,
    ndet_box: tuple = (-16, 15),
    max_configs: int = 200_000,
) -> BruteForceResult:
    """Decide termination by exhausting the reachable box-bounded graph.

    Any reachable cycle through non-terminal configurations is a genuine
    non-terminating run. "all-terminate" is claimed only when the whole
    reachable graph stayed inside the box, nothing escaped or got stuck
    mid-run, and no such cycle exists — otherwise the result is honest
    about being inconclusive.
    """
    try:
        start = reach.initial_states(ts, box)
    except reach.ReachError as e:
        return BruteForceResult("inconclusive", f"initial states: {e}")
    parents: dict = {c: None for c in start}
    order = list(start)
    edges: dict = {}
    escaped = False
    stuck = False
    i = 0
    while i < len(order):
        if len(order) > max_configs:
            return BruteForceResult(
                "inconclusive", "exploration budget exceeded", explored=i
            )
        cfg = order[i]
        i += 1
        loc, _vals = cfg
        if ts.terminal is not None and loc == ts.terminal:
            edges[cfg] = []  # runs parked at the terminal have terminated
            continue
        succs = successors(ts, cfg, ndet_box)
        if not succs:
            stuck = True
            edges[cfg] = []
            continue
        kept = []
        for nxt in succs:
            if any(not (box[0] <= x <= box[1]) for x in nxt[1]):
                escaped = True
                continue
            kept.append(nxt)
            if nxt not in parents:
                parents[nxt] = cfg
                order.append(nxt)
        edges[cfg] = kept

    # cycle search over the explored graph (iterative three-color DFS)
    color: dict = {}
    for root in order:
        if color.get(root):
            continue
        stack = [(root, iter(edges.get(root, [])))]
        color[root] = 1
        path = [root]
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if ts.terminal is not None and nxt[0] == ts.terminal:
                    continue
                c = color.get(nxt)
                if c == 1:
                    k = path.index(nxt)
                    cycle = tuple(path[k:]) + (nxt,)
                    return BruteForceResult(
                        "nonterminating",
                        "reachable cycle found",
                        stem=_stem_to(parents, nxt),
                        cycle=cycle,
                        explored=len(order),
                    )
                if c is None:
                    color[nxt] = 1
                    stack.append((nxt, iter(edges.get(nxt, []))))
                    path.append(nxt)
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                stack.pop()
                path.pop()
    if escaped:
        return BruteForceResult(
            "inconclusive", "some run left the box", explored=len(order)
        )
    if stuck:
        return BruteForceResult(
            "inconclusive",
            "some run lost all successors under the window",
            explored=len(order),
        )
    return BruteForceResult(
        "all-terminate", "every bounded run reaches the terminal", explored=len(order)
    )


def _stem_to(parents: dict, cfg: Config) -> tuple:
    path = [cfg]
    while parents[cfg] is not None:
        cfg = parents[cfg]
        path.append(cfg)
    path.reverse()
    return tuple(path)


@dataclass(frozen=True)
class ReplayResult:
    status: str  # "looping" | "terminal" | "horizon" | "branching" | "stuck"
    steps: int
    revisit_index: Optional[int] = None
    config: Optional[Config] = None


def replay(
    ts: TransitionSystem,
    start: Config,
    horizon: int = 10_000,
    ndet_box: tuple = (0, 0),
) -> ReplayResult:
    """Walk a deterministic system from *start*.

    Stops on a revisited configuration ("looping" — a hard non-termination
    witness for a deterministic system), on reaching the terminal location,
    on branching (more than one distinct successor), on a stuck
    configuration, or at the horizon.
    """
    seen = {start: 0}
    cfg = start
    for step in range(1, horizon + 1):
        if ts.terminal is not None and cfg[0] == ts.terminal:
            return ReplayResult("terminal", step - 1, config=cfg)
        succs = successors(ts, cfg, ndet_box)
        if not succs:
            return ReplayResult("stuck", step - 1, config=cfg)
        if len(set(succs)) > 1:
            return ReplayResult("branching", step - 1, config=cfg)
        cfg = succs[0]
        if cfg in seen:
            return ReplayResult("looping", step, revisit_index=seen[cfg], config=cfg)
        seen[cfg] = step
    return ReplayResult("horizon", horizon, config=cfg)


# ---------------------------------------------------------------------------
# reachability matrices (for reversal symmetry experiments)


def box_configs(ts: TransitionSystem, box: tuple) -> list:
    lo, hi = box
    out = []
    for tup in itertools.product(range(lo, hi + 1), repeat=len(ts.variables)):
        for loc in ts.locations:
            out.append((loc, tup))
    out.sort()
    return out


def step_matrix(ts: TransitionSystem, box: tuple, ndet_box: tuple):
    """Boolean one-step matrix over box configurations (box-to-box pairs)."""
    configs = box_configs(ts, box)
    index = {c: i for i, c in enumerate(configs)}
    n = len(configs)
    mat = np.zeros((n, n), dtype=bool)
    lo, hi = box
    for c in configs:
        i = index[c]
        for nxt in successors(ts, c, ndet_box):
            if all(lo <= x <= hi for x in nxt[1]):
                mat[i, index[nxt]] = True
    return configs, mat


def transitive_closure(mat):
    closed = mat.copy()
    while True:
        step = (closed.astype(np.uint8) @ closed.astype(np.uint8)) > 0
        new = closed | step
        if (new == closed).all():
            return closed
        closed = new


def reachability_matrix(ts: TransitionSystem, box: tuple, ndet_box: tuple):
    configs, mat = step_matrix(ts, box, ndet_box)
    return configs, transitive_closure(mat)


# ---------------------------------------------------------------------------
# random systems for property testing


def random_system(seed: int) -> TransitionSystem:
    """Small random system with updates biased toward staying in a box."""
    rng = random.Random(seed)
    variables = ("x",) if rng.random() < 0.4 else ("x", "y")
    locations = tuple(f"l{i}" for i in range(rng.randint(2, 4)))
    transitions = []
    for _ in range(rng.randint(2, 6)):
        src = rng.choice(locations)
        tgt = rng.choice(locations)
        rows = []
        for _ in range(rng.randint(0, 2)):
            v = rng.choice(variables)
            a = rng.choice((-2, -1, 1, 2))
            rows.append(Poly.var(v) * a + rng.randint(-3, 3))
        updated = []
        for v in variables:
            kind = rng.random()
            if kind < 0.30:
                expr = Poly.var(v)
            elif kind < 0.45:
                expr = Poly.const(rng.randint(-3, 3))
            elif kind < 0.65:
                expr = Poly.var(v) + rng.randint(-2, 2)
            elif kind < 0.75:
                expr = -Poly.var(v)
            elif kind < 0.88:
                expr = Poly.var(rng.choice(variables))
            else:
                continue  # leave v' unconstrained
            pv = Poly.var(prime(v))
            rows.append(pv - expr)
            rows.append(expr - pv)
            updated.append(v)
        if rng.random() < 0.12 and updated:
            # a residual inequality coupling a primed variable to the state
            v = rng.choice(updated)
            rows.append(Poly.var(prime(v)) - rng.randint(-2, 2))
        transitions.append(
            Transition(source=src, target=tgt, rows=tuple(rows), ndet_var=None)
        )
    return TransitionSystem(
        variables=variables,
        locations=locations,
        init=locations[0],
        theta=TRUE_ASSERTION,
        terminal=None,
        transitions=tuple(transitions),
    )


def random_predicate_map(seed: int, ts: TransitionSystem) -> PredicateMap:
    rng = random.Random(seed)
    pm: PredicateMap = {}
    for loc in ts.locations:
        roll = rng.random()
        if roll < 0.18:
            pm[loc] = PP_TRUE
            continue
        if roll < 0.32:
            pm[loc] = PP_FALSE
            continue
        disjuncts = []
        for _ in range(rng.randint(1, 2)):
            rows = []
            for _ in range(rng.randint(1, 2)):
                p = Poly.const(rng.randint(-4, 4))
                for v in ts.variables:
                    p = p + Poly.var(v) * rng.randint(-2, 2)
                if rng.random() < 0.15:
                    v = rng.choice(ts.variables)
                    p = p + Poly.var(v) * Poly.var(v)
                rows.append(p)
            disjuncts.append(Assertion(tuple(rows)))
        pm[loc] = PropPredicate(tuple(disjuncts))
    return pm


# ---------------------------------------------------------------------------
# certificate validation


@dataclass
class ValidationReport:
    ok: bool
    checks: list = field(default_factory=list)  # (name, Verdict)

    def add(self, name: str, v: Verdict):
        self.checks.append((name, v))
        if not v.ok:
            self.ok = False

    def lines(self):
        for name, v in self.checks:
            mark = "ok" if v.ok else "FAIL"
            yield f"  [{mark:4}] {name}: {v.reason}"


def _negated_map(pm: PredicateMap) -> PredicateMap:
    return {loc: complement(pp) for loc, pp in pm.items()}


def _holds(pp: PropPredicate, variables, vals) -> bool:
    return pp.holds(dict(zip(variables, vals)))


def validate_certificate(
    cert: Certificate,
    box: tuple,
    ndet_box: tuple = DEFAULT_NDET_BOX,
    horizon: int = 10_000,
) -> ValidationReport:
    """Re-check every claim a certificate makes, by enumeration only."""
    report = ValidationReport(ok=True)
    try:
        cert.system.validate()
        report.add("system", Verdict(True, "well-formed"))
    except Exception as e:
        report.add("system", Verdict(False, str(e)))
        return report
    if cert.kind == "check1":
        _validate_check1(cert, box, ndet_box, horizon, report)
    elif cert.kind == "check2":
        _validate_check2(cert, box, ndet_box, report)
    elif cert.kind == "modified":
        _validate_modified(cert, box, ndet_box, report)
    else:
        report.add("kind", Verdict(False, f"unknown kind {cert.kind!r}"))
    return report


def _restricted(cert: Certificate, report: ValidationReport):
    try:
        sub = restrict(cert.system, cert.resolution)
        report.add(
            "resolution", Verdict(True, "covers the unconstrained assignments")
        )
        return sub
    except Exception as e:
        report.add("resolution", Verdict(False, str(e)))
        return None


def _mask_env(ts: TransitionSystem, polys, box: tuple):
    m = max(abs(box[0]), abs(box[1]), 1)
    env = _grid_env(ts.variables, box, _poly_dtype(list(polys), m))
    return env, env[ts.variables[0]]


def _validate_check1(cert, box, ndet_box, horizon, report):
    ts = cert.system
    if cert.invariants is None or cert.start is None:
        report.add("shape", Verdict(False, "check1 needs invariants and start"))
        return
    sub = _restricted(cert, report)
    if sub is None:
        return
    inv = cert.invariants
    env = dict(zip(ts.variables, cert.start))
    ok = ts.theta.holds(env)
    report.add(
        "start-initial",
        Verdict(ok, "start satisfies the initial condition")
        if ok
        else Verdict(False, f"start {cert.start} violates the initial condition"),
    )
    ok = _holds(_lookup(inv, ts.init), ts.variables, cert.start)
    report.add(
        "start-in-invariant",
        Verdict(ok, "start lies inside the invariant")
        if ok
        else Verdict(False, "start escapes the invariant"),
    )
    if ts.terminal is None:
        report.add("terminal-empty", Verdict(False, "system has no terminal location"))
        return
    term_pred = _lookup(inv, ts.terminal)
    if term_pred.is_false_literal:
        report.add(
            "terminal-empty", Verdict(True, "invariant is false at the terminal")
        )
    else:
        denv, ref = _mask_env(ts, _pm_polys(inv), box)
        occupied = bool(_pred_mask(term_pred, denv, ref).any())
        report.add(
            "terminal-empty",
            Verdict(not occupied, "invariant empty at the terminal over the box")
            if not occupied
            else Verdict(False, "invariant admits terminal configurations"),
        )
    report.add("inductive", is_inductive(sub, inv, box, ndet_box))
    report.add("proper", is_proper_underapprox(ts, sub, box, ndet_box))
    # independent evidence: drive the pinned system and watch it avoid lout
    res = reach.bfs(
        sub,
        [(ts.init, cert.start)],
        lambda l, x: l == ts.terminal,
        ndet_box,
        max_explored=horizon,
    )
    report.add(
        "run-avoids-terminal",
        Verdict(not res.found, f"terminal unreachable in {res.explored} expansions")
        if not res.found
        else Verdict(False, "the pinned run reaches the terminal"),
    )


def _backward_core(cert, box, ndet_box, report):
    """The backward-inductive half shared by check2 and the modified check.

    Returns the restricted system on success, None when a structural
    problem makes the remaining audits meaningless.
    """
    ts = cert.system
    if cert.invariants is None or cert.backward is None:
        report.add("shape", Verdict(False, "needs invariants and a backward map"))
        return None
    if ts.terminal is None:
        report.add("terminal", Verdict(False, "system has no terminal location"))
        return None
    inv, bwd = cert.invariants, cert.backward
    report.add("invariant-inductive", is_inductive(ts, inv, box, ndet_box))
    denv, ref = _mask_env(ts, _pm_polys(inv) + list(ts.theta.rows), box)
    theta_mask = _rows_mask(ts.theta.rows, denv, ref)
    init_bad = theta_mask & ~_pred_mask(_lookup(inv, ts.init), denv, ref)
    report.add(
        "invariant-initiation",
        Verdict(not init_bad.any(), "every boxed initial state is covered")
        if not init_bad.any()
        else Verdict(False, "an initial state escapes the invariant"),
    )
    sub = _restricted(cert, report)
    if sub is None:
        return None
    seed = _lookup(inv, ts.terminal)
    if len(seed.disjuncts) != 1:
        report.add(
            "reversal-seed",
            Verdict(False, "terminal predicate must be a single conjunction"),
        )
        return None
    rev = reverse(sub, seed.disjuncts[0])
    report.add("backward-inductive", is_inductive(rev, bwd, box, ndet_box))
    denv, ref = _mask_env(ts, _pm_polys(bwd) + list(seed.disjuncts[0].rows), box)
    leak = _rows_mask(seed.disjuncts[0].rows, denv, ref) & ~_pred_mask(
        _lookup(bwd, ts.terminal), denv, ref
    )
    report.add(
        "terminal-seed-in-backward",
        Verdict(not leak.any(), "terminal predicate implies the backward set")
        if not leak.any()
        else Verdict(False, "a seeded terminal valuation escapes the backward set"),
    )
    report.add("proper", is_proper_underapprox(ts, sub, box, ndet_box))
    return sub


def _escape_path_audit(cert, box, report, guide=None):
    """Some reachable configuration must lie outside the backward set:
    replay the stored path, or search for one."""
    ts = cert.system
    bwd = cert.backward
    path = cert.reach_path
    if path is not None:
        valid = reach.path_is_valid(ts, path)
        end_loc, end_vals = path[-1]
        escapes = not _holds(_lookup(bwd, end_loc), ts.variables, end_vals)
        report.add(
            "escape-path",
            Verdict(True, f"replayed {len(path)} configurations to {end_loc}")
            if valid and escapes
            else Verdict(False, "stored path fails to replay or to escape"),
        )
        return
    neg = _negated_map(bwd)
    try:
        res = reach.find_reachable(
            ts,
            lambda l, v: _holds(neg[l], ts.variables, v),
            box=box,
            guide=guide,
        )
    except reach.ReachError as e:
        report.add("escape-path", Verdict(False, str(e)))
        return
    report.add(
        "escape-path",
        Verdict(res.found, f"search explored {res.explored} configurations")
        if res.found
        else Verdict(False, "no escape found within the search budget"),
    )


def _validate_check2(cert, box, ndet_box, report):
    ts = cert.system
    if _backward_core(cert, box, ndet_box, report) is None:
        return
    bwd = cert.backward
    if cert.breach is None:
        report.add("breach", Verdict(False, "certificate carries no breach witness"))
        return
    (bsrc, btgt), x, xp = cert.breach
    env = dict(zip(ts.variables, x))
    for v, val in zip(ts.variables, xp):
        env[prime(v)] = val
    ok = (
        any(t.holds(env) for t in ts.outgoing(bsrc) if t.target == btgt)
        and _holds(_lookup(bwd, bsrc), ts.variables, x)
        and not _holds(_lookup(bwd, btgt), ts.variables, xp)
    )
    report.add(
        "breach",
        Verdict(True, f"step {bsrc}->{btgt} exits the backward set")
        if ok
        else Verdict(False, "breach does not replay"),
    )
    _escape_path_audit(cert, box, report, guide=(bsrc, x))


def _validate_modified(cert, box, ndet_box, report):
    if _backward_core(cert, box, ndet_box, report) is None:
        return
    if cert.branch_system is None or cert.descent is None or cert.rank is None:
        report.add(
            "shape",
            Verdict(False, "modified check needs branch system, descent map, rank"),
        )
        return
    tb = cert.branch_system
    try:
        tb.validate()
        report.add("branch-system", Verdict(True, "well-formed"))
    except Exception as e:
        report.add("branch-system", Verdict(False, str(e)))
        return
    if cert.start is None:
        report.add("start", Verdict(False, "modified check needs a start valuation"))
        return
    env = dict(zip(tb.variables, cert.start))
    ok = tb.theta.holds(env) and _holds(
        _lookup(cert.descent, tb.init), tb.variables, cert.start
    )
    report.add(
        "start-in-descent",
        Verdict(ok, "start satisfies the initial condition and descent region")
        if ok
        else Verdict(False, "start escapes the descent region"),
    )
    rank0 = cert.rank.get(tb.init, Poly.const(0)).evaluate(env)
    report.add("descent", descend(cert, tb, (tb.init, cert.start), int(rank0) + 2, ndet_box))
    _escape_path_audit(cert, box, report)


def descend(
    cert: Certificate,
    tb: TransitionSystem,
    start: Config,
    cap: int,
    ndet_box: tuple,
) -> Verdict:
    """Replay the ranked walk on the branch-form system.

    From *start*, repeatedly take the first successor that stays in the
    descent region while strictly decreasing the rank, until a
    configuration outside the backward set is reached. The rank bounds the
    number of steps, so the walk either lands or fails within *cap*.
    """
    bwd, dsc, rank = cert.backward, cert.descent, cert.rank
    cfg = start
    for step in range(cap + 1):
        loc, vals = cfg
        env = dict(zip(tb.variables, vals))
        if not _holds(_lookup(bwd, loc), tb.variables, vals):
            return Verdict(
                True, f"escaped the backward set at {loc} after {step} steps"
            )
        f_here = rank.get(loc, Poly.const(0)).evaluate(env)
        if f_here < 0:
            return Verdict(False, f"rank went negative at {loc}", ((loc,), vals, None))
        nxt = None
        for cand in successors(tb, cfg, ndet_box):
            nloc, nvals = cand
            if not _holds(_lookup(dsc, nloc), tb.variables, nvals):
                continue
            nenv = dict(zip(tb.variables, nvals))
            if rank.get(nloc, Poly.const(0)).evaluate(nenv) <= f_here - 1:
                nxt = cand
                break
        if nxt is None:
            return Verdict(False, f"no ranked successor at {loc}", ((loc,), vals, None))
        cfg = nxt
    return Verdict(False, f"walk exceeded the rank bound of {cap} steps")
