"""Bounded explicit-state reachability for transition systems.

Breadth-first search from the initial states, with nondeterministic values
drawn from a widening ladder of windows. Search is complete only relative
to the window and the exploration budget, which is exactly what the
certificate pipeline needs: a found path is hard evidence (it replays
against the transition relations), while exhaustion is merely "not found
here".

The guided mode targets an exact configuration first — when the solver
hands us the configuration where an inductiveness breach fires, driving
the search straight at it is far cheaper than scanning for the breach
predicate's whole complement — and falls back to a general predicate
search on a miss.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .tsys import (
    Config,
    TransitionSystem,
    _single_var_bounds,
    prime,
    successors,
)

# Successive windows for unconstrained assignments; each contains the last.
NDET_LADDER = ((0, 0), (-1, 1), (-4, 3), (-16, 15), (-64, 63))

DEFAULT_MAX_EXPLORED = 10_000
MAX_SEEN = 1_000_000


class ReachError(ValueError):
    pass


@dataclass(frozen=True)
class ReachResult:
    status: str  # "found" | "exhausted" | "budget"
    path: Optional[tuple]  # ((loc, vals), ...) from an initial state
    explored: int  # configurations expanded in the winning (or last) attempt
    ndet_box: Optional[tuple]  # window the result was produced under

    @property
    def found(self) -> bool:
        return self.status == "found"


def initial_states(ts: TransitionSystem, box: Optional[tuple] = None) -> list:
    """Enumerate configurations satisfying the initial condition.

    Bounds for each variable come from the initial condition itself when it
    pins an interval; otherwise *box* supplies them. An unbounded variable
    with no box is an error rather than a silent guess.
    """
    lo, hi = _single_var_bounds(ts.theta.rows)
    ranges = []
    for v in ts.variables:
        vlo = lo.get(v)
        vhi = hi.get(v)
        if box is not None:
            vlo = box[0] if vlo is None else max(vlo, box[0])
            vhi = box[1] if vhi is None else min(vhi, box[1])
        if vlo is None or vhi is None:
            raise ReachError(
                f"initial value of {v!r} is unbounded; supply a search box"
            )
        ranges.append(range(vlo, vhi + 1))
    out = []
    stack = [(0, ())]
    while stack:
        i, acc = stack.pop()
        if i == len(ranges):
            env = dict(zip(ts.variables, acc))
            if ts.theta.holds(env):
                out.append((ts.init, acc))
            continue
        for val in reversed(ranges[i]):
            stack.append((i + 1, acc + (val,)))
        if len(stack) > MAX_SEEN:
            raise ReachError("initial state space too large; tighten the box")
    return out


def bfs(
    ts: TransitionSystem,
    start: Sequence[Config],
    target: Callable[[str, tuple], bool],
    ndet_box: tuple,
    max_explored: int = DEFAULT_MAX_EXPLORED,
) -> ReachResult:
    """Search forward from *start* until *target(loc, vals)* holds."""
    parents: dict = {}
    queue: deque = deque()
    for cfg in start:
        if cfg not in parents:
            parents[cfg] = None
            queue.append(cfg)
    for cfg in start:
        if target(cfg[0], cfg[1]):
            return ReachResult("found", (cfg,), 0, ndet_box)
    explored = 0
    while queue:
        if explored >= max_explored:
            return ReachResult("budget", None, explored, ndet_box)
        cfg = queue.popleft()
        explored += 1
        for nxt in successors(ts, cfg, ndet_box):
            if nxt in parents:
                continue
            parents[nxt] = cfg
            if target(nxt[0], nxt[1]):
                return ReachResult("found", _unwind(parents, nxt), explored, ndet_box)
            if len(parents) > MAX_SEEN:
                return ReachResult("budget", None, explored, ndet_box)
            queue.append(nxt)
    return ReachResult("exhausted", None, explored, ndet_box)


def _unwind(parents: dict, cfg: Config) -> tuple:
    path = [cfg]
    while parents[cfg] is not None:
        cfg = parents[cfg]
        path.append(cfg)
    path.reverse()
    return tuple(path)


def find_reachable(
    ts: TransitionSystem,
    target: Callable[[str, tuple], bool],
    box: Optional[tuple] = None,
    guide: Optional[Config] = None,
    ladder: Sequence[tuple] = NDET_LADDER,
    max_explored: int = DEFAULT_MAX_EXPLORED,
) -> ReachResult:
    """Find a target configuration, widening the nondet window as needed.

    With a *guide* the search first drives at that exact configuration and
    then takes any single step from it into the target set; if that misses,
    the rung falls back to searching for the target directly.
    """
    start = initial_states(ts, box)
    hit_budget = False
    last = ReachResult("exhausted", None, 0, None)
    for rung in ladder:
        if guide is not None:
            gl, gv = guide
            res = bfs(
                ts, start, lambda l, x: (l, x) == (gl, gv), rung, max_explored
            )
            if res.found:
                for nxt in successors(ts, guide, rung):
                    if target(nxt[0], nxt[1]):
                        return ReachResult(
                            "found", res.path + (nxt,), res.explored, rung
                        )
            elif res.status == "budget":
                hit_budget = True
        res = bfs(ts, start, target, rung, max_explored)
        if res.found:
            return res
        if res.status == "budget":
            hit_budget = True
        last = res
    if hit_budget:
        return ReachResult("budget", None, last.explored, last.ndet_box)
    return last


def step_exists(ts: TransitionSystem, a: Config, b: Config) -> bool:
    """Is (a, b) a step of the transition relation? Checked on the rows
    directly, so it is exact regardless of any enumeration window."""
    (la, xa), (lb, xb) = a, b
    env = dict(zip(ts.variables, xa))
    for v, val in zip(ts.variables, xb):
        env[prime(v)] = val
    return any(
        t.holds(env) for t in ts.outgoing(la) if t.target == lb
    )


def path_is_valid(
    ts: TransitionSystem, path: Sequence[Config], from_initial: bool = True
) -> bool:
    """Replay a path against the system: each hop must be a genuine step,
    and (by default) the head must satisfy the initial condition."""
    if not path:
        return False
    if from_initial:
        loc, vals = path[0]
        if loc != ts.init or not ts.theta.holds(dict(zip(ts.variables, vals))):
            return False
    return all(step_exists(ts, a, b) for a, b in zip(path, path[1:]))
