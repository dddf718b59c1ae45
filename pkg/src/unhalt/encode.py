"""Template construction and constraint generation for the three checks.

The encoders turn "does a certificate of this shape exist?" into an
existentially quantified constraint problem over template coefficients.
Universally quantified entailments {g_i >= 0} |= h >= 0 are eliminated by
nonnegative-multiplier bases: h = lam_0 + sum lam_i * b_i, matched
coefficient-by-coefficient per program monomial. With degree-1 antecedents
the basis is the antecedent rows themselves (Farkas); for higher degrees
products of antecedent rows join the basis, capped so no constraint exceeds
degree two in the unknowns (multiplier times template coefficient).

Symbolic rows are ordinary :class:`~unhalt.poly.Poly` values whose variables
mix program variables with unknown names; an unknown is anything the
surrounding :class:`ConstraintProblem` has declared. Everything here is
deterministic: declaration order, multiplier numbering, and monomial order
are fixed by construction, so identical inputs emit identical solver text.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .poly import ONE_MONO, Monomial, Poly
from .tsys import (
    Assertion,
    Transition,
    TransitionSystem,
    TsysError,
    analyze_transition,
    prime,
    restrict,
    swap_primes,
)

NDET_PREFIX = "__ndet_"  # kept in sync with the frontend's branching rewrite


class EncodeError(ValueError):
    pass


class PathExplosion(EncodeError):
    """Too many simple paths between a cutpoint pair."""


# ---------------------------------------------------------------------------
# template parameters


@dataclass(frozen=True)
class TemplateParams:
    """Template shape: at most `d` disjuncts of at most `c` conjuncts each.

    `D` caps polynomial degree. Resolutions use degree D exactly (D = 0
    means a constant choice); predicate and ranking rows are never less
    than linear, so their degree is max(1, D).
    """

    c: int
    d: int
    D: int

    def __post_init__(self):
        if self.c < 1 or self.d < 1 or self.D < 0:
            raise EncodeError(f"bad template parameters {(self.c, self.d, self.D)}")

    @property
    def row_degree(self) -> int:
        return max(1, self.D)


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]", "_", name)


def monomial_basis(variables: Sequence[str], degree: int) -> tuple:
    """All monomials over *variables* up to *degree*, graded-lex ordered."""
    out = [ONE_MONO]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(variables, deg):
            counts: dict[str, int] = {}
            for v in combo:
                counts[v] = counts.get(v, 0) + 1
            out.append(tuple(sorted(counts.items())))
    return tuple(out)


def _mono_sort_key(m: Monomial):
    return (sum(e for _, e in m), m)


@dataclass(frozen=True)
class CutpointSet:
    """Locations carrying templates; must cut every cycle of the graph."""

    locations: tuple

    def __contains__(self, loc: str) -> bool:
        return loc in self.locations


def all_locations(ts: TransitionSystem) -> CutpointSet:
    return CutpointSet(tuple(ts.locations))


def default_cutpoints(ts: TransitionSystem) -> CutpointSet:
    """Loop heads plus the endpoints of nondeterministic assignments.

    Loop heads are back-edge targets of a depth-first walk in declaration
    order, which cuts every cycle. The initial and terminal locations always
    carry templates, and the endpoints of each nondeterministic assignment
    do too, so that the non-inductiveness witness can sit next to the
    resolved choice.
    """
    outgoing: dict[str, list] = {loc: [] for loc in ts.locations}
    for t in ts.transitions:
        outgoing[t.source].append(t.target)
    heads = set()
    state: dict[str, int] = {}
    for root in ts.locations:
        if state.get(root):
            continue
        stack = [(root, iter(outgoing[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                mark = state.get(nxt)
                if mark == 1:
                    heads.add(nxt)
                elif mark != 2:
                    state[nxt] = 1
                    stack.append((nxt, iter(outgoing[nxt])))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                stack.pop()
    keep = heads | {ts.init}
    if ts.terminal is not None:
        keep.add(ts.terminal)
    for t in ts.ndet_transitions:
        keep.add(t.source)
        keep.add(t.target)
    return CutpointSet(tuple(loc for loc in ts.locations if loc in keep))


def _check_cutpoints(
    variables, locations, init, terminal, transitions, cuts: CutpointSet
) -> None:
    locs = set(locations)
    extra = set(cuts.locations) - locs
    if extra:
        raise EncodeError(f"cutpoints off the map: {sorted(extra)}")
    if init not in cuts.locations:
        raise EncodeError("the initial location must carry a template")
    if terminal is not None and terminal not in cuts.locations:
        raise EncodeError("the terminal location must carry a template")
    # every cycle must contain a cutpoint: the non-cutpoint subgraph is acyclic
    cut = set(cuts.locations)
    adj: dict[str, list] = {loc: [] for loc in locations if loc not in cut}
    for t in transitions:
        if t.source not in cut and t.target not in cut:
            adj[t.source].append(t.target)
    state: dict[str, int] = {}
    for start in adj:
        if state.get(start):
            continue
        stack = [(start, iter(adj[start]))]
        state[start] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if state.get(nxt) == 1:
                    raise EncodeError(
                        f"cycle through {nxt!r} avoids every cutpoint"
                    )
                if state.get(nxt) != 2:
                    state[nxt] = 1
                    stack.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                stack.pop()


# ---------------------------------------------------------------------------
# templates


@dataclass(frozen=True)
class Templates:
    """Symbolic predicate map, resolution templates, and their unknowns."""

    predicate: dict  # location -> tuple of disjuncts, each a tuple of rows
    resolution: dict  # transition key -> symbolic polynomial
    unknowns: tuple  # deterministic declaration order


def _template_row(stem: str, variables: Sequence[str], degree: int, sink: list) -> Poly:
    row = Poly()
    for m, mono in enumerate(monomial_basis(variables, degree)):
        name = f"{stem}_coef_{m}"
        sink.append(name)
        row = row + Poly.var(name) * Poly.monomial(mono)
    return row


def make_templates(
    ts: TransitionSystem,
    params: TemplateParams,
    cutpoints: Optional[CutpointSet] = None,
    *,
    prefix: str = "I",
    with_resolution: bool = True,
) -> Templates:
    """Fresh type-(c,d) templates at each cutpoint plus resolution templates."""
    cuts = cutpoints if cutpoints is not None else all_locations(ts)
    names: list = []
    predicate: dict = {}
    for loc in ts.locations:
        if loc not in cuts.locations:
            continue
        disjuncts = []
        for j in range(params.d):
            rows = tuple(
                _template_row(
                    f"{prefix}_{_sanitize(loc)}_{j}_{k}",
                    ts.variables,
                    params.row_degree,
                    names,
                )
                for k in range(params.c)
            )
            disjuncts.append(rows)
        predicate[loc] = tuple(disjuncts)
    resolution: dict = {}
    if with_resolution:
        for t in ts.transitions:
            if t.ndet_var is None:
                continue
            stem = f"Rna_{_sanitize(t.source)}_{_sanitize(t.target)}_{t.ndet_var}"
            resolution[t.key()] = _template_row(stem, ts.variables, params.D, names)
    return Templates(predicate=predicate, resolution=resolution, unknowns=tuple(names))


# ---------------------------------------------------------------------------
# constraint problems


@dataclass
class EntailmentRecord:
    """Audit trail: one encoded entailment premise |= consequent.

    `guard` is None for unconditional blocks, else a (selector, value) pair;
    the block is binding in a model only when the selector takes the value.
    """

    tag: str
    premise: tuple
    consequent: Poly
    guard: Optional[tuple]
    lam_names: tuple
    basis: tuple


@dataclass
class ConstraintProblem:
    check: str
    params: TemplateParams
    meta: dict = field(default_factory=dict)
    declarations: list = field(default_factory=list)  # (name, sort) in order
    assertions: list = field(default_factory=list)  # rendered terms
    entailments: list = field(default_factory=list)
    _sorts: dict = field(default_factory=dict)
    _blocks: int = 0

    def declare(self, name: str, sort: str) -> str:
        if name in self._sorts:
            raise EncodeError(f"unknown {name!r} declared twice")
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise EncodeError(f"unusable symbol name {name!r}")
        self._sorts[name] = sort
        self.declarations.append((name, sort))
        return name

    def declare_all(self, names: Sequence[str], sort: str) -> None:
        for n in names:
            self.declare(n, sort)

    def sort_of(self, name: str) -> Optional[str]:
        return self._sorts.get(name)

    def is_unknown(self, name: str) -> bool:
        return name in self._sorts

    def assert_term(self, term: str) -> None:
        self.assertions.append(term)

    def next_block(self) -> int:
        n = self._blocks
        self._blocks += 1
        return n

    @property
    def unknowns(self) -> tuple:
        return tuple(n for n, _ in self.declarations)

    def emit(self) -> str:
        lines = ["(set-logic ALL)"]
        for name, sort in self.declarations:
            lines.append(f"(declare-const {name} {sort})")
        for term in self.assertions:
            lines.append(f"(assert {term})")
        lines.append("(check-sat)")
        lines.append("(get-model)")
        return "\n".join(lines) + "\n"


# -- term rendering ---------------------------------------------------------


def _fmt_int(k: int) -> str:
    return str(k) if k >= 0 else f"(- {-k})"


def _fmt_real(k: int) -> str:
    return f"{k}.0" if k >= 0 else f"(- {-k}.0)"


def render_int(p: Poly) -> str:
    """Poly as an integer-sorted term; every variable must be Int-sorted."""
    terms = []
    for mono in sorted(p.terms, key=_mono_sort_key):
        c = p.terms[mono]
        factors = []
        if c != 1 or not mono:
            factors.append(_fmt_int(c))
        for v, e in mono:
            factors.extend([v] * e)
        terms.append(factors[0] if len(factors) == 1 else f"(* {' '.join(factors)})")
    if not terms:
        return "0"
    return terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"


def render_real(p: Poly, problem: ConstraintProblem) -> str:
    """Poly as a real-sorted term, wrapping Int-sorted atoms in to_real."""
    terms = []
    for mono in sorted(p.terms, key=_mono_sort_key):
        c = p.terms[mono]
        reals, ints = [], []
        for v, e in mono:
            (reals if problem.sort_of(v) == "Real" else ints).extend([v] * e)
        if reals:
            factors = list(reals)
            if ints:
                factors.extend(f"(to_real {v})" for v in ints)
            if c != 1:
                factors.append(_fmt_real(c))
            terms.append(factors[0] if len(factors) == 1 else f"(* {' '.join(factors)})")
        else:
            factors = []
            if c != 1 or not mono:
                factors.append(_fmt_int(c))
            factors.extend(ints)
            inner = factors[0] if len(factors) == 1 else f"(* {' '.join(factors)})"
            terms.append(f"(to_real {inner})")
    if not terms:
        return "0.0"
    return terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"


def _and(parts: Sequence[str]) -> str:
    parts = [s for s in parts if s != "true"]
    if not parts:
        return "true"
    if "false" in parts:
        return "false"
    return parts[0] if len(parts) == 1 else f"(and {' '.join(parts)})"


def _or(parts: Sequence[str]) -> str:
    parts = [s for s in parts if s != "false"]
    if not parts:
        return "false"
    if "true" in parts:
        return "true"
    return parts[0] if len(parts) == 1 else f"(or {' '.join(parts)})"


def _guard_term(guard: Optional[tuple]) -> Optional[str]:
    if guard is None:
        return None
    name, value = guard
    return f"(= {name} {_fmt_int(value)})"


# -- entailment elimination --------------------------------------------------


def _coef_table(
    p: Poly, problem: ConstraintProblem, degree_cap: int, unknown_cap: int = 1
) -> dict:
    """Group a mixed polynomial by program monomial.

    Returns {program monomial: coefficient Poly over unknowns}. Rejects
    program degree beyond *degree_cap* and unknown degree beyond
    *unknown_cap* — 1 for template rows as written, 2 once a multiplier has
    been folded in (anything deeper means an input row was already
    nonlinear in its coefficients).
    """
    table: dict[Monomial, Poly] = {}
    for mono, c in p.terms.items():
        prog = tuple((v, e) for v, e in mono if not problem.is_unknown(v))
        unk = tuple((v, e) for v, e in mono if problem.is_unknown(v))
        if sum(e for _, e in prog) > degree_cap:
            raise EncodeError(
                f"degree {sum(e for _, e in prog)} exceeds the template bound {degree_cap}"
            )
        if sum(e for _, e in unk) > unknown_cap:
            raise EncodeError(f"coefficient nonlinear in unknowns: {p}")
        table[prog] = table.get(prog, Poly()) + Poly.monomial(unk, c)
    return {m: q for m, q in table.items() if not q.is_zero()}


def _prog_degree(p: Poly, problem: ConstraintProblem) -> int:
    best = 0
    for mono in p.terms:
        best = max(best, sum(e for v, e in mono if not problem.is_unknown(v)))
    return best


def _product_basis(rows: Sequence[Poly], problem: ConstraintProblem, cap: int) -> list:
    """Pairwise antecedent products up to total degree *cap*.

    At most one factor may carry unknowns; a product of two symbolic rows
    would be cubic once multiplied by its nonnegative multiplier, so such
    pairs are omitted (a deliberate narrowing of the basis).
    """
    out = []
    degs = [_prog_degree(r, problem) for r in rows]
    syms = [bool(r.variables() & problem._sorts.keys()) for r in rows]
    for i in range(len(rows)):
        if degs[i] < 1:
            continue
        for j in range(i, len(rows)):
            if degs[j] < 1 or degs[i] + degs[j] > cap:
                continue
            if syms[i] and syms[j]:
                continue
            out.append(rows[i] * rows[j])
    return out


def encode_entailment(
    problem: ConstraintProblem,
    premise: Sequence[Poly],
    consequent: Poly,
    *,
    guard: Optional[tuple] = None,
    tag: str = "e",
) -> tuple:
    """Encode {premise >= 0} |= consequent >= 0 via nonnegative multipliers.

    Emits lam_0 + sum lam_i * basis_i = consequent as per-monomial matching
    equations, guarded by the selector equality when *guard* is given.
    Returns the multiplier names.
    """
    cap = problem.params.row_degree
    premise = tuple(premise)
    basis = [Poly.const(1)] + list(premise)
    if problem.params.D >= 2:
        basis.extend(_product_basis(premise, problem, problem.params.D))
    block = problem.next_block()
    lams = tuple(f"lam_e{block}_{i}" for i in range(len(basis)))
    for name in lams:
        problem.declare(name, "Real")
        problem.assert_term(f"(>= {name} 0.0)")
    combo = Poly()
    for name, b in zip(lams, basis):
        combo = combo + Poly.var(name) * b
    diff = consequent - combo
    cons_cap = max(cap, problem.params.D)
    equations = []
    for mono, coefs in sorted(
        _coef_table(diff, problem, cons_cap, unknown_cap=2).items(),
        key=lambda kv: _mono_sort_key(kv[0]),
    ):
        equations.append(f"(= {render_real(coefs, problem)} 0.0)")
    g = _guard_term(guard)
    if equations:
        body = _and(equations)
        problem.assert_term(body if g is None else f"(=> {g} {body})")
    problem.entailments.append(
        EntailmentRecord(
            tag=tag,
            premise=premise,
            consequent=consequent,
            guard=guard,
            lam_names=lams,
            basis=tuple(basis),
        )
    )
    return lams


def entail_into_predicate(
    problem: ConstraintProblem,
    premise: Sequence[Poly],
    disjuncts: Sequence,
    sel_name: str,
    *,
    tag: str,
) -> None:
    """Premise must land in one target disjunct (or prove itself empty).

    The integer selector picks the target: value 0 derives -1 >= 0 from the
    premise (the premise region is empty), value k >= 1 entails every row of
    target disjunct k.
    """
    problem.declare(sel_name, "Int")
    problem.assert_term(
        _and([f"(>= {sel_name} 0)", f"(<= {sel_name} {len(disjuncts)})"])
    )
    encode_entailment(
        problem, premise, Poly.const(-1), guard=(sel_name, 0), tag=f"{tag}_bot"
    )
    for k, rows in enumerate(disjuncts, start=1):
        for r, row in enumerate(rows):
            encode_entailment(
                problem, premise, row, guard=(sel_name, k), tag=f"{tag}_k{k}_r{r}"
            )


# -- point membership (no multipliers: direct substitution) ------------------


def _point_env(variables: Sequence[str], names: Mapping[str, str]) -> dict:
    return {v: Poly.var(names[v]) for v in variables}


def pp_member_term(
    problem: ConstraintProblem, disjuncts: Sequence, env: Mapping[str, Poly]
) -> str:
    """The point given by *env* satisfies the predicate."""
    alts = []
    for rows in disjuncts:
        alts.append(
            _and([f"(>= {render_int(r.substitute(env))} 0)" for r in rows])
        )
    return _or(alts)


def pp_excluded_term(
    problem: ConstraintProblem, disjuncts: Sequence, env: Mapping[str, Poly]
) -> str:
    """The point given by *env* violates every disjunct (integer tightening)."""
    needs = []
    for rows in disjuncts:
        needs.append(
            _or([f"(>= {render_int((-r - 1).substitute(env))} 0)" for r in rows])
        )
    return _and(needs)


# ---------------------------------------------------------------------------
# cutpoint paths


@dataclass(frozen=True)
class ComposedPath:
    """A simple cutpoint-to-cutpoint path with its composed relation.

    Rows relate the source valuation (unprimed) to the target valuation
    (primed); intermediate stages are renamed to fresh `__via` variables.
    """

    source: str
    target: str
    rows: tuple
    edges: tuple

    @property
    def steps(self) -> int:
        return len(self.edges)


def _stage_name(i: int, v: str) -> str:
    return f"__via{i}__{v}"


def compose_path(variables: Sequence[str], edges: Sequence[Transition]) -> ComposedPath:
    k = len(edges)
    rows = []
    for i, t in enumerate(edges):
        ren = {}
        for v in variables:
            ren[v] = v if i == 0 else _stage_name(i, v)
            ren[prime(v)] = prime(v) if i == k - 1 else _stage_name(i + 1, v)
        rows.extend(p.rename(ren) for p in t.rows)
    return ComposedPath(edges[0].source, edges[-1].target, tuple(rows), tuple(edges))


def simple_paths(
    variables: Sequence[str],
    transitions: Sequence[Transition],
    cuts: CutpointSet,
    cap: int = 256,
) -> tuple:
    """All simple cutpoint-to-cutpoint paths, intermediate locations uncut."""
    outgoing: dict[str, list] = {}
    for t in transitions:
        outgoing.setdefault(t.source, []).append(t)
    cut = set(cuts.locations)
    out = []
    counts: dict[tuple, int] = {}
    for start in cuts.locations:
        stack = [(start, [])]
        while stack:
            loc, trail = stack.pop()
            for t in reversed(outgoing.get(loc, [])):
                if t.target in cut:
                    pair = (start, t.target)
                    counts[pair] = counts.get(pair, 0) + 1
                    if counts[pair] > cap:
                        raise PathExplosion(
                            f"more than {cap} simple paths from {start!r} to {t.target!r}"
                        )
                    out.append(compose_path(variables, trail + [t]))
                elif all(e.target != t.target for e in trail):
                    stack.append((t.target, trail + [t]))
    out.sort(
        key=lambda p: (
            cuts.locations.index(p.source),
            cuts.locations.index(p.target),
            p.steps,
        )
    )
    return tuple(out)


# ---------------------------------------------------------------------------
# inductiveness


def _substituted_view(variables: Sequence[str], path: ComposedPath) -> tuple:
    """Eliminate pinned primes from a path by stagewise substitution.

    Returns ``(extra_rows, subst)`` where *subst* maps each primed variable
    to its value at the end of the path (an expression over the source
    valuation and any surviving stage symbols) and *extra_rows* are the
    guard/relational rows with the substitution applied. A variable left
    unpinned by some step keeps a fresh stage symbol (the final stage uses
    the primed name itself): such symbols are universally quantified, so
    coefficient matching treats them exactly as the step semantics
    requires.
    """
    k = len(path.edges)
    cur = {v: Poly.var(v) for v in variables}
    extra = []
    for i, t in enumerate(path.edges):
        shape = analyze_transition(variables, t)
        upd = dict(shape.updates)
        nxt = {}
        for v in variables:
            if v in upd:
                nxt[v] = upd[v].substitute(cur)
            else:
                nxt[v] = Poly.var(prime(v) if i == k - 1 else _stage_name(i + 1, v))
        extra.extend(g.substitute(cur) for g in shape.guards)
        env = dict(cur)
        env.update({prime(v): nxt[v] for v in variables})
        extra.extend(r.substitute(env) for r in shape.residual)
        cur = nxt
    return tuple(extra), {prime(v): cur[v] for v in variables}


def encode_inductive(
    problem: ConstraintProblem,
    pm: Mapping[str, Sequence],
    paths: Sequence[ComposedPath],
    variables: Sequence[str],
    *,
    tag: str,
) -> None:
    """Closure of the predicate map along every composed path.

    For each path and source disjunct, a selector either lands the composed
    image in some target disjunct or derives a contradiction from the
    premise. Locations mapped to zero disjuncts behave as `false`: nothing
    leaves them, and nothing may enter them from a nonempty premise.

    Functional steps are substituted into the target rows rather than
    carried as update rows, which keeps the multiplier count proportional
    to the guards actually present. Paths whose substituted rows would
    exceed the degree caps keep the relational encoding instead.
    """
    primed = {v: prime(v) for v in variables}
    cap = max(problem.params.row_degree, problem.params.D)
    for p_idx, path in enumerate(paths):
        src_disjuncts = pm[path.source]
        extra, subst = _substituted_view(variables, path)
        step_rows = tuple(extra)
        tgt_disjuncts = [
            tuple(row.rename(primed).substitute(subst) for row in rows)
            for rows in pm[path.target]
        ]
        flat = list(step_rows) + [r for rows in tgt_disjuncts for r in rows]
        if any(_prog_degree(r, problem) > cap for r in flat):
            # composed updates pushed some row past the degree bound; keep
            # the relational form for this path instead
            step_rows = path.rows
            tgt_disjuncts = [
                tuple(row.rename(primed) for row in rows) for rows in pm[path.target]
            ]
        for j, src_rows in enumerate(src_disjuncts):
            premise = tuple(src_rows) + step_rows
            entail_into_predicate(
                problem,
                premise,
                tgt_disjuncts,
                f"sel_{tag}_p{p_idx}_j{j}",
                tag=f"{tag}_p{p_idx}_j{j}",
            )


def _settle_cutpoints(variables, graphs, cuts: CutpointSet, locations) -> CutpointSet:
    """The given cutpoints, or every location if any graph's paths explode.

    Path counts depend only on the location graph, so probing the raw edge
    lists up front fixes the template locations before anything is declared.
    """
    try:
        for g in graphs:
            simple_paths(variables, g, cuts)
        return cuts
    except PathExplosion:
        return CutpointSet(tuple(locations))


# ---------------------------------------------------------------------------
# Check 1


def encode_check1(
    ts: TransitionSystem,
    params: TemplateParams,
    cutpoints: Optional[CutpointSet] = None,
) -> ConstraintProblem:
    """An inductive trap for one initial configuration, avoiding the exit.

    Feasible models resolve the nondeterministic assignments, pick an
    initial valuation, and exhibit a predicate map that is closed under the
    restricted steps, contains the initial valuation, and is empty at the
    terminal location.
    """
    cuts = cutpoints if cutpoints is not None else default_cutpoints(ts)
    _check_cutpoints(ts.variables, ts.locations, ts.init, ts.terminal, ts.transitions, cuts)
    cuts = _settle_cutpoints(ts.variables, [ts.transitions], cuts, ts.locations)
    problem = ConstraintProblem(check="check1", params=params)
    tmpl = make_templates(ts, params, cuts, prefix="I")
    problem.declare_all(tmpl.unknowns, "Int")
    restricted = restrict(ts, tmpl.resolution)
    paths = simple_paths(ts.variables, restricted.transitions, cuts)
    pm = dict(tmpl.predicate)
    if ts.terminal is not None:
        pm[ts.terminal] = ()

    cinit = {v: problem.declare(f"cinit_{v}", "Int") for v in ts.variables}
    env = _point_env(ts.variables, cinit)
    for row in ts.theta.rows:
        problem.assert_term(f"(>= {render_int(row.substitute(env))} 0)")
    problem.assert_term(pp_member_term(problem, pm[ts.init], env))
    encode_inductive(problem, pm, paths, ts.variables, tag="ind")

    problem.meta.update(
        kind="check1",
        system=ts,
        cutpoints=cuts,
        predicate=pm,
        resolution=tmpl.resolution,
        cinit=cinit,
        paths=paths,
    )
    return problem


# ---------------------------------------------------------------------------
# Check 2 (and the shared backward block)


def _reversed_edges(variables: Sequence[str], transitions: Sequence[Transition]) -> list:
    return [
        Transition(
            source=t.target,
            target=t.source,
            rows=tuple(swap_primes(p, variables) for p in t.rows),
        )
        for t in transitions
    ]


def _encode_backward(
    problem: ConstraintProblem,
    ts: TransitionSystem,
    params: TemplateParams,
    cuts: CutpointSet,
) -> tuple:
    """Invariant + backward-closed predicate, shared by Check 2 and the
    modified check. Returns (invariant pm, backward pm, resolution)."""
    if ts.terminal is None:
        raise EncodeError("the backward encoding needs a terminal location")
    inv_params = TemplateParams(params.c, 1, params.D)
    inv = make_templates(ts, inv_params, cuts, prefix="I")
    bi = make_templates(ts, params, cuts, prefix="BI", with_resolution=False)
    problem.declare_all(inv.unknowns, "Int")
    problem.declare_all(bi.unknowns, "Int")

    # the invariant holds initially and is closed under the full system
    entail_into_predicate(
        problem, ts.theta.rows, inv.predicate[ts.init], "sel_init", tag="init"
    )
    inv_paths = simple_paths(ts.variables, ts.transitions, cuts)
    encode_inductive(problem, inv.predicate, inv_paths, ts.variables, tag="inv")

    # the backward predicate seeds at the exit and is closed under the
    # reversed restricted steps
    restricted = restrict(ts, inv.resolution)
    entail_into_predicate(
        problem,
        inv.predicate[ts.terminal][0],
        bi.predicate[ts.terminal],
        "sel_seed",
        tag="seed",
    )
    rev = _reversed_edges(ts.variables, restricted.transitions)
    rev_paths = simple_paths(ts.variables, rev, cuts)
    encode_inductive(problem, bi.predicate, rev_paths, ts.variables, tag="bwd")

    problem.meta.update(
        system=ts,
        cutpoints=cuts,
        invariant=inv.predicate,
        backward=bi.predicate,
        resolution=inv.resolution,
        restricted=restricted,
    )
    return inv.predicate, bi.predicate, inv.resolution


def encode_check2(
    ts: TransitionSystem,
    params: TemplateParams,
    cutpoints: Optional[CutpointSet] = None,
) -> ConstraintProblem:
    """Backward-closed blocker plus a one-step breach somewhere.

    A model gives an invariant, a backward predicate closed under the
    reversed restricted system and covering the invariant's exit states,
    and a concrete transition step that leaves the backward predicate —
    evidence that the predicate is not closed forward, to be completed by
    an explicit reachability search for an escaping configuration.
    """
    cuts = cutpoints if cutpoints is not None else default_cutpoints(ts)
    _check_cutpoints(ts.variables, ts.locations, ts.init, ts.terminal, ts.transitions, cuts)
    cuts = _settle_cutpoints(
        ts.variables,
        [ts.transitions, _reversed_edges(ts.variables, ts.transitions)],
        cuts,
        ts.locations,
    )
    problem = ConstraintProblem(check="check2", params=params)
    _, bi_pm, resolution = _encode_backward(problem, ts, params, cuts)

    restricted = problem.meta["restricted"]
    wit = {v: problem.declare(f"wit_{v}", "Int") for v in ts.variables}
    witp = {v: problem.declare(f"witp_{v}", "Int") for v in ts.variables}
    env = _point_env(ts.variables, wit)
    env.update({prime(v): Poly.var(witp[v]) for v in ts.variables})

    eligible = [
        t
        for t in restricted.transitions
        if t.source in cuts.locations and t.target in cuts.locations
    ]
    if not eligible:
        raise EncodeError("no transition connects template locations")
    selectors = []
    for i, t in enumerate(eligible):
        name = problem.declare(f"sel_tau_{i}", "Int")
        problem.assert_term(_and([f"(>= {name} 0)", f"(<= {name} 1)"]))
        selectors.append((name, t))
    problem.assert_term(f"(= (+ {' '.join(n for n, _ in selectors)}) 1)")
    for name, t in selectors:
        step = [f"(>= {render_int(r.substitute(env))} 0)" for r in t.rows]
        body = _and(
            [
                pp_member_term(problem, bi_pm[t.source], env),
                *step,
                pp_excluded_term(problem, bi_pm[t.target], env),
            ]
        )
        problem.assert_term(f"(=> (= {name} 1) {body})")

    problem.meta.update(
        kind="check2",
        witness=(wit, witp),
        tau_selectors=tuple(selectors),
    )
    return problem


# ---------------------------------------------------------------------------
# branch-form rewrite and the modified check


def _var_interval(rows: Sequence[Poly], v: str):
    """Solutions of single-variable linear rows; None bound = unbounded."""
    lo, hi = None, None
    for p in rows:
        if p.degree() > 1:
            raise EncodeError(f"nonlinear choice guard {p}")
        a = p.coefficient(((v, 1),))
        b = p.coefficient(ONE_MONO)
        if a == 0:
            if b < 0:
                return None
            continue
        if a > 0:  # a*v + b >= 0  ->  v >= ceil(-b/a) = -floor(b/a)
            bound = -(b // a)
            lo = bound if lo is None else max(lo, bound)
        else:  # v <= floor(b/-a)
            bound = b // (-a)
            hi = bound if hi is None else min(hi, bound)
    if lo is not None and hi is not None and lo > hi:
        return None
    return (lo, hi)


def rebranch(ts: TransitionSystem) -> TransitionSystem:
    """Fold nondeterministic assignments into branching choice.

    A choice transition src -> mid assigning `w` merges with mid's outgoing
    arms when src has no other exit and mid no other entry: guards purely
    over `w` choose the arm and are dropped (an unsatisfiable guard drops
    its arm), while `w` itself keeps its old value across the merged edge —
    the chosen number is never stored, only the branch taken. Arms mixing
    `w` with other variables have no branch reading and are rejected.
    Innermost choices merge first so chained choice variables peel off in
    order.
    """
    variables = ts.variables
    locations = list(ts.locations)
    transitions = list(ts.transitions)

    def incoming(loc):
        return [t for t in transitions if t.target == loc]

    def outgoing(loc):
        return [t for t in transitions if t.source == loc]

    def _only(seq, t):
        return len(seq) == 1 and seq[0] is t

    while True:
        candidates = []
        for t in transitions:
            if t.ndet_var is None:
                continue
            mid = t.target
            if mid in (ts.init, ts.terminal) or mid == t.source:
                continue
            if not _only(incoming(mid), t) or not _only(outgoing(t.source), t):
                continue
            candidates.append(t)
        if not candidates:
            break
        # merge a choice whose arms hold the guards, not another choice
        inner = [c for c in candidates if all(a.ndet_var is None for a in outgoing(c.target))]
        t = (inner or candidates)[0]
        w, mid = t.ndet_var, t.target
        wp = prime(w)
        merged = []
        for arm in outgoing(mid):
            pure, kept = [], []
            for p in arm.rows:
                vs = p.variables()
                if vs == {w}:
                    pure.append(p)
                elif w in vs and vs != {w, wp}:
                    raise EncodeError(
                        f"choice variable {w!r} mixed into {arm.source}->{arm.target}: {p}"
                    )
                else:
                    kept.append(p)
            if pure and _var_interval(pure, w) is None:
                continue  # this arm's guard admits no choice at all
            if not any(wp in p.variables() for p in kept) and arm.ndet_var != w:
                d = Poly.var(wp) - Poly.var(w)
                kept.extend([d, -d])
            merged.append(Transition(t.source, arm.target, tuple(kept), arm.ndet_var))
        idx = next(i for i, x in enumerate(transitions) if x is t)
        arm_ids = {id(a) for a in outgoing(mid)}
        transitions = [
            x for x in transitions[:idx] if id(x) not in arm_ids
        ] + merged + [
            x for x in transitions[idx + 1 :] if id(x) not in arm_ids
        ]
        locations.remove(mid)

    out = TransitionSystem(
        variables=variables,
        locations=tuple(locations),
        init=ts.init,
        terminal=ts.terminal,
        theta=ts.theta,
        transitions=tuple(transitions),
    )
    out.validate()
    return out


def _functional_update(variables: Sequence[str], t: Transition) -> tuple:
    """Guards and the update map of a deterministic transition."""
    shape = analyze_transition(variables, t)
    if shape.enumerated or shape.residual:
        raise EncodeError(
            f"transition {t.source}->{t.target} is not a guarded assignment"
        )
    upd = dict(shape.updates)
    return shape.guards, {v: upd[v] for v in variables}


def encode_modified(
    ts: TransitionSystem,
    params: TemplateParams,
    cutpoints: Optional[CutpointSet] = None,
) -> ConstraintProblem:
    """Backward blocker plus a ranked walk out of it, for branching choice.

    Applicable when every nondeterministic assignment comes from the
    frontend's branching rewrite. On the branch-form system a model carries
    a descent region and per-location ranking polynomials: inside the
    region and the backward predicate, some successor stays in the region
    while the rank drops — so a run from the initial configuration leaves
    the backward predicate within finitely many steps.
    """
    for t in ts.transitions:
        if t.ndet_var is not None and not t.ndet_var.startswith(NDET_PREFIX):
            raise EncodeError(
                f"nondeterministic assignment to {t.ndet_var!r} does not "
                "come from branching"
            )
    tb = rebranch(ts)
    if tb.ndet_transitions:
        raise EncodeError("branching rewrite left unresolved choices")

    cuts = cutpoints if cutpoints is not None else default_cutpoints(ts)
    _check_cutpoints(ts.variables, ts.locations, ts.init, ts.terminal, ts.transitions, cuts)
    cuts = _settle_cutpoints(
        ts.variables,
        [ts.transitions, _reversed_edges(ts.variables, ts.transitions)],
        cuts,
        ts.locations,
    )
    problem = ConstraintProblem(check="modified", params=params)
    _, bi_pm, _ = _encode_backward(problem, ts, params, cuts)
    for loc in tb.locations:
        if loc not in bi_pm:
            raise EncodeError("branch-form locations must all carry templates")

    dsc = make_templates(tb, params, all_locations(tb), prefix="C", with_resolution=False)
    problem.declare_all(dsc.unknowns, "Int")
    rank: dict[str, Poly] = {}
    rank_names: list = []
    for loc in tb.locations:
        rank[loc] = _template_row(
            f"f_{_sanitize(loc)}", tb.variables, params.row_degree, rank_names
        )
    problem.declare_all(rank_names, "Int")

    cinit = {v: problem.declare(f"cinit_{v}", "Int") for v in ts.variables}
    env = _point_env(ts.variables, cinit)
    for row in ts.theta.rows:
        problem.assert_term(f"(>= {render_int(row.substitute(env))} 0)")
    problem.assert_term(pp_member_term(problem, dsc.predicate[tb.init], env))

    # ranked progress: inside the region and the backward predicate, some
    # arm's guard holds, its successor stays in the region, and the rank is
    # nonnegative and strictly decreasing
    for loc in tb.locations:
        arms = []
        for t in tb.outgoing(loc):
            guards, upd = _functional_update(tb.variables, t)
            upd_env = {v: upd[v] for v in tb.variables}
            for m, tgt_rows in enumerate(dsc.predicate[t.target]):
                consequents = list(guards)
                consequents.extend(r.substitute(upd_env) for r in tgt_rows)
                consequents.append(rank[loc] - rank[t.target].substitute(upd_env) - 1)
                consequents.append(rank[loc])
                arms.append(consequents)
        for j, crows in enumerate(dsc.predicate[loc]):
            for k, birows in enumerate(bi_pm[loc]):
                premise = tuple(crows) + tuple(birows)
                sel = problem.declare(f"sel_step_{_sanitize(loc)}_{j}_{k}", "Int")
                problem.assert_term(
                    _and([f"(>= {sel} 0)", f"(<= {sel} {len(arms)})"])
                )
                encode_entailment(
                    problem,
                    premise,
                    Poly.const(-1),
                    guard=(sel, 0),
                    tag=f"step_{loc}_{j}_{k}_bot",
                )
                for a, consequents in enumerate(arms, start=1):
                    for r, row in enumerate(consequents):
                        encode_entailment(
                            problem,
                            premise,
                            row,
                            guard=(sel, a),
                            tag=f"step_{loc}_{j}_{k}_a{a}_r{r}",
                        )

    problem.meta.update(
        kind="modified",
        branch_system=tb,
        descent=dsc.predicate,
        rank=rank,
        cinit=cinit,
    )
    return problem
