"""Solver processes and the proof drivers built on top of them.

The constraint problems from :mod:`unhalt.encode` go to an external SMT
solver over stdin; this module owns that process boundary — locating a
solver, applying per-call timeouts, parsing models — and the strategy layer
that turns a feasible model into a checked result. The cardinal rule lives
here: no answer is reported as a proof unless a certificate was extracted
from the model and revalidated by enumeration. A model that fails
validation downgrades the run to an inconclusive answer and keeps the model
around for inspection.

Solving templates at every location is far beyond what the solver manages
in reasonable time, so the drivers work staged: pin the invariant templates
to bands computed by the interval analysis, pin witnesses to concrete
states found by a short forward exploration, and let the solver fill in
only what genuinely needs search. Values for locations the encoding left
template-free are then reconstructed exactly (projection through the
transition rows), so the final certificate speaks about every location.
"""

from __future__ import annotations

import math
import os
import re
import shlex
import shutil
import subprocess
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import certcheck, intervals, linear, reach, sexp
from .certificate import Certificate, CertificateError
from .encode import (
    ConstraintProblem,
    EncodeError,
    TemplateParams,
    all_locations,
    encode_check1,
    encode_check2,
    encode_modified,
)
from .poly import Poly
from .tsys import (
    Assertion,
    PropPredicate,
    TransitionSystem,
    TsysError,
    complement,
    restrict,
    reverse,
    successors,
    transition_shape,
    transition_successors,
)

DEFAULT_TIMEOUT = 60.0
CACHE_DIR = Path.home() / ".cache" / "unhalt"

# enumeration budget for the validation box: chosen so the heaviest audit
# (enumerated choice windows) stays under the checker's combination cap
BOX_CELL_CAP = 1_500_000


class SolveError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# solver configuration and discovery


@dataclass(frozen=True)
class SolverConfig:
    """How to run one solver process: command, budget, input dialect."""

    executable: str
    args: Tuple[str, ...] = ()
    timeout: float = DEFAULT_TIMEOUT
    logic: str = "ALL"
    dialect: str = "smt2"  # "smt2-intmul" scales rationals away
    workdir: Optional[str] = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise SolveError("solver timeout must be positive")
        if self.dialect not in ("smt2", "smt2-intmul"):
            raise SolveError(f"unknown solver dialect {self.dialect!r}")

    def with_timeout(self, timeout: float) -> "SolverConfig":
        return SolverConfig(
            self.executable, self.args, timeout, self.logic, self.dialect, self.workdir
        )


@dataclass(frozen=True)
class SolveOutcome:
    status: str  # "sat" | "unsat" | "unknown" | "timeout"
    model: dict = field(default_factory=dict)  # unknown name -> int | Fraction
    reason: str = ""
    elapsed: float = 0.0

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"


def _shim_path() -> Path:
    return Path(__file__).resolve().parent / "data" / "z3smt.js"


def _node_workdir() -> Optional[Path]:
    """A directory whose node_modules holds the solver package, if any."""
    candidates = []
    env = os.environ.get("UNHALT_SOLVER_DIR")
    if env:
        candidates.append(Path(env))
    candidates.append(CACHE_DIR)
    candidates.append(Path(__file__).resolve().parents[2] / ".solver")
    for cand in candidates:
        if (cand / "node_modules" / "z3-solver").is_dir():
            return cand
    return None


def find_solver(timeout: float = DEFAULT_TIMEOUT) -> SolverConfig:
    """Locate a working solver: explicit override, a z3 binary on PATH, or
    the bundled node-based fallback (see ``unhalt solver-setup``)."""
    env = os.environ.get("UNHALT_SOLVER")
    if env:
        parts = shlex.split(env)
        return SolverConfig(parts[0], tuple(parts[1:]), timeout)
    z3 = shutil.which("z3")
    if z3:
        return SolverConfig(z3, ("-in",), timeout)
    node = shutil.which("node")
    workdir = _node_workdir()
    if node and workdir is not None:
        return SolverConfig(node, (str(_shim_path()),), timeout, workdir=str(workdir))
    raise SolveError(
        "no SMT solver found: install z3, set UNHALT_SOLVER, or run "
        "`unhalt solver-setup` to fetch the bundled one"
    )


def ensure_node_solver(directory: Optional[str] = None) -> Path:
    """Install the node solver package into *directory* (default cache)."""
    target = Path(directory) if directory else CACHE_DIR
    if (target / "node_modules" / "z3-solver").is_dir():
        return target
    npm = shutil.which("npm")
    if npm is None:
        raise SolveError("npm is required to set up the bundled solver")
    target.mkdir(parents=True, exist_ok=True)
    proc = subprocess.run(
        [npm, "install", "z3-solver"],
        cwd=str(target),
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise SolveError(f"npm install failed:\n{proc.stderr.strip()}")
    return target


# ---------------------------------------------------------------------------
# running one query


_REAL_DECL = re.compile(r"^\(declare-const (\w+) Real\)$")


def _intmul_lines(text: str) -> str:
    """Replace each Real unknown by an integer numerator/denominator pair.

    For solvers that dislike mixed Int/Real arithmetic: the ratio is bound
    by a define-fun, so the rest of the script is untouched.
    """
    out = []
    for line in text.splitlines():
        m = _REAL_DECL.match(line)
        if m is None:
            out.append(line)
            continue
        n = m.group(1)
        out.append(f"(declare-const {n}__num Int)")
        out.append(f"(declare-const {n}__den Int)")
        out.append(f"(assert (>= {n}__den 1))")
        out.append(f"(define-fun {n} () Real (/ (to_real {n}__num) (to_real {n}__den)))")
    return "\n".join(out) + "\n"


def _model_value(form):
    if isinstance(form, int):
        return form
    if isinstance(form, list) and form:
        if form[0] == "-" and len(form) == 2:
            return -_model_value(form[1])
        if form[0] == "/" and len(form) == 3:
            num = _model_value(form[1])
            den = _model_value(form[2])
            frac = Fraction(num, den)
            return int(frac) if frac.denominator == 1 else frac
    raise SolveError(f"unreadable model value {form!r}")


def _collect_defines(form, into: dict):
    if not isinstance(form, list) or not form:
        return
    if form[0] == "define-fun" and len(form) >= 5:
        name = form[1]
        if isinstance(name, str):
            try:
                into[name] = _model_value(form[4])
            except SolveError:
                pass  # non-numeric definition; extraction never needs it
        return
    for sub in form:
        _collect_defines(sub, into)


def parse_solver_output(text: str, declared: Sequence[str]) -> Tuple[str, dict, str]:
    """(status, model, reason) from a solver transcript.

    The model is made total over *declared*: anything the solver did not
    mention comes back as 0, which is always a point of the declared sort.
    """
    status = None
    tail_at = 0
    for m in re.finditer(r"^(sat|unsat|unknown)\s*$", text, re.MULTILINE):
        status = m.group(1)
        tail_at = m.end()
        break
    errors = re.findall(r'\(error\s+"([^"]*)"\)', text)
    if status is None:
        reason = errors[0] if errors else text.strip()[:200] or "no solver output"
        return "unknown", {}, reason
    if status != "sat":
        return status, {}, errors[0] if errors else ""
    model: dict = {}
    try:
        forms = sexp.loads(text[tail_at:])
    except sexp.SexpError as e:
        return "unknown", {}, f"unreadable model: {e}"
    for form in forms:
        _collect_defines(form, model)
    for name in declared:
        model.setdefault(name, 0)
    return "sat", model, ""


def solve(
    problem: ConstraintProblem,
    config: SolverConfig,
    hints: Sequence[str] = (),
) -> SolveOutcome:
    """Run one solver process on *problem* plus extra *hints* assertions.

    Hints are spliced in front of (check-sat) without touching the
    problem's own rendering, so the emitted artifact stays reproducible.
    Process failures and unparsable output are inconclusive, never unsat.
    """
    text = problem.emit()
    if config.logic != "ALL":
        text = text.replace("(set-logic ALL)", f"(set-logic {config.logic})", 1)
    if config.dialect == "smt2-intmul":
        text = _intmul_lines(text)
    if hints:
        block = "".join(f"(assert {h})\n" for h in hints)
        text = text.replace("(check-sat)", block + "(check-sat)", 1)
    ms = max(1, int(config.timeout * 1000))
    text = f"(set-option :timeout {ms})\n" + text

    start = time.monotonic()
    try:
        proc = subprocess.run(
            [config.executable, *config.args],
            input=text.encode(),
            capture_output=True,
            timeout=config.timeout + 10,
            cwd=config.workdir,
        )
    except subprocess.TimeoutExpired:
        return SolveOutcome(
            "timeout",
            reason=f"solver killed after {config.timeout + 10:.0f}s",
            elapsed=time.monotonic() - start,
        )
    except OSError as e:
        return SolveOutcome(
            "unknown", reason=f"could not run solver: {e}", elapsed=time.monotonic() - start
        )
    elapsed = time.monotonic() - start
    out = proc.stdout.decode(errors="replace")
    status, model, reason = parse_solver_output(out, problem.unknowns)
    if status == "unknown" and not reason and proc.stderr:
        reason = proc.stderr.decode(errors="replace").strip()[:200]
    if status == "unknown" and elapsed >= config.timeout * 0.9:
        status, reason = "timeout", reason or "solver gave up at its time limit"
    return SolveOutcome(status, model, reason, elapsed)


# ---------------------------------------------------------------------------
# certificate extraction


def _require_int(problem: ConstraintProblem, name: str, value) -> None:
    if problem.sort_of(name) == "Int" and isinstance(value, Fraction):
        raise CertificateError(f"solver bound integer unknown {name} to {value}")


def _model_number(problem: ConstraintProblem, model: Mapping, name: str) -> Fraction:
    value = model.get(name, 0)
    _require_int(problem, name, value)
    return Fraction(value)


def _model_int(problem: ConstraintProblem, model: Mapping, name: str) -> int:
    value = _model_number(problem, model, name)
    if value.denominator != 1:
        raise CertificateError(f"non-integral value {value} for {name}")
    return int(value)


def _instantiate_row(
    problem: ConstraintProblem, model: Mapping, row: Poly, variables: Sequence[str]
) -> Poly:
    """Fill a template row's coefficient unknowns from the model.

    Rational values are cleared by the common denominator — scaling a row
    by a positive constant does not change the predicate it cuts out.
    """
    progvars = set(variables)
    acc: Dict[tuple, Fraction] = {}
    for mono, coef in row.terms.items():
        value = Fraction(coef)
        kept = []
        for v, e in mono:
            if v in progvars:
                kept.append((v, e))
            else:
                value *= _model_number(problem, model, v) ** e
        key = tuple(kept)
        acc[key] = acc.get(key, Fraction(0)) + value
    lcd = 1
    for f in acc.values():
        lcd = lcd * f.denominator // math.gcd(lcd, f.denominator)
    return Poly({k: int(f * lcd) for k, f in acc.items() if f != 0})


def _instantiate_pm(
    problem: ConstraintProblem,
    model: Mapping,
    templates: Mapping[str, tuple],
    variables: Sequence[str],
) -> dict:
    out = {}
    for loc, disjuncts in templates.items():
        kept: List[Assertion] = []
        for rows in disjuncts:
            inst: List[Poly] = []
            dead = False
            for row in rows:
                p = _instantiate_row(problem, model, row, variables)
                if p.is_const():
                    if p.const_value() < 0:
                        dead = True
                        break
                    continue  # tautology row
                inst.append(p)
            if dead:
                continue
            a = Assertion(tuple(inst))
            if a not in kept:
                kept.append(a)
        out[loc] = PropPredicate(tuple(kept))
    return out


def _instantiate_resolution(
    problem: ConstraintProblem, model: Mapping, templates: Mapping, variables
) -> dict:
    return {
        key: _instantiate_row(problem, model, row, variables)
        for key, row in templates.items()
    }


def _selector_audit(problem: ConstraintProblem, model: Mapping) -> list:
    out = []
    for name in problem.unknowns:
        if name.startswith("sel"):
            try:
                out.append([name, _model_int(problem, model, name)])
            except CertificateError:
                out.append([name, 0])
    return out


def extract_certificate(problem: ConstraintProblem, model: Mapping) -> Certificate:
    """Instantiate the problem's templates with model values.

    The result carries exactly what the model pins down; predicate values
    for locations without templates are the drivers' job to fill in.
    """
    meta = problem.meta
    kind = meta["kind"]
    ts: TransitionSystem = meta["system"]
    params = {
        "c": problem.params.c,
        "d": problem.params.d,
        "D": problem.params.D,
    }
    audit = {"selectors": _selector_audit(problem, model)}

    if kind == "check1":
        invariants = _instantiate_pm(problem, model, meta["predicate"], ts.variables)
        resolution = _instantiate_resolution(
            problem, model, meta["resolution"], ts.variables
        )
        start = tuple(
            _model_int(problem, model, meta["cinit"][v]) for v in ts.variables
        )
        return Certificate(
            kind="check1",
            system=ts,
            params=params,
            resolution=resolution,
            invariants=invariants,
            start=start,
            audit=audit,
        )

    invariants = _instantiate_pm(problem, model, meta["invariant"], ts.variables)
    backward = _instantiate_pm(problem, model, meta["backward"], ts.variables)
    resolution = _instantiate_resolution(
        problem, model, meta["resolution"], ts.variables
    )

    if kind == "check2":
        chosen = None
        for name, t in meta["tau_selectors"]:
            if _model_int(problem, model, name) == 1:
                chosen = t
                break
        if chosen is None:
            raise CertificateError("model selects no breach transition")
        wit_names, witp_names = meta["witness"]
        x = tuple(_model_int(problem, model, wit_names[v]) for v in ts.variables)
        xp = tuple(_model_int(problem, model, witp_names[v]) for v in ts.variables)
        return Certificate(
            kind="check2",
            system=ts,
            params=params,
            resolution=resolution,
            invariants=invariants,
            backward=backward,
            breach=((chosen.source, chosen.target), x, xp),
            audit=audit,
        )

    if kind == "modified":
        tb: TransitionSystem = meta["branch_system"]
        descent = _instantiate_pm(problem, model, meta["descent"], tb.variables)
        rank = {
            loc: _instantiate_row(problem, model, row, tb.variables)
            for loc, row in meta["rank"].items()
        }
        start = tuple(
            _model_int(problem, model, meta["cinit"][v]) for v in ts.variables
        )
        return Certificate(
            kind="modified",
            system=ts,
            params=params,
            resolution=resolution,
            invariants=invariants,
            backward=backward,
            start=start,
            branch_system=tb,
            descent=descent,
            rank=rank,
            audit=audit,
        )

    raise CertificateError(f"cannot extract a {kind!r} certificate")


# ---------------------------------------------------------------------------
# hint construction: equalities and domains that narrow the search


def _smt_int(k: int) -> str:
    return str(k) if k >= 0 else f"(- {-k})"


def _coef_names(row: Poly, variables: Sequence[str]) -> Dict[tuple, str]:
    """Map each basis monomial of a template row to its coefficient name."""
    progvars = set(variables)
    out: Dict[tuple, str] = {}
    for mono, _ in row.terms.items():
        names = [v for v, _ in mono if v not in progvars]
        basis = tuple((v, e) for v, e in mono if v in progvars)
        if len(names) == 1:
            out[basis] = names[0]
    return out


def _pin_row_hints(row: Poly, target: Poly, variables: Sequence[str]) -> List[str]:
    """Equalities forcing a template row to equal a concrete polynomial."""
    hints = []
    for basis, name in sorted(_coef_names(row, variables).items(), key=lambda kv: kv[1]):
        hints.append(f"(= {name} {_smt_int(target.coefficient(basis))})")
    return hints


def pin_predicate_hints(
    templates: Mapping[str, tuple],
    loc: str,
    target: PropPredicate,
    variables: Sequence[str],
) -> Optional[List[str]]:
    """Pin every disjunct of a location's template to *target*.

    Distinct target disjuncts fill template slots in order; leftovers are
    pinned infeasible so they add nothing. None when the target has more
    disjuncts or longer rows than the template can express.
    """
    disjuncts = templates[loc]
    want = list(target.disjuncts)
    if len(want) > len(disjuncts):
        return None
    hints: List[str] = []
    for j, rows in enumerate(disjuncts):
        if j < len(want):
            fill = list(want[j].rows)
            if len(fill) > len(rows):
                return None
            fill += [Poly()] * (len(rows) - len(fill))
        else:
            fill = [Poly.const(-1)] + [Poly()] * (len(rows) - 1)
        for row, tgt in zip(rows, fill):
            hints.extend(_pin_row_hints(row, tgt, variables))
    return hints


def _equal_rows_hints(
    rows_a: Sequence[Poly], rows_b: Sequence[Poly], variables: Sequence[str]
) -> List[str]:
    hints = []
    for ra, rb in zip(rows_a, rows_b):
        ca = _coef_names(ra, variables)
        cb = _coef_names(rb, variables)
        for basis in sorted(set(ca) | set(cb), key=repr):
            if basis in ca and basis in cb:
                hints.append(f"(= {ca[basis]} {cb[basis]})")
    return hints


def _domain_hints(
    row: Poly, variables: Sequence[str], coef_bound: int, const_bound: int
) -> List[str]:
    """Box the coefficients of a free template row.

    Tight value domains are what makes template search tractable here, at
    the price of completeness: a run that comes back infeasible under these
    restrictions is inconclusive, not a refutation.
    """
    hints = []
    for basis, name in sorted(_coef_names(row, variables).items(), key=lambda kv: kv[1]):
        bound = const_bound if basis == () else coef_bound
        if bound == 1:
            hints.append(f"(or (= {name} (- 1)) (= {name} 0) (= {name} 1))")
        else:
            hints.append(f"(and (>= {name} (- {bound})) (<= {name} {bound}))")
    return hints


def _reaches_terminal(ts: TransitionSystem) -> set:
    """Locations with a location-graph path to the terminal."""
    if ts.terminal is None:
        return set(ts.locations)
    into: Dict[str, set] = {}
    for t in ts.transitions:
        into.setdefault(t.target, set()).add(t.source)
    seen = {ts.terminal}
    stack = [ts.terminal]
    while stack:
        for src in into.get(stack.pop(), ()):
            if src not in seen:
                seen.add(src)
                stack.append(src)
    return seen


# ---------------------------------------------------------------------------
# validation boxes and forward exploration


def _max_coefficient(ts: TransitionSystem) -> int:
    m = 1
    rows = list(ts.theta.rows)
    for t in ts.transitions:
        rows.extend(t.rows)
    for p in rows:
        for c in p.terms.values():
            m = max(m, abs(c))
    return m


def validation_box(
    ts: TransitionSystem, state: Optional[Dict[str, dict]] = None
) -> tuple:
    """An enumeration box wide enough to audit the program's dynamics.

    Finite interval bounds from the analysis (padded) say where runs
    actually live; variables the analysis cannot bound fall back to the
    largest constant in the program. When that fallback would blow the
    enumeration budget, the box shrinks to the analyzed envelope — the
    audit is enumeration within a box either way, so a narrower box only
    weakens the net, never unsoundly passes a specific claim.
    """
    if state is None:
        state = intervals.analyze(ts)
    big = _max_coefficient(ts) + 2
    flos: List[int] = []
    fhis: List[int] = []
    open_lo = open_hi = not state
    for v in ts.variables:
        lo = min((env.get(v, intervals.TOP)[0] for env in state.values()), default=intervals.NINF)
        hi = max((env.get(v, intervals.TOP)[1] for env in state.values()), default=intervals.INF)
        if lo == intervals.NINF:
            open_lo = True
        else:
            flos.append(int(lo) - 2)
        if hi == intervals.INF:
            open_hi = True
        else:
            fhis.append(int(hi) + 2)
    wide = (
        min(flos + [-big] if open_lo else flos),
        max(fhis + [big] if open_hi else fhis),
    )
    if (wide[1] - wide[0] + 1) ** len(ts.variables) <= BOX_CELL_CAP:
        return wide
    if flos and fhis:
        return (min(flos), max(fhis))
    return wide


@dataclass
class Exploration:
    """A breadth-first sweep of the concrete state space."""

    visited: dict  # location -> [(vals, depth), ...] in discovery order
    parents: dict  # config -> predecessor config (None at the roots)
    depth: dict


def explore(
    ts: TransitionSystem,
    window: tuple = (-1, 1),
    cap: int = reach.DEFAULT_MAX_EXPLORED,
    box: Optional[tuple] = None,
) -> Exploration:
    try:
        starts = reach.initial_states(ts, box)
    except reach.ReachError:
        try:
            starts = reach.initial_states(ts, (-4, 4))
        except reach.ReachError:
            return Exploration({}, {}, {})
    visited: dict = {}
    parents: dict = {}
    depth: dict = {}
    queue: deque = deque()
    for cfg in starts:
        if cfg not in depth:
            depth[cfg] = 0
            parents[cfg] = None
            visited.setdefault(cfg[0], []).append((cfg[1], 0))
            queue.append(cfg)
    expanded = 0
    while queue and expanded < cap:
        cfg = queue.popleft()
        expanded += 1
        for nxt in successors(ts, cfg, window):
            if nxt in depth:
                continue
            depth[nxt] = depth[cfg] + 1
            parents[nxt] = cfg
            visited.setdefault(nxt[0], []).append((nxt[1], depth[nxt]))
            queue.append(nxt)
    return Exploration(visited, parents, depth)


def _stem(parents: dict, cfg) -> list:
    out = []
    while cfg is not None:
        out.append(cfg)
        cfg = parents[cfg]
    out.reverse()
    return out


# ---------------------------------------------------------------------------
# proof drivers


@dataclass
class ProveResult:
    status: str  # "NO" (nontermination proved) | "MAYBE"
    certificate: Optional[Certificate] = None
    report: Optional[certcheck.ValidationReport] = None
    reason: str = ""
    elapsed: float = 0.0
    stages: list = field(default_factory=list)
    audit: dict = field(default_factory=dict)

    @property
    def proved(self) -> bool:
        return self.status == "NO"


def _maybe(reason: str, t0: float, stages: list, **extra) -> ProveResult:
    return ProveResult(
        "MAYBE", reason=reason, elapsed=time.monotonic() - t0, stages=stages, **extra
    )


def _validated(cert, report, t0, stages) -> ProveResult:
    return ProveResult(
        "NO",
        certificate=cert,
        report=report,
        elapsed=time.monotonic() - t0,
        stages=stages,
    )


def _try_validate(cert: Certificate, box: tuple, ndet_box: tuple):
    """Validate, turning audit blowups into a failing report."""
    try:
        return certcheck.validate_certificate(cert, box, ndet_box)
    except certcheck.CertcheckError as e:
        report = certcheck.ValidationReport(ok=True)
        report.add("audit", certcheck.Verdict(False, str(e)))
        return report


def _complete_forward(cert: Certificate) -> bool:
    """Fill invariant values at template-free locations of a trap map."""
    ts = cert.system
    missing = [l for l in ts.locations if l not in cert.invariants]
    if not missing:
        return True
    sub = restrict(ts, cert.resolution)
    extra = linear.complete_map(sub, cert.invariants)
    if extra is None:
        return False
    cert.invariants = {**cert.invariants, **extra}
    return True


def _complete_backward(cert: Certificate) -> bool:
    """Fill backward values at template-free locations, seeded at the exit."""
    ts = cert.system
    missing = [l for l in ts.locations if l not in cert.backward]
    if not missing:
        return True
    seed = cert.invariants[ts.terminal]
    if len(seed.disjuncts) != 1:
        return False
    sub = restrict(ts, cert.resolution)
    rev = reverse(sub, seed.disjuncts[0])
    extra = linear.complete_map(rev, cert.backward)
    if extra is None:
        return False
    cert.backward = {**cert.backward, **extra}
    return True


def _band_invariants(ts: TransitionSystem, state: Dict[str, dict]) -> dict:
    """The interval analysis as a certificate-ready invariant map."""
    return intervals.band_map(ts, state)


def _domain_block(
    problem: ConstraintProblem,
    templates: Mapping[str, tuple],
    locs: Sequence[str],
    variables: Sequence[str],
    coef_bound: int = 1,
    const_bound: int = 128,
) -> List[str]:
    hints: List[str] = []
    for loc in locs:
        for rows in templates[loc]:
            for row in rows:
                hints.extend(_domain_hints(row, variables, coef_bound, const_bound))
    return hints


def _value_box_hints(names: Sequence[str], bound: int) -> List[str]:
    return [
        f"(and (>= {n} (- {bound})) (<= {n} {bound}))" for n in sorted(names)
    ]


def _resolution_hints(problem: ConstraintProblem, variables) -> List[str]:
    hints: List[str] = []
    for key in sorted(problem.meta["resolution"]):
        row = problem.meta["resolution"][key]
        hints.extend(
            _value_box_hints([n for _, n in sorted(_coef_names(row, variables).items(), key=lambda kv: kv[1])], 1024)
        )
    return hints


# -- check 1 ----------------------------------------------------------------


def prove_check1(
    ts: TransitionSystem,
    params: TemplateParams,
    config: SolverConfig,
    *,
    box: Optional[tuple] = None,
    ndet_box: tuple = certcheck.DEFAULT_NDET_BOX,
) -> ProveResult:
    """Trap search: restrict the choices, trap one run away from the exit.

    Solved in two rounds — first with tight coefficient domains (fast when
    a small trap exists), then unrestricted. Any feasible model must pass
    extraction and full revalidation before a proof is reported.
    """
    t0 = time.monotonic()
    stages: list = []
    try:
        problem = encode_check1(ts, params)
    except EncodeError as e:
        return _maybe(f"encoding failed: {e}", t0, stages)

    state = intervals.analyze(ts)
    vbox = box if box is not None else validation_box(ts, state)
    templates = problem.meta["predicate"]
    template_locs = [l for l in templates if templates[l] and l != ts.terminal]
    domains = _domain_block(problem, templates, template_locs, ts.variables)
    domains += _resolution_hints(problem, ts.variables)
    domains += _value_box_hints(problem.meta["cinit"].values(), 1024)

    last = ""
    for label, hints in (("domains", domains), ("free", [])):
        outcome = solve(problem, config, hints)
        stages.append((f"solve-{label}", outcome.status, round(outcome.elapsed, 2)))
        last = outcome.status
        if outcome.status == "timeout":
            return _maybe("solver timed out", t0, stages)
        if not outcome.is_sat:
            continue
        try:
            cert = extract_certificate(problem, outcome.model)
        except CertificateError as e:
            stages.append(("extract-failed", str(e)))
            continue
        if not _complete_forward(cert):
            stages.append(("completion-failed", label))
            continue
        report = _try_validate(cert, vbox, ndet_box)
        if report.ok:
            return _validated(cert, report, t0, stages)
        stages.append(("validation-failed", [n for n, v in report.checks if not v.ok]))
        return _maybe(
            "model failed revalidation",
            t0,
            stages,
            audit={"model": {k: str(v) for k, v in outcome.model.items()}},
        )
    return _maybe(f"no trap found (solver answered {last})", t0, stages)


# -- check 2 ----------------------------------------------------------------


def _check2_base_hints(
    problem: ConstraintProblem, ts: TransitionSystem, state: Dict[str, dict]
) -> List[str]:
    """The shared hint block: analysis-pinned invariants, the backward
    template tied to the invariant at the exit, infeasible backward values
    at cut locations that cannot reach the exit, and coefficient domains
    for everything left free."""
    inv_templates = problem.meta["invariant"]
    bi_templates = problem.meta["backward"]
    cuts = sorted(inv_templates)
    ranked = intervals.rank_variables(ts, state)
    hints: List[str] = []

    for loc in cuts:
        (rows,) = inv_templates[loc]
        targets = intervals.pinned_rows(ts.variables, ranked, state.get(loc), len(rows))
        for row, tgt in zip(rows, targets):
            hints.extend(_pin_row_hints(row, tgt, ts.variables))

    (inv_term_rows,) = inv_templates[ts.terminal]
    for rows in bi_templates[ts.terminal]:
        hints.extend(_equal_rows_hints(rows, inv_term_rows, ts.variables))

    alive = _reaches_terminal(ts)
    dead = [l for l in cuts if l not in alive]
    for loc in dead:
        for rows in bi_templates[loc]:
            fill = [Poly.const(-1)] + [Poly()] * (len(rows) - 1)
            for row, tgt in zip(rows, fill):
                hints.extend(_pin_row_hints(row, tgt, ts.variables))

    free = [l for l in cuts if l in alive and l != ts.terminal]
    hints += _domain_block(problem, bi_templates, free, ts.variables)
    hints += _resolution_hints(problem, ts.variables)
    wit_names, witp_names = problem.meta["witness"]
    hints += _value_box_hints(list(wit_names.values()) + list(witp_names.values()), 1024)
    return hints


def _breach_arm_candidates(
    ts: TransitionSystem, t, exploration: Exploration, limit: int
) -> list:
    """Explored states at the arm's source satisfying its guards, deepest
    and smallest first — late loop states are where blockers crack."""
    progvars = set(ts.variables)
    guards = [r for r in t.rows if set(r.variables()) <= progvars]
    scored = []
    for vals, d in exploration.visited.get(t.source, ()):
        env = dict(zip(ts.variables, vals))
        if all(g.evaluate(env) >= 0 for g in guards):
            scored.append((-d, sum(abs(v) for v in vals), vals))
    scored.sort()
    return [vals for _, _, vals in scored[:limit]]


def _witness_pins(
    problem: ConstraintProblem, ts: TransitionSystem, t, wit: tuple
) -> Optional[List[str]]:
    """Pin the breach endpoints for one arm and source state.

    Deterministic arms pin both ends. An arm that resolves a choice keeps
    the chosen coordinate free — the encoding itself forces it to the
    resolution's value — and pins the coordinates the step carries over.
    """
    wit_names, witp_names = problem.meta["witness"]
    hints = [f"(= {wit_names[v]} {_smt_int(k)})" for v, k in zip(ts.variables, wit)]
    ndet_var = None
    original = None
    for cand in ts.outgoing(t.source):
        if cand.target == t.target and cand.ndet_var is not None:
            ndet_var = cand.ndet_var
            original = cand
            break
    if ndet_var is None:
        succs = transition_successors(ts, t, wit, (0, 0))
        if not succs:
            return None
        for v, k in zip(ts.variables, succs[0]):
            hints.append(f"(= {witp_names[v]} {_smt_int(k)})")
        return hints
    shape = transition_shape(ts, original)
    env = dict(zip(ts.variables, wit))
    if any(g.evaluate(env) < 0 for g in shape.guards):
        return None
    carried = {v: e.evaluate(env) for v, e in shape.updates}
    for v in ts.variables:
        if v in carried and v != ndet_var:
            hints.append(f"(= {witp_names[v]} {_smt_int(carried[v])})")
    return hints


def _attach_backward_full(cert: Certificate, band_state: Dict[str, dict]) -> bool:
    """Swap in the analysis invariant and complete the backward map."""
    cert.invariants = _band_invariants(cert.system, band_state)
    return _complete_backward(cert)


def _spliced_path(
    ts: TransitionSystem, exploration: Exploration, cert: Certificate
) -> Optional[list]:
    """Stored exploration stem to the breach source, plus the breach step."""
    (bsrc, btgt), x, xp = cert.breach
    key = (bsrc, x)
    if key not in exploration.depth:
        return None
    if not reach.step_exists(ts, (bsrc, x), (btgt, xp)):
        return None
    return _stem(exploration.parents, key) + [(btgt, xp)]


def prove_check2(
    ts: TransitionSystem,
    params: TemplateParams,
    config: SolverConfig,
    *,
    box: Optional[tuple] = None,
    ndet_box: tuple = certcheck.DEFAULT_NDET_BOX,
    max_explored: int = reach.DEFAULT_MAX_EXPLORED,
    arm_candidates: int = 3,
    budget: Optional[float] = None,
) -> ProveResult:
    """Blocker search, staged around concrete exploration.

    A short forward sweep produces both the breach witnesses to pin and,
    on success, the replayable path the certificate stores. Invariant
    templates are pinned to interval-analysis bands throughout — the solver
    only searches for the backward predicate and the breach. Pinned-witness
    slices go first (cheapest when they work); a free-witness round mops
    up. Hinted infeasibility is inconclusive by design, so every failure
    path ends in MAYBE, never a refutation.
    """
    t0 = time.monotonic()
    stages: list = []
    try:
        problem = encode_check2(ts, params)
    except EncodeError as e:
        return _maybe(f"encoding failed: {e}", t0, stages)

    state = intervals.analyze(ts)
    vbox = box if box is not None else validation_box(ts, state)
    exploration = explore(ts, (-1, 1), max_explored)
    base = _check2_base_hints(problem, ts, state)

    def out_of_time() -> bool:
        return budget is not None and time.monotonic() - t0 > budget

    failed_model = None
    for sel_name, t in problem.meta["tau_selectors"]:
        if t.source == ts.terminal:
            continue  # the terminal's self-loop never breaches anything
        for wit in _breach_arm_candidates(ts, t, exploration, arm_candidates):
            if out_of_time():
                stages.append(("budget-exhausted", "pinned rounds"))
                break
            pins = _witness_pins(problem, ts, t, wit)
            if pins is None:
                continue
            hints = base + [f"(= {sel_name} 1)"] + pins
            outcome = solve(problem, config, hints)
            stages.append(
                ("arm", f"{t.source}->{t.target}", wit, outcome.status, round(outcome.elapsed, 2))
            )
            if not outcome.is_sat:
                continue
            try:
                cert = extract_certificate(problem, outcome.model)
            except CertificateError as e:
                stages.append(("extract-failed", str(e)))
                continue
            if not _attach_backward_full(cert, state):
                stages.append(("completion-failed", f"{t.source}->{t.target}"))
                continue
            cert.reach_path = _spliced_path(ts, exploration, cert)
            report = _try_validate(cert, vbox, ndet_box)
            if report.ok:
                return _validated(cert, report, t0, stages)
            stages.append(
                ("validation-failed", [n for n, v in report.checks if not v.ok])
            )
            failed_model = outcome.model
        else:
            continue
        break

    # free-witness round: let the solver place the breach itself
    if not out_of_time():
        outcome = solve(problem, config, base)
        stages.append(("solve-free", outcome.status, round(outcome.elapsed, 2)))
        if outcome.is_sat:
            try:
                cert = extract_certificate(problem, outcome.model)
            except CertificateError as e:
                stages.append(("extract-failed", str(e)))
                return _maybe(f"model extraction failed: {e}", t0, stages)
            if _attach_backward_full(cert, state):
                cert.reach_path = _spliced_path(ts, exploration, cert)
                if cert.reach_path is None:
                    bsrc, x = cert.breach[0][0], cert.breach[1]
                    try:
                        neg = {
                            loc: complement(pp) for loc, pp in cert.backward.items()
                        }
                        res = reach.find_reachable(
                            ts,
                            lambda l, v: neg[l].holds(dict(zip(ts.variables, v))),
                            box=vbox,
                            guide=(bsrc, x),
                            max_explored=max_explored,
                        )
                        if res.found:
                            cert.reach_path = list(res.path)
                    except (TsysError, reach.ReachError):
                        pass
                report = _try_validate(cert, vbox, ndet_box)
                if report.ok:
                    return _validated(cert, report, t0, stages)
                stages.append(
                    ("validation-failed", [n for n, v in report.checks if not v.ok])
                )
                failed_model = outcome.model
            else:
                stages.append(("completion-failed", "free round"))

    extra = {}
    if failed_model is not None:
        extra["audit"] = {"model": {k: str(v) for k, v in failed_model.items()}}
    return _maybe(
        "no validated blocker breach (hinted search is incomplete)",
        t0,
        stages,
        **extra,
    )


# -- the modified check -------------------------------------------------------


def prove_modified(
    ts: TransitionSystem,
    params: TemplateParams,
    config: SolverConfig,
    *,
    box: Optional[tuple] = None,
    ndet_box: tuple = certcheck.DEFAULT_NDET_BOX,
    backward: Optional[dict] = None,
    resolution: Optional[dict] = None,
    max_explored: int = reach.DEFAULT_MAX_EXPLORED,
) -> ProveResult:
    """Ranked-walk search on the branch-form system.

    When a backward map and resolution from an earlier blocker round are
    supplied, they are pinned wholesale and the solver only searches for
    the descent region and ranking functions; otherwise it faces the whole
    problem under coefficient domains, which is usually only tractable for
    small systems.
    """
    t0 = time.monotonic()
    stages: list = []
    try:
        problem = encode_modified(ts, params, all_locations(ts))
    except EncodeError as e:
        return _maybe(f"encoding failed: {e}", t0, stages)

    state = intervals.analyze(ts)
    vbox = box if box is not None else validation_box(ts, state)
    tb: TransitionSystem = problem.meta["branch_system"]
    inv_templates = problem.meta["invariant"]
    bi_templates = problem.meta["backward"]
    ranked = intervals.rank_variables(ts, state)

    hints: List[str] = []
    for loc in sorted(inv_templates):
        (rows,) = inv_templates[loc]
        targets = intervals.pinned_rows(ts.variables, ranked, state.get(loc), len(rows))
        for row, tgt in zip(rows, targets):
            hints.extend(_pin_row_hints(row, tgt, ts.variables))

    pinned_backward = 0
    if backward is not None:
        for loc in sorted(bi_templates):
            target = backward.get(loc)
            if target is None:
                continue
            pins = pin_predicate_hints(bi_templates, loc, target, ts.variables)
            if pins is None:
                continue  # too big for the template; leave this one free
            hints.extend(pins)
            pinned_backward += 1
    free_bi = (
        [l for l in sorted(bi_templates) if backward is None or l not in backward]
        if pinned_backward
        else sorted(bi_templates)
    )
    hints += _domain_block(problem, bi_templates, free_bi, ts.variables)

    if resolution is not None:
        for key, row in sorted(problem.meta["resolution"].items()):
            if key in resolution:
                hints.extend(_pin_row_hints(row, resolution[key], ts.variables))
    else:
        hints += _resolution_hints(problem, ts.variables)

    hints += _domain_block(problem, problem.meta["descent"], sorted(problem.meta["descent"]), tb.variables)
    for loc in sorted(problem.meta["rank"]):
        hints.extend(
            _domain_hints(problem.meta["rank"][loc], tb.variables, 16, 1024)
        )
    hints += _value_box_hints(problem.meta["cinit"].values(), 1024)
    stages.append(("hints", len(hints), f"backward pinned at {pinned_backward} locations"))

    outcome = solve(problem, config, hints)
    stages.append(("solve", outcome.status, round(outcome.elapsed, 2)))
    if not outcome.is_sat:
        return _maybe(
            f"no ranked walk found (solver answered {outcome.status})", t0, stages
        )
    try:
        cert = extract_certificate(problem, outcome.model)
    except CertificateError as e:
        return _maybe(f"model extraction failed: {e}", t0, stages)
    cert.invariants = _band_invariants(ts, state)
    if not _complete_backward(cert):
        return _maybe("backward completion failed", t0, stages)

    try:
        neg = {loc: complement(pp) for loc, pp in cert.backward.items()}
        res = reach.find_reachable(
            ts,
            lambda l, v: neg[l].holds(dict(zip(ts.variables, v))),
            box=vbox,
            max_explored=max_explored,
        )
        if res.found:
            cert.reach_path = list(res.path)
    except (TsysError, reach.ReachError):
        pass

    report = _try_validate(cert, vbox, ndet_box)
    if report.ok:
        return _validated(cert, report, t0, stages)
    stages.append(("validation-failed", [n for n, v in report.checks if not v.ok]))
    return _maybe(
        "model failed revalidation",
        t0,
        stages,
        audit={"model": {k: str(v) for k, v in outcome.model.items()}},
    )


def prove(
    ts: TransitionSystem,
    check: str,
    params: TemplateParams,
    config: SolverConfig,
    **kwargs,
) -> ProveResult:
    """Dispatch one proof attempt; *check* is "1", "2", or "mod"."""
    if check == "1":
        return prove_check1(ts, params, config, **kwargs)
    if check == "2":
        return prove_check2(ts, params, config, **kwargs)
    if check == "mod":
        return prove_modified(ts, params, config, **kwargs)
    raise ValueError(f"unknown check {check!r}")
