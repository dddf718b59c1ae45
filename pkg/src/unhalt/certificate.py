"""Non-termination certificates: data model and file format.

A certificate packages everything needed to re-check a NO verdict without
the solver:

* ``check1`` — a resolution of the nondeterministic assignments, an initial
  configuration ``start``, and an ``invariants`` map that is inductive for
  the restricted system, contains ``start``, and is false at the terminal
  location: the pinned run can never terminate.
* ``check2`` — an ``invariants`` map for the full system (its value at the
  terminal location over-approximates the valuations of terminating runs),
  a ``backward`` map that is inductive for the reversed restricted system
  seeded with that terminal predicate, a ``breach`` witnessing that
  ``backward`` is not inductive forward, and a ``reach_path`` showing some
  configuration outside ``backward`` is reachable: that configuration has
  no terminating run.
* ``modified`` — check2's backward data on the assignment-form system plus
  a ``descent`` region and per-location ``rank`` on the branch-form twin
  (``branch_system``), giving a constructive path into the complement of
  ``backward`` from ``start``.

Certificates are stored as S-expression text with embedded systems, so a
file is self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import sexp
from .poly import Poly
from .tsys import (
    PredicateMap,
    TransitionSystem,
    predicate_from_sexp,
    predicate_to_sexp,
    system_from_sexp,
    system_to_sexp,
)

KINDS = ("check1", "check2", "modified")


class CertificateError(ValueError):
    pass


@dataclass
class Certificate:
    kind: str
    system: TransitionSystem
    params: dict = field(default_factory=dict)  # template sizes, solver info
    resolution: dict = field(default_factory=dict)  # transition key -> Poly
    invariants: Optional[PredicateMap] = None
    backward: Optional[PredicateMap] = None
    start: Optional[tuple] = None  # pinned initial valuation
    breach: Optional[tuple] = None  # (transition key, from vals, to vals)
    reach_path: Optional[list] = None  # [(loc, vals), ...]
    branch_system: Optional[TransitionSystem] = None
    descent: Optional[PredicateMap] = None
    rank: Optional[dict] = None  # location -> Poly
    audit: dict = field(default_factory=dict)  # solver bookkeeping, freeform

    def __post_init__(self):
        if self.kind not in KINDS:
            raise CertificateError(f"unknown certificate kind {self.kind!r}")


# ---------------------------------------------------------------------------
# serialization helpers


def _vals_to_sexp(variables, vals):
    return [[v, int(k)] for v, k in zip(variables, vals)]


def _vals_from_sexp(variables, forms) -> tuple:
    env = {}
    for f in forms:
        if not (isinstance(f, list) and len(f) == 2 and isinstance(f[1], int)):
            raise CertificateError(f"bad valuation entry {f!r}")
        env[f[0]] = f[1]
    missing = [v for v in variables if v not in env]
    if missing:
        raise CertificateError(f"valuation missing {missing}")
    return tuple(env[v] for v in variables)


def _pm_to_sexp(tag, pm: PredicateMap):
    return [tag] + [[loc, predicate_to_sexp(pp)] for loc, pp in pm.items()]


def _pm_from_sexp(forms) -> PredicateMap:
    out: PredicateMap = {}
    for f in forms:
        if not (isinstance(f, list) and len(f) == 2):
            raise CertificateError(f"bad predicate entry {f!r}")
        out[f[0]] = predicate_from_sexp(f[1])
    return out


def certificate_to_sexp(cert: Certificate):
    out = [["kind", cert.kind]]
    if cert.params:
        out.append(["params"] + [[k, v] for k, v in sorted(cert.params.items())])
    sysvars = cert.system.variables
    if cert.start is not None:
        out.append(["start"] + _vals_to_sexp(sysvars, cert.start))
    if cert.resolution:
        entries = []
        for key, poly in sorted(cert.resolution.items(), key=lambda kv: kv[0]):
            src, tgt, var = key
            entries.append([[src, tgt, var], poly.to_sexp()])
        out.append(["resolution"] + entries)
    if cert.invariants is not None:
        out.append(_pm_to_sexp("invariants", cert.invariants))
    if cert.backward is not None:
        out.append(_pm_to_sexp("backward", cert.backward))
    if cert.breach is not None:
        key, src_vals, tgt_vals = cert.breach
        out.append(
            [
                "breach",
                ["transition", key[0], key[1]],
                ["from"] + _vals_to_sexp(sysvars, src_vals),
                ["to"] + _vals_to_sexp(sysvars, tgt_vals),
            ]
        )
    if cert.reach_path is not None:
        out.append(
            ["reach-path"]
            + [[loc] + _vals_to_sexp(sysvars, vals) for loc, vals in cert.reach_path]
        )
    if cert.branch_system is not None:
        out.append(["branch-system", system_to_sexp(cert.branch_system)])
    if cert.descent is not None:
        out.append(_pm_to_sexp("descent", cert.descent))
    if cert.rank is not None:
        out.append(["rank"] + [[loc, p.to_sexp()] for loc, p in cert.rank.items()])
    if cert.audit:
        out.append(["audit"] + [[k, v] for k, v in sorted(cert.audit.items())])
    out.append(["system", system_to_sexp(cert.system)])
    return ["certificate"] + out


def certificate_from_sexp(form) -> Certificate:
    if not (isinstance(form, list) and form and form[0] == "certificate"):
        raise CertificateError("expected (certificate ...)")
    fields_: dict = {}
    for item in form[1:]:
        if not (isinstance(item, list) and item and isinstance(item[0], str)):
            raise CertificateError(f"bad certificate item {item!r}")
        fields_[item[0]] = item[1:]
    if "kind" not in fields_ or "system" not in fields_:
        raise CertificateError("certificate needs kind and system")
    kind = fields_["kind"][0]
    system = system_from_sexp(fields_["system"][0])
    sysvars = system.variables
    cert = Certificate(kind=kind, system=system)
    if "params" in fields_:
        cert.params = {f[0]: f[1] for f in fields_["params"]}
    if "start" in fields_:
        cert.start = _vals_from_sexp(sysvars, fields_["start"])
    if "resolution" in fields_:
        for entry in fields_["resolution"]:
            if not (isinstance(entry, list) and len(entry) == 2):
                raise CertificateError(f"bad resolution entry {entry!r}")
            key_form, poly_form = entry
            if not (isinstance(key_form, list) and len(key_form) == 3):
                raise CertificateError(f"bad resolution key {key_form!r}")
            key = (key_form[0], key_form[1], key_form[2])
            cert.resolution[key] = Poly.from_sexp(poly_form)
    if "invariants" in fields_:
        cert.invariants = _pm_from_sexp(fields_["invariants"])
    if "backward" in fields_:
        cert.backward = _pm_from_sexp(fields_["backward"])
    if "breach" in fields_:
        parts = {f[0]: f[1:] for f in fields_["breach"]}
        try:
            tkey = parts["transition"]
            src_vals = _vals_from_sexp(sysvars, parts["from"])
            tgt_vals = _vals_from_sexp(sysvars, parts["to"])
        except KeyError as e:
            raise CertificateError(f"breach missing {e.args[0]!r}") from None
        cert.breach = ((tkey[0], tkey[1]), src_vals, tgt_vals)
    if "reach-path" in fields_:
        path = []
        for f in fields_["reach-path"]:
            if not (isinstance(f, list) and f):
                raise CertificateError(f"bad path entry {f!r}")
            path.append((f[0], _vals_from_sexp(sysvars, f[1:])))
        cert.reach_path = path
    if "branch-system" in fields_:
        cert.branch_system = system_from_sexp(fields_["branch-system"][0])
    if "descent" in fields_:
        cert.descent = _pm_from_sexp(fields_["descent"])
    if "rank" in fields_:
        cert.rank = {f[0]: Poly.from_sexp(f[1]) for f in fields_["rank"]}
    if "audit" in fields_:
        cert.audit = {f[0]: f[1] for f in fields_["audit"]}
    return cert


def save(cert: Certificate, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(sexp.pretty(certificate_to_sexp(cert)) + "\n")


def load(path) -> Certificate:
    with open(path, "r", encoding="utf-8") as fh:
        return certificate_from_sexp(sexp.loads_one(fh.read()))
