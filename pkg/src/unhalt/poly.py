"""Integer multivariate polynomials with exact arithmetic.

Monomials are canonical tuples ((var, exp), ...) sorted by variable name;
a polynomial is a mapping from monomials to nonzero int coefficients. The
empty monomial () is the constant term. Primed variables use the surface
convention "x'" and are ordinary variables as far as this module cares.
"""

from __future__ import annotations

from typing import Iterable, Mapping

Monomial = tuple  # tuple[tuple[str, int], ...]

ONE_MONO: Monomial = ()


def _mul_mono(a: Monomial, b: Monomial) -> Monomial:
    exps: dict[str, int] = dict(a)
    for v, e in b:
        exps[v] = exps.get(v, 0) + e
    return tuple(sorted(exps.items()))


class Poly:
    """Immutable polynomial over named integer variables."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, int] | Iterable = ()):
        d = dict(terms)
        self.terms: dict[Monomial, int] = {m: c for m, c in d.items() if c != 0}
        self._hash = None

    @staticmethod
    def const(k: int) -> "Poly":
        return Poly({ONE_MONO: int(k)})

    @staticmethod
    def var(name: str) -> "Poly":
        return Poly({((name, 1),): 1})

    @staticmethod
    def monomial(mono: Monomial, coef: int = 1) -> "Poly":
        return Poly({mono: coef})

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Poly":
        other = _coerce(other)
        terms = dict(self.terms)
        for m, c in other.terms.items():
            terms[m] = terms.get(m, 0) + c
        return Poly(terms)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "Poly":
        return _coerce(other) + (-self)

    def __mul__(self, other) -> "Poly":
        other = _coerce(other)
        terms: dict[Monomial, int] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mul_mono(m1, m2)
                terms[m] = terms.get(m, 0) + c1 * c2
        return Poly(terms)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("negative power")
        out = Poly.const(1)
        for _ in range(n):
            out = out * self
        return out

    # -- queries ------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def is_const(self) -> bool:
        return all(m == ONE_MONO for m in self.terms)

    def const_value(self) -> int:
        if not self.is_const():
            raise ValueError(f"not a constant: {self}")
        return self.terms.get(ONE_MONO, 0)

    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e for _, e in m) for m in self.terms)

    def variables(self) -> frozenset:
        return frozenset(v for m in self.terms for v, _ in m)

    def coefficient(self, mono: Monomial) -> int:
        return self.terms.get(mono, 0)

    # -- evaluation / substitution ------------------------------------------

    def evaluate(self, env: Mapping[str, int]) -> int:
        total = 0
        for m, c in self.terms.items():
            val = c
            for v, e in m:
                val *= env[v] ** e
            total += val
        return total

    def substitute(self, env: Mapping[str, "Poly"]) -> "Poly":
        """Replace variables by polynomials; unmapped variables stay."""
        out = Poly()
        for m, c in self.terms.items():
            term = Poly.const(c)
            for v, e in m:
                base = env.get(v)
                if base is None:
                    base = Poly.var(v)
                term = term * base ** e
            out = out + term
        return out

    def rename(self, mapping: Mapping[str, str]) -> "Poly":
        terms: dict[Monomial, int] = {}
        for m, c in self.terms.items():
            nm = tuple(sorted((mapping.get(v, v), e) for v, e in m))
            terms[nm] = terms.get(nm, 0) + c
        return Poly(terms)

    # -- io -------------------------------------------------------------------

    def to_sexp(self):
        parts = []
        for m, c in sorted(self.terms.items()):
            factors: list = []
            for v, e in m:
                factors.extend([v] * e)
            if c == 1 and factors:
                part = factors[0] if len(factors) == 1 else ["*"] + factors
            elif not factors:
                part = c
            else:
                part = ["*", c] + factors
            parts.append(part)
        if not parts:
            return 0
        if len(parts) == 1:
            return parts[0]
        return ["+"] + parts

    @staticmethod
    def from_sexp(form) -> "Poly":
        if isinstance(form, bool):
            raise ValueError("bool in polynomial")
        if isinstance(form, int):
            return Poly.const(form)
        if isinstance(form, str):
            return Poly.var(form)
        if not isinstance(form, (list, tuple)) or not form:
            raise ValueError(f"bad polynomial form: {form!r}")
        op, args = form[0], form[1:]
        if op == "+":
            out = Poly()
            for a in args:
                out = out + Poly.from_sexp(a)
            return out
        if op == "*":
            out = Poly.const(1)
            for a in args:
                out = out * Poly.from_sexp(a)
            return out
        if op == "-":
            if len(args) == 1:
                return -Poly.from_sexp(args[0])
            out = Poly.from_sexp(args[0])
            for a in args[1:]:
                out = out - Poly.from_sexp(a)
            return out
        raise ValueError(f"unknown polynomial operator: {op!r}")

    # -- dunder ---------------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, int):
            other = Poly.const(other)
        if not isinstance(other, Poly):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(sorted(self.terms.items())))
        return self._hash

    def __str__(self):
        if not self.terms:
            return "0"
        bits = []
        for m, c in sorted(self.terms.items()):
            mono = "*".join(v if e == 1 else f"{v}^{e}" for v, e in m)
            if not mono:
                bits.append(str(c))
            elif c == 1:
                bits.append(mono)
            elif c == -1:
                bits.append(f"-{mono}")
            else:
                bits.append(f"{c}*{mono}")
        out = " + ".join(bits)
        return out.replace("+ -", "- ")

    def __repr__(self):
        return f"Poly({self})"


def _coerce(x) -> Poly:
    if isinstance(x, Poly):
        return x
    if isinstance(x, int) and not isinstance(x, bool):
        return Poly.const(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to Poly")
