"""Minimal S-expression reader and writer.

Used for the transition-system interchange format, certificate files, and
for parsing solver output. Atoms are ints or bare symbol strings; forms are
Python lists. Line comments start with ';'.
"""

from __future__ import annotations

import re

Form = object  # int | str | list["Form"]

_TOKEN = re.compile(r"""\s*(?:(;[^\n]*)|([()])|([^\s();]+))""")
_INT = re.compile(r"^-?\d+$")


class SexpError(ValueError):
    pass


def tokenize(text: str):
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        pos = m.end()
        if m.group(1) is not None:
            continue  # comment
        tok = m.group(2) or m.group(3)
        if tok:
            yield tok
    rest = text[pos:].strip()
    if rest:
        raise SexpError(f"unreadable input near: {rest[:30]!r}")


def _atom(tok: str):
    if _INT.match(tok):
        return int(tok)
    return tok


def loads(text: str) -> list:
    """Parse all top-level forms in *text*."""
    stack: list[list] = []
    top: list = []
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise SexpError("unbalanced ')'")
            done = stack.pop()
            (stack[-1] if stack else top).append(done)
        else:
            (stack[-1] if stack else top).append(_atom(tok))
    if stack:
        raise SexpError("unbalanced '('")
    return top


def loads_one(text: str) -> Form:
    forms = loads(text)
    if len(forms) != 1:
        raise SexpError(f"expected exactly one form, got {len(forms)}")
    return forms[0]


def dumps(form: Form) -> str:
    if isinstance(form, bool):
        raise SexpError("bool is not a valid atom")
    if isinstance(form, int):
        return str(form)
    if isinstance(form, str):
        return form
    if isinstance(form, (list, tuple)):
        return "(" + " ".join(dumps(f) for f in form) + ")"
    raise SexpError(f"cannot serialize {type(form).__name__}")


def pretty(form: Form, width: int = 100, indent: int = 0) -> str:
    """Render with one child per line when a form would overflow *width*."""
    flat = dumps(form)
    if len(flat) + indent <= width or not isinstance(form, (list, tuple)):
        return flat
    pad = " " * (indent + 2)
    parts = []
    for f in form:
        parts.append(pad + pretty(f, width, indent + 2))
    head = parts[0].lstrip() if parts else ""
    body = "\n".join(parts[1:])
    out = "(" + head
    if body:
        out += "\n" + body
    return out + ")"
