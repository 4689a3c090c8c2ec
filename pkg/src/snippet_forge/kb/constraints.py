"""Usage constraints (invoked methods, accessed fields) per imported class.

A regex pass over the snippet, not a parser: it only sees variables
declared with the imported simple type name, static member access through
that name, and the first call chained onto ``new Type(...)``.
"""
from __future__ import annotations

import re
from collections import defaultdict

from ..snippets import ImportSet, Language, strip_imports
from .index import ConstraintQuery

_STRING_OR_COMMENT = re.compile(r'"(?:\\.|[^"\\])*"|\'(?:\\.|[^\'\\])*\'|//[^\n]*|/\*.*?\*/', re.DOTALL)


def _scrub(code: str) -> str:
    return _STRING_OR_COMMENT.sub(lambda m: " " * len(m.group(0)) if m.group(0)[0] in "/" else '""', code)


def _members(code: str, receiver: str) -> tuple[set[str], set[str]]:
    methods, fields_ = set(), set()
    for m in re.finditer(rf"(?<![\w$.])\b{re.escape(receiver)}\s*\.\s*([A-Za-z_$][\w$]*)(\s*\()?", code):
        name, call = m.group(1), m.group(2)
        if call:
            methods.add(name)
        elif not name[:1].isupper() or name.isupper():
            # Capitalised names that are not CONSTANTS are nested types
            fields_.add(name)
    return methods, fields_


def extract_constraints(code: str, imports: ImportSet | None = None) -> dict[str, ConstraintQuery]:
    """Map each imported class FQN to the members the code uses on it."""
    body, found = strip_imports(code, Language.JAVA)
    imports = found if imports is None else imports
    text = _scrub(body)
    methods: dict[str, set[str]] = defaultdict(set)
    fields_: dict[str, set[str]] = defaultdict(set)
    for stmt in imports:
        if stmt.wildcard or stmt.language is not Language.JAVA:
            continue
        fqn = stmt.fqn
        simple = fqn.rsplit(".", 1)[-1]
        if stmt.static:
            continue
        receivers = {simple}
        decl = re.compile(
            rf"(?<![\w$.])\b{re.escape(simple)}\s*(?:<[^;(){{}}=]*?>)?\s*(?:\[\s*\]\s*)*\s+([a-z_$][\w$]*)\s*(?=[=;,):])"
        )
        receivers.update(m.group(1) for m in decl.finditer(text))
        for receiver in receivers:
            ms, fs = _members(text, receiver)
            methods[fqn] |= ms
            fields_[fqn] |= fs
        chained = re.compile(rf"\bnew\s+{re.escape(simple)}\s*(?:<[^;]*?>)?\s*\([^;{{}}]*?\)\s*\.\s*([A-Za-z_$][\w$]*)\s*\(")
        methods[fqn].update(m.group(1) for m in chained.finditer(text))
    out = {}
    for stmt in imports:
        if stmt.wildcard or stmt.static or stmt.language is not Language.JAVA:
            continue
        out[stmt.fqn] = ConstraintQuery(stmt.fqn, frozenset(methods[stmt.fqn]), frozenset(fields_[stmt.fqn]))
    return out
