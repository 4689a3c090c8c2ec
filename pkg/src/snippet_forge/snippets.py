"""Snippets, import declarations and set comparison.

Only the import-declaration grammar of each language is recognised; no
other parsing happens here.
"""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import DatasetError, ParseError

logger = logging.getLogger(__name__)


class Language(str, enum.Enum):
    JAVA = "java"
    PYTHON = "python"

    @property
    def suffix(self) -> str:
        return ".java" if self is Language.JAVA else ".py"

    @classmethod
    def from_suffix(cls, suffix: str) -> "Language":
        for lang in cls:
            if lang.suffix == suffix:
                return lang
        raise ValueError(f"unsupported source suffix {suffix!r}")

    @classmethod
    def coerce(cls, value: "Language | str") -> "Language":
        if isinstance(value, Language):
            return value
        return cls(str(value).lower())


class MatchCategory(str, enum.Enum):
    SAME = "Same"
    DIFFERENT = "Different"
    MISSING = "Missing"
    EXTRA = "Extra"
    NONE = "None"


_JAVA_IDENT = r"[A-Za-z_$][\w$]*"
_JAVA_IMPORT = re.compile(
    rf"^\s*import\s+(?P<static>static\s+)?"
    rf"(?P<fqn>{_JAVA_IDENT}(?:\s*\.\s*{_JAVA_IDENT})*)"
    rf"(?P<wild>\s*\.\s*\*)?\s*;?\s*$"
)
_PY_IDENT = r"[A-Za-z_]\w*"
_PY_DOTTED = rf"{_PY_IDENT}(?:\s*\.\s*{_PY_IDENT})*"
_PY_IMPORT = re.compile(rf"^\s*import\s+(?P<names>.+?)\s*;?\s*$")
_PY_FROM = re.compile(
    rf"^\s*from\s+(?P<mod>\.+(?:{_PY_DOTTED})?|{_PY_DOTTED})\s+import\s+(?P<names>.+?)\s*;?\s*$"
)
_PY_ALIASED = re.compile(rf"^(?P<name>{_PY_DOTTED})(?:\s+as\s+(?P<alias>{_PY_IDENT}))?$")
_WS = re.compile(r"\s+")


def _squash(dotted: str) -> str:
    return _WS.sub("", dotted)


@dataclass(frozen=True)
class ImportStatement:
    """One normalised import declaration.

    Equality and hashing follow the canonical form; ``raw`` is carried along
    for reporting only.
    """

    fqn: str
    language: Language
    imported_symbol: Optional[str] = None
    alias: Optional[str] = None
    wildcard: bool = False
    static: bool = False
    raw: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not self.fqn or any(ch.isspace() for ch in self.fqn):
            raise ParseError(f"invalid qualified name {self.fqn!r}")

    @property
    def canonical(self) -> str:
        if self.language is Language.JAVA:
            prefix = "import static " if self.static else "import "
            return f"{prefix}{self.fqn}{'.*' if self.wildcard else ''};"
        if self.imported_symbol is None and not self.wildcard:
            text = f"import {self.fqn}"
        else:
            text = f"from {self.fqn} import {'*' if self.wildcard else self.imported_symbol}"
        if self.alias:
            text += f" as {self.alias}"
        return text

    @property
    def simple_name(self) -> str:
        """Name the declaration binds (class name, symbol, alias or top module)."""
        if self.alias:
            return self.alias
        if self.imported_symbol:
            return self.imported_symbol
        if self.language is Language.PYTHON:
            return self.fqn.split(".")[0]
        return self.fqn.rsplit(".", 1)[-1]

    @property
    def target(self) -> str:
        """Fully qualified target, e.g. ``a.b.C`` or ``pkg.mod.sym``."""
        if self.imported_symbol:
            return f"{self.fqn}.{self.imported_symbol}"
        return self.fqn

    def __str__(self) -> str:
        return self.canonical


def _strip_line_comment(line: str, language: Language) -> str:
    marker = "//" if language is Language.JAVA else "#"
    idx = line.find(marker)
    return line if idx < 0 else line[:idx]


def _parse_java(line: str) -> list[ImportStatement]:
    text = _strip_line_comment(line, Language.JAVA).strip()
    pieces = [p.strip() for p in text.split(";") if p.strip()]
    if not pieces:
        raise ParseError(f"not a Java import: {line!r}")
    out = []
    for piece in pieces:
        m = _JAVA_IMPORT.match(piece)
        if not m:
            raise ParseError(f"not a Java import: {line!r}")
        out.append(
            ImportStatement(
                fqn=_squash(m["fqn"]),
                language=Language.JAVA,
                wildcard=m["wild"] is not None,
                static=m["static"] is not None,
                raw=line.rstrip("\r\n"),
            )
        )
    return out


def _split_names(names: str) -> list[str]:
    names = names.strip()
    if names.startswith("(") and names.endswith(")"):
        names = names[1:-1]
    parts = [p.strip() for p in names.split(",")]
    # trailing comma inside parentheses is legal
    if parts and parts[-1] == "":
        parts.pop()
    return parts


def _parse_python(line: str) -> list[ImportStatement]:
    text = _strip_line_comment(line, Language.PYTHON).strip()
    raw = line.rstrip("\r\n")
    m = _PY_FROM.match(text)
    if m:
        module = _squash(m["mod"])
        names = m["names"].strip()
        if names == "*":
            return [ImportStatement(fqn=module, language=Language.PYTHON, wildcard=True, raw=raw)]
        out = []
        for part in _split_names(names):
            am = _PY_ALIASED.match(part)
            if not am or "." in am["name"]:
                raise ParseError(f"not a Python import: {line!r}")
            out.append(
                ImportStatement(
                    fqn=module,
                    language=Language.PYTHON,
                    imported_symbol=am["name"],
                    alias=am["alias"],
                    raw=raw,
                )
            )
        if not out:
            raise ParseError(f"not a Python import: {line!r}")
        return out
    m = _PY_IMPORT.match(text)
    if m:
        out = []
        for part in _split_names(m["names"]):
            am = _PY_ALIASED.match(part)
            if not am:
                raise ParseError(f"not a Python import: {line!r}")
            out.append(
                ImportStatement(
                    fqn=_squash(am["name"]), language=Language.PYTHON, alias=am["alias"], raw=raw
                )
            )
        if out:
            return out
    raise ParseError(f"not a Python import: {line!r}")


def parse_import_line(line: str, language: Language | str) -> list[ImportStatement]:
    """Parse one physical line that may hold several declarations.

    ``import os, sys`` and ``import a.B; import c.D;`` expand to two entries.
    """
    language = Language.coerce(language)
    if "\n" in line.rstrip("\r\n"):
        raise ParseError("expected a single physical line")
    if language is Language.JAVA:
        return _parse_java(line)
    return _parse_python(line)


def parse_import_statement(line: str, language: Language | str) -> ImportStatement:
    stmts = parse_import_line(line, language)
    if len(stmts) != 1:
        raise ParseError(f"line holds {len(stmts)} declarations: {line!r}")
    return stmts[0]


def try_parse_import_line(line: str, language: Language | str) -> list[ImportStatement] | None:
    try:
        return parse_import_line(line, language)
    except ParseError:
        return None


class ImportSet:
    """Immutable, order-insensitive set of import statements."""

    __slots__ = ("_items",)

    def __init__(self, entries: Iterable[ImportStatement] = ()) -> None:
        object.__setattr__(self, "_items", frozenset(entries))

    def __setattr__(self, name, value):
        raise AttributeError("ImportSet is immutable")

    @classmethod
    def parse(cls, text: str, language: Language | str) -> "ImportSet":
        """Parse newline-separated declarations; blank and comment lines are skipped."""
        language = Language.coerce(language)
        entries = []
        for line in text.splitlines():
            stripped = line.strip()
            if not stripped or stripped.startswith(("//", "#")):
                continue
            entries.extend(parse_import_line(line, language))
        return cls(entries)

    @property
    def entries(self) -> frozenset[ImportStatement]:
        return self._items

    def __iter__(self) -> Iterator[ImportStatement]:
        return iter(sorted(self._items, key=lambda s: s.canonical))

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __contains__(self, item: object) -> bool:
        return item in self._items

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ImportSet):
            return self._items == other._items
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._items)

    def __le__(self, other: "ImportSet") -> bool:
        return self._items <= other._items

    def __lt__(self, other: "ImportSet") -> bool:
        return self._items < other._items

    def __ge__(self, other: "ImportSet") -> bool:
        return self._items >= other._items

    def __gt__(self, other: "ImportSet") -> bool:
        return self._items > other._items

    def __and__(self, other: "ImportSet") -> "ImportSet":
        return ImportSet(self._items & other._items)

    def __or__(self, other: "ImportSet") -> "ImportSet":
        return ImportSet(self._items | other._items)

    def __sub__(self, other: "ImportSet") -> "ImportSet":
        return ImportSet(self._items - other._items)

    def canonical_lines(self) -> list[str]:
        return [s.canonical for s in self]

    def serialize(self) -> str:
        return "\n".join(self.canonical_lines())

    @property
    def has_wildcard(self) -> bool:
        return any(s.wildcard for s in self._items)

    def __repr__(self) -> str:
        return f"ImportSet({self.canonical_lines()!r})"


@dataclass(frozen=True)
class CodeSnippet:
    id: str
    language: Language
    library_label: str
    body: str
    ground_truth: Optional[ImportSet] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "language", Language.coerce(self.language))


def _logical_lines(source: str, language: Language) -> list[tuple[list[str], str]]:
    """Group physical lines into logical lines.

    Python parenthesised and backslash-continued imports span several
    physical lines; everything else is one line per group.
    """
    physical = source.splitlines(keepends=True)
    groups: list[tuple[list[str], str]] = []
    i = 0
    while i < len(physical):
        line = physical[i]
        chunk = [line]
        if language is Language.PYTHON and re.match(r"^\s*(from|import)\s", line):
            joined = line.rstrip("\r\n")
            while i + 1 < len(physical) and (
                joined.rstrip().endswith("\\")
                or (joined.count("(") > joined.count(")"))
            ):
                i += 1
                chunk.append(physical[i])
                joined = joined.rstrip().rstrip("\\") + " " + physical[i].strip()
            groups.append((chunk, joined))
        else:
            groups.append((chunk, line.rstrip("\r\n")))
        i += 1
    return groups


def strip_imports(source: str, language: Language | str) -> tuple[str, ImportSet]:
    """Remove every import declaration; other lines stay byte-identical."""
    language = Language.coerce(language)
    kept: list[str] = []
    removed: list[ImportStatement] = []
    for chunk, logical in _logical_lines(source, language):
        stmts = try_parse_import_line(logical, language)
        if stmts is None:
            kept.extend(chunk)
        else:
            removed.extend(stmts)
    return "".join(kept), ImportSet(removed)


def prepend_imports(body: str, imports: ImportSet) -> str:
    """Place canonical import lines before the body.

    A leading Java ``package`` declaration stays first.
    """
    if not imports:
        return body
    header = "".join(line + "\n" for line in imports.canonical_lines())
    lines = body.splitlines(keepends=True)
    for idx, line in enumerate(lines):
        stripped = line.strip()
        if not stripped or stripped.startswith(("//", "/*", "*")):
            continue
        if stripped.startswith("package ") and stripped.endswith(";"):
            return "".join(lines[: idx + 1]) + header + "".join(lines[idx + 1 :])
        break
    return header + body


def classify_match(pred: ImportSet, truth: ImportSet) -> MatchCategory:
    # Precedence: Same > None > Extra > Missing > Different
    if pred == truth:
        return MatchCategory.SAME
    if not pred:
        return MatchCategory.NONE
    if pred > truth:
        return MatchCategory.EXTRA
    if pred < truth:
        return MatchCategory.MISSING
    return MatchCategory.DIFFERENT


def load_dataset(root: Path | str, libraries: Iterable[str] | None = None) -> list[CodeSnippet]:
    """Load ``<root>/<library>/<id>.{java,py}`` with sibling ``<id>.imports``."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    wanted = set(libraries) if libraries is not None else None
    snippets = []
    for libdir in sorted(p for p in root.iterdir() if p.is_dir()):
        if wanted is not None and libdir.name not in wanted:
            continue
        for src in sorted(libdir.iterdir()):
            if src.suffix not in (".java", ".py"):
                continue
            language = Language.from_suffix(src.suffix)
            text = src.read_text(encoding="utf-8")
            body, removed = strip_imports(text, language)
            if removed:
                logger.warning("%s: stripped %d import line(s) from source", src, len(removed))
            truth_path = src.with_suffix(".imports")
            truth = None
            if truth_path.exists():
                truth = ImportSet.parse(truth_path.read_text(encoding="utf-8"), language)
            snippets.append(
                CodeSnippet(
                    id=f"{libdir.name}/{src.stem}",
                    language=language,
                    library_label=libdir.name,
                    body=body,
                    ground_truth=truth,
                )
            )
    return snippets
