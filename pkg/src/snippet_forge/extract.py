"""Pull import declarations and code out of free-text model replies."""
from __future__ import annotations

import logging
import re

from .errors import NoCodeFound
from .snippets import ImportSet, ImportStatement, Language, try_parse_import_line

logger = logging.getLogger(__name__)

_FENCE = re.compile(r"^\s*```")
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+")
_JAVA_ITEM = re.compile(r"^[A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)+(?P<wild>\.\*)?$")
_PY_ITEM = re.compile(r"^[A-Za-z_]\w*(?:\.[A-Za-z_]\w*)*$")
_ITEM_SPLIT = re.compile(r"\s*(?:[;,\n]|\band\b)\s*")

_PY_KEYWORDS = {
    "def", "class", "if", "elif", "else", "for", "while", "with", "try", "except",
    "finally", "async", "match", "case", "lambda", "return", "import", "from",
}


def _clean(line: str) -> str:
    line = _BULLET.sub("", line.strip())
    return line.strip().strip("`").strip()


def _prose_items(text: str, language: Language, allow_bare: bool) -> list[ImportStatement]:
    out = []
    for item in _ITEM_SPLIT.split(text):
        item = item.strip().strip("`'\"").rstrip(".").strip()
        if not item:
            continue
        if item.startswith(("import ", "from ")):
            stmts = try_parse_import_line(item + (";" if language is Language.JAVA else ""), language)
            out.extend(stmts or [])
            continue
        if language is Language.JAVA:
            m = _JAVA_ITEM.match(item)
            if m:
                fqn = item[:-2] if m["wild"] else item
                out.append(ImportStatement(fqn=fqn, language=language, wildcard=bool(m["wild"]), raw=item))
        elif _PY_ITEM.match(item) and ("." in item or allow_bare):
            out.append(ImportStatement(fqn=item, language=language, raw=item))
    return out


def extract_import_statements(text: str, language: Language | str) -> ImportSet:
    """Collect every import the reply mentions.

    Recognises declaration lines (possibly bulleted or back-quoted) and
    colon-introduced prose lists such as ``requires the following imports:
    a.B; c.D``.  A reply with neither yields the empty set.
    """
    language = Language.coerce(language)
    found: list[ImportStatement] = []
    list_open = False
    allow_bare = False
    for raw_line in text.splitlines():
        if _FENCE.match(raw_line):
            continue
        line = _clean(raw_line)
        if not line:
            continue
        stmts = try_parse_import_line(line, language)
        if stmts is not None:
            found.extend(stmts)
            continue
        if ":" in line:
            head, _, tail = line.partition(":")
            allow_bare = "import" in head.lower() or "module" in head.lower()
            # "... the following imports: from x import y" carries a whole declaration
            stmts = try_parse_import_line(_clean(tail), language) if tail.strip() else None
            items = stmts if stmts is not None else _prose_items(tail, language, allow_bare)
            found.extend(items)
            list_open = not tail.strip()
            continue
        if list_open:
            items = _prose_items(line, language, allow_bare)
            if items:
                found.extend(items)
                continue
            list_open = False
    if not found and text.strip():
        logger.info("no import statements recognised in reply: %.80r", text)
    return ImportSet(found)


_BLOCK = re.compile(r"```[^\n]*\n(.*?)(?:```|\Z)", re.DOTALL)


def _is_prose(line: str, language: Language) -> bool:
    stripped = line.strip()
    if not stripped or stripped.startswith(("//", "#", "/*", "*", "@")):
        return False
    if any(ch in stripped for ch in "=;{}"):
        return False
    if not stripped[-1] in ".!?:":
        return False
    words = stripped.split()
    if len(words) < 3 or not stripped[0].isalpha():
        return False
    if language is Language.PYTHON and stripped.endswith(":"):
        if line[:1].isspace() or words[0] in _PY_KEYWORDS:
            return False
    return True


def extract_code_block(text: str, language: Language | str) -> str:
    """Largest fenced block, else the reply minus prose lines."""
    language = Language.coerce(language)
    blocks = _BLOCK.findall(text)
    if blocks:
        best = max(blocks, key=len)
        if best.strip():
            return best
        raise NoCodeFound("fenced block is empty")
    lines = text.splitlines(keepends=True)
    kept = [ln for ln in lines if not _is_prose(ln, language)]
    if len(kept) == len(lines):
        result = text
    else:
        result = "".join(kept).strip("\n") + "\n"
    if not result.strip():
        raise NoCodeFound("reply contains no code")
    return result
