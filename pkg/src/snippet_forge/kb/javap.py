"""Fallback ingestion through the ``javap`` disassembler.

Parses ``javap -p`` listings instead of reading class files directly.
Members are the declared ones only: unlike :func:`ingest_archive`, no
inherited members are flattened in.
"""
from __future__ import annotations

import re
import shutil
import subprocess
import zipfile
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import Optional

from ..errors import ArchiveCorrupt, MissingModificationDate, ToolMissing
from .index import ClassRecord, LibraryArtifact, _parse_date, archive_date

_HEADER = re.compile(
    r"^(?P<mods>(?:(?:public|protected|private|abstract|static|final|sealed|non-sealed|strictfp)\s+)*)"
    r"(?P<kind>class|interface|enum|@interface|record)\s+(?P<name>[\w.$]+)"
)
_METHOD = re.compile(r"([\w$<>]+)\s*\(")


@dataclass
class JavapClass:
    name: str
    kind: str
    modifiers: frozenset[str]
    methods: set[str]
    fields: set[str]

    @property
    def concrete(self) -> bool:
        return self.kind in ("class", "enum", "record") and "abstract" not in self.modifiers


def parse_javap_listing(text: str) -> list[JavapClass]:
    """Parse concatenated ``javap -p`` output for one or more classes."""
    classes: list[JavapClass] = []
    current: Optional[JavapClass] = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("Compiled from"):
            continue
        if current is None:
            m = _HEADER.match(line)
            if m:
                mods = frozenset(m["mods"].split())
                current = JavapClass(m["name"], m["kind"], mods, set(), set())
            continue
        if line == "}":
            classes.append(current)
            current = None
            continue
        if not line.endswith(";") or line.startswith("static {}"):
            continue
        decl = line[:-1]
        if "(" in decl:
            # drop generic prefixes like "<T>" before locating the name
            m = None
            for m in _METHOD.finditer(decl.split("(")[0] + "("):
                pass
            if m is None:
                continue
            name = m.group(1).rsplit(".", 1)[-1]
            simple = current.name.rsplit(".", 1)[-1].rsplit("$", 1)[-1]
            if name not in (simple, "<init>", "<clinit>"):
                current.methods.add(name)
        else:
            decl = decl.split("=")[0].strip()
            current.fields.add(decl.split()[-1])
    return classes


def _class_names(zf: zipfile.ZipFile) -> list[str]:
    out = []
    for name in zf.namelist():
        if name.endswith(".class") and not name.endswith(("module-info.class", "package-info.class")):
            out.append(name[:-6].replace("/", "."))
    return sorted(out)


class JavapIngestor:
    def __init__(self, javap: str | None = None, batch: int = 200, timeout: float = 300.0):
        self.javap = javap or shutil.which("javap")
        self.batch = batch
        self.timeout = timeout

    def ingest(self, path: Path | str, artifact_id: Optional[str] = None,
               override_date: str | date | datetime | None = None) -> tuple[LibraryArtifact, list[ClassRecord]]:
        if not self.javap:
            raise ToolMissing("javap not found")
        path = Path(path)
        artifact_id = artifact_id or path.stem
        try:
            with zipfile.ZipFile(path) as zf:
                stamp = _parse_date(override_date) if override_date is not None else archive_date(zf)
                names = _class_names(zf)
        except zipfile.BadZipFile as exc:
            raise ArchiveCorrupt(f"{path}: {exc}") from exc
        if stamp is None:
            raise MissingModificationDate(f"{path}: no usable date; supply an override")
        listing = []
        for i in range(0, len(names), self.batch):
            proc = subprocess.run(
                [self.javap, "-p", "-cp", str(path), *names[i:i + self.batch]],
                capture_output=True, text=True, timeout=self.timeout,
            )
            listing.append(proc.stdout)
        records = []
        for cls in parse_javap_listing("\n".join(listing)):
            simple = cls.name.rsplit(".", 1)[-1]
            if not cls.concrete or any(p[:1].isdigit() for p in simple.split("$")[1:]):
                continue
            records.append(ClassRecord(cls.name.replace("$", "."), artifact_id,
                                       frozenset(cls.methods), frozenset(cls.fields)))
        return LibraryArtifact(artifact_id, str(path), stamp), records
