"""Inverse index from class FQN to the library archives that define it."""
from __future__ import annotations

import json
import logging
import zipfile
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Iterable, Mapping, Optional

from ..errors import (
    ArchiveCorrupt,
    ClassParseError,
    CorruptIndex,
    FormatVersionMismatch,
    MissingModificationDate,
)
from ..snippets import ImportSet
from .classfile import ClassInfo, parse_class

logger = logging.getLogger(__name__)

INDEX_FORMAT = "snippet-forge-kb"
INDEX_VERSION = 1

# members every class has; never useful for telling candidates apart
OBJECT_MEMBERS = frozenset(
    {"toString", "equals", "hashCode", "getClass", "notify", "notifyAll", "wait", "clone", "finalize"}
)

PLATFORM_PREFIXES = ("java.", "javax.", "jdk.", "sun.", "com.sun.", "org.w3c.dom.", "org.xml.sax.")

# zip entries stamped at the DOS epoch carry no real date
_DOS_EPOCH = (1980, 1, 1)


@dataclass(frozen=True)
class LibraryArtifact:
    artifact_id: str
    archive_path: str
    last_modified: datetime


@dataclass(frozen=True)
class ClassRecord:
    fqn: str
    artifact_id: str
    methods: frozenset[str] = frozenset()
    fields_: frozenset[str] = frozenset()
    kind: str = "Class"


@dataclass(frozen=True)
class ConstraintQuery:
    fqn: str
    required_methods: frozenset[str] = frozenset()
    required_fields: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.fqn:
            raise ValueError("constraint query needs an fqn")
        object.__setattr__(self, "required_methods", frozenset(self.required_methods))
        object.__setattr__(self, "required_fields", frozenset(self.required_fields))


def _parse_date(value: str | date | datetime) -> datetime:
    if isinstance(value, datetime):
        return value
    if isinstance(value, date):
        return datetime(value.year, value.month, value.day)
    return datetime.fromisoformat(str(value).strip())


def archive_date(zf: zipfile.ZipFile) -> Optional[datetime]:
    """Latest entry timestamp, or None when every entry sits at the DOS epoch."""
    stamps = [info.date_time for info in zf.infolist() if info.date_time[:3] != _DOS_EPOCH]
    if not stamps:
        return None
    return datetime(*max(stamps))


def _flatten(classes: dict[str, ClassInfo]) -> dict[str, tuple[set[str], set[str]]]:
    """Own plus inherited member names, following superclasses inside the archive."""
    memo: dict[str, tuple[set[str], set[str]]] = {}

    def members(name: str, seen: frozenset) -> tuple[set[str], set[str]]:
        if name in memo:
            return memo[name]
        info = classes[name]
        methods, fields_ = set(info.method_names()), set(info.field_names())
        for parent in (info.super_name, *info.interfaces):
            if parent in classes and parent not in seen:
                pm, pf = members(parent, seen | {name})
                methods |= pm
                fields_ |= pf
        memo[name] = (methods, fields_)
        return memo[name]

    return {name: members(name, frozenset()) for name in classes}


def ingest_archive(path: Path | str, artifact_id: Optional[str] = None,
                   override_date: str | date | datetime | None = None) -> tuple[LibraryArtifact, list[ClassRecord]]:
    """Read every class in a ZIP archive and keep the concrete ones.

    Interfaces, annotations, abstract classes, and anonymous or local
    classes are skipped.  Unparseable entries are logged and skipped.
    """
    path = Path(path)
    artifact_id = artifact_id or path.stem
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise ArchiveCorrupt(f"{path}: {exc}") from exc
    with zf:
        if override_date is not None:
            stamp = _parse_date(override_date)
        else:
            stamp = archive_date(zf)
            if stamp is None:
                raise MissingModificationDate(f"{path}: no usable date; supply an override")
        classes: dict[str, ClassInfo] = {}
        for info in zf.infolist():
            name = info.filename
            if not name.endswith(".class") or name.endswith(("module-info.class", "package-info.class")):
                continue
            try:
                parsed = parse_class(zf.read(info))
            except ClassParseError as exc:
                logger.warning("%s!%s: %s (skipped)", path.name, name, exc)
                continue
            except (zipfile.BadZipFile, OSError, EOFError) as exc:
                raise ArchiveCorrupt(f"{path}!{name}: {exc}") from exc
            classes[parsed.internal_name] = parsed
    flat = _flatten(classes)
    records = []
    for name, info in sorted(classes.items()):
        if not info.is_concrete or info.is_anonymous_or_local:
            continue
        methods, fields_ = flat[name]
        records.append(ClassRecord(info.fqn, artifact_id, frozenset(methods), frozenset(fields_)))
    artifact = LibraryArtifact(artifact_id, str(path), stamp)
    return artifact, records


@dataclass
class InverseIndex:
    artifacts: dict[str, LibraryArtifact] = field(default_factory=dict)
    records: dict[tuple[str, str], ClassRecord] = field(default_factory=dict)
    by_fqn: dict[str, list[tuple[str, datetime]]] = field(default_factory=dict)

    def add(self, artifact: LibraryArtifact, records: Iterable[ClassRecord]) -> None:
        if artifact.artifact_id in self.artifacts:
            raise ValueError(f"duplicate artifact {artifact.artifact_id}")
        self.artifacts[artifact.artifact_id] = artifact
        for rec in records:
            if (rec.fqn, rec.artifact_id) in self.records:
                continue
            self.records[(rec.fqn, rec.artifact_id)] = rec
            entries = self.by_fqn.setdefault(rec.fqn, [])
            entries.append((rec.artifact_id, artifact.last_modified))
            entries.sort(key=lambda e: e[0])
            entries.sort(key=lambda e: e[1], reverse=True)

    def candidates(self, fqn: str) -> list[LibraryArtifact]:
        """Artifacts defining ``fqn``, most recent first."""
        return [self.artifacts[a] for a, _ in self.by_fqn.get(fqn, [])]

    def record(self, fqn: str, artifact_id: str) -> ClassRecord:
        return self.records[(fqn, artifact_id)]

    def __contains__(self, fqn: str) -> bool:
        return fqn in self.by_fqn

    def packages(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = defaultdict(set)
        for fqn, entries in self.by_fqn.items():
            pkg = fqn.rsplit(".", 1)[0]
            out[pkg].update(a for a, _ in entries)
        return out

    def check_integrity(self) -> None:
        for (fqn, aid), rec in self.records.items():
            if aid not in self.artifacts:
                raise CorruptIndex(f"record {fqn} references unknown artifact {aid}")
            if rec.fqn != fqn or rec.artifact_id != aid:
                raise CorruptIndex(f"record key mismatch for {fqn}@{aid}")
        for fqn, entries in self.by_fqn.items():
            for aid, _ in entries:
                if (fqn, aid) not in self.records:
                    raise CorruptIndex(f"index entry {fqn}@{aid} has no record")

    def to_dict(self) -> dict:
        grouped: dict[str, list] = defaultdict(list)
        for (fqn, aid), rec in sorted(self.records.items()):
            grouped[aid].append({"fqn": fqn, "methods": sorted(rec.methods), "fields": sorted(rec.fields_)})
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "artifacts": [
                {
                    "artifact_id": a.artifact_id,
                    "archive_path": a.archive_path,
                    "last_modified": a.last_modified.isoformat(),
                    "classes": grouped.get(a.artifact_id, []),
                }
                for a in sorted(self.artifacts.values(), key=lambda a: a.artifact_id)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InverseIndex":
        idx = cls()
        for art in data["artifacts"]:
            artifact = LibraryArtifact(art["artifact_id"], art["archive_path"], _parse_date(art["last_modified"]))
            recs = [
                ClassRecord(c["fqn"], artifact.artifact_id, frozenset(c["methods"]), frozenset(c["fields"]))
                for c in art["classes"]
            ]
            idx.add(artifact, recs)
        return idx


def build_index(archives: Iterable[Path | str], dates: Mapping[str, str | date | datetime] | None = None,
                workers: int = 4) -> tuple[InverseIndex, list[str]]:
    """Ingest archives in parallel and merge them; returns the index and per-archive errors."""
    dates = dict(dates or {})
    paths = sorted(Path(p) for p in archives)

    def job(path: Path):
        try:
            return ingest_archive(path, path.stem, dates.get(path.stem))
        except (ArchiveCorrupt, MissingModificationDate) as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(job, paths))
    idx = InverseIndex()
    errors = []
    for path, result in zip(paths, results):
        if isinstance(result, Exception):
            logger.error("skipping %s: %s", path, result)
            errors.append(f"{path}: {result}")
            continue
        idx.add(*result)
    return idx, errors


def load_dates(path: Path | str) -> dict[str, datetime]:
    """Tab-separated ``artifact_id<TAB>ISO-8601 date`` lines."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            aid, stamp = line.split("\t")
            out[aid.strip()] = _parse_date(stamp)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: expected 'artifact_id<TAB>date'") from exc
    return out


def save_index(idx: InverseIndex, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(idx.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_index(path: Path | str) -> InverseIndex:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptIndex(f"{path}: {exc}") from exc
    if not isinstance(data, dict) or data.get("format") != INDEX_FORMAT:
        raise CorruptIndex(f"{path}: not a {INDEX_FORMAT} file")
    if data.get("version") != INDEX_VERSION:
        raise FormatVersionMismatch(f"{path}: version {data.get('version')}, expected {INDEX_VERSION}")
    try:
        idx = InverseIndex.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptIndex(f"{path}: {exc}") from exc
    idx.check_integrity()
    return idx


def satisfying(q: ConstraintQuery, idx: InverseIndex) -> list[LibraryArtifact]:
    """Candidates for ``q.fqn`` whose class offers every required member."""
    methods = q.required_methods - OBJECT_MEMBERS
    out = []
    for artifact in idx.candidates(q.fqn):
        rec = idx.record(q.fqn, artifact.artifact_id)
        if methods <= rec.methods and q.required_fields <= rec.fields_:
            out.append(artifact)
    return out


def _most_recent(artifacts: Iterable[LibraryArtifact]) -> Optional[LibraryArtifact]:
    artifacts = list(artifacts)
    if not artifacts:
        return None
    latest = max(a.last_modified for a in artifacts)
    return min((a for a in artifacts if a.last_modified == latest), key=lambda a: a.artifact_id)


def resolve_library(q: ConstraintQuery, idx: InverseIndex) -> Optional[LibraryArtifact]:
    """Most recent satisfying artifact; date ties go to the smallest artifact id.

    Returns None when nothing satisfies the query.
    """
    return _most_recent(satisfying(q, idx))


def _resolve_package(pkg: str, idx: InverseIndex) -> Optional[LibraryArtifact]:
    ids = idx.packages().get(pkg, set())
    return _most_recent(idx.artifacts[a] for a in ids)


def assemble_classpath(imports: ImportSet, idx: InverseIndex,
                       constraints: Mapping[str, ConstraintQuery] | None = None,
                       platform_prefixes: tuple[str, ...] = PLATFORM_PREFIXES) -> tuple[list[str], list[str]]:
    """Archive paths for an import set plus the FQNs nothing was found for.

    Platform classes (``java.*`` and friends) that the index does not know
    are assumed to come with the compiler and are not reported.
    """
    constraints = constraints or {}
    paths: list[str] = []
    unresolved: list[str] = []
    for stmt in imports:
        if stmt.wildcard:
            artifact = _resolve_package(stmt.fqn, idx)
            fqn = stmt.fqn + ".*"
        else:
            fqn = stmt.fqn
            if stmt.static and fqn not in idx and "." in fqn:
                fqn = fqn.rsplit(".", 1)[0]
            artifact = resolve_library(constraints.get(fqn) or ConstraintQuery(fqn), idx)
        if artifact is None:
            if not stmt.fqn.startswith(platform_prefixes):
                unresolved.append(fqn)
            continue
        if artifact.archive_path not in paths:
            paths.append(artifact.archive_path)
    return paths, unresolved


def collision_report(idx: InverseIndex, queries: Iterable[ConstraintQuery]) -> dict:
    """How many queries still match more than one artifact before the date tie-break."""
    total = collided = 0
    for q in queries:
        survivors = satisfying(q, idx)
        if not survivors:
            continue
        total += 1
        collided += len(survivors) > 1
    return {"resolved": total, "collisions": collided, "rate": collided / total if total else 0.0}
