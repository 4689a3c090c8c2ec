"""Library knowledge base: class-file ingestion, inverse index, classpath assembly."""
from .constraints import extract_constraints
from .index import (
    ClassRecord,
    ConstraintQuery,
    InverseIndex,
    LibraryArtifact,
    assemble_classpath,
    build_index,
    collision_report,
    ingest_archive,
    load_dates,
    load_index,
    resolve_library,
    satisfying,
    save_index,
)

__all__ = [
    "ClassRecord", "ConstraintQuery", "InverseIndex", "LibraryArtifact", "assemble_classpath",
    "build_index", "collision_report", "extract_constraints", "ingest_archive", "load_dates",
    "load_index", "resolve_library", "satisfying", "save_index",
]
