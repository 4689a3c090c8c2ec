#!/usr/bin/env python3
"""Recompute the summary rows of the published metric tables from their per-library rows.

Reads tests/fixtures/published/tables.json, feeds each approach's per-library
P/R/F1 and compiled counts through the evaluation code, and prints the
recomputed summary next to the printed one.  Exits non-zero on any mismatch
beyond the tolerance.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from snippet_forge.evaluation import LibraryMetrics, RunSummary, summarize_run
from snippet_forge.snippets import MatchCategory

ROOT = Path(__file__).resolve().parents[1]
TABLES = ROOT / "tests" / "fixtures" / "published" / "tables.json"

log = logging.getLogger("reproduce_tables")


def metric_table(name: str, table: dict, tol: float) -> int:
    print(f"\n== {name} ==")
    print(f"{'approach':<22} {'F1':>13} {'Rec':>13} {'Pre':>13} {'compiled':>11} {'CR%':>13}")
    bad = 0
    for approach, data in table["approaches"].items():
        libs = []
        for label, row in data["libraries"].items():
            lib = LibraryMetrics(label, row["precision"], row["recall"], row["f1"], row["compiled"],
                                 table["sizes"][label])
            if abs(100 * lib.cr - row["cr_percent"]) > 100 * tol:
                log.error("%s/%s: CR %.1f%% vs printed %.1f%%", approach, label, 100 * lib.cr, row["cr_percent"])
                bad += 1
            libs.append(lib)
        got, want = summarize_run(libs), data["summary"]
        cells = []
        for key in ("f1", "recall", "precision"):
            ok = abs(getattr(got, key) - want[key]) <= tol
            bad += not ok
            cells.append(f"{getattr(got, key):.3f}/{want[key]:.2f}{' ' if ok else '!'}")
        ok_c = got.compiled == want["compiled"]
        ok_cr = abs(100 * got.cr - want["cr_percent"]) <= 100 * tol
        bad += (not ok_c) + (not ok_cr)
        print(f"{approach:<22} {cells[0]:>13} {cells[1]:>13} {cells[2]:>13} "
              f"{got.compiled:>4}/{want['compiled']:<4}{' ' if ok_c else '!'} "
              f"{100 * got.cr:6.2f}/{want['cr_percent']:<5}{' ' if ok_cr else '!'}")
    return bad


def match_table(language: str, table: dict, tol_points: float) -> int:
    print(f"\n== match distribution ({language}, n={table['total']}) ==")
    cats = list(MatchCategory)
    print(f"{'approach':<22} " + " ".join(f"{c.value:>9}" for c in cats))
    bad = 0
    for approach, row in table["rows"].items():
        run = RunSummary(0, 0, 0, 0, table["total"], {MatchCategory(k): v[0] for k, v in row.items()})
        cells = []
        for c in cats:
            share = 100 * run.match_share(c)
            printed = row.get(c.value, [0, 0.0])[1]
            ok = abs(share - printed) <= tol_points
            bad += not ok
            cells.append(f"{share:8.2f}{' ' if ok else '!'}")
        print(f"{approach:<22} " + " ".join(cells))
    return bad


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--tables", type=Path, default=TABLES)
    parser.add_argument("--tol", type=float, default=0.005, help="tolerance on metric values")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    tables = json.loads(args.tables.read_text())
    bad = metric_table("Java", tables["java_metrics"], args.tol)
    bad += metric_table("Python", tables["python_metrics"], args.tol)
    for language, table in tables["match_distribution"].items():
        bad += match_table(language, table, 0.01)
    print(f"\n{'all values reproduce' if not bad else f'{bad} mismatch(es)'}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
