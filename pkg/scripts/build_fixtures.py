#!/usr/bin/env python3
"""Compile the stub library sources under tests/fixtures/stub_src into dated jars.

The jars are committed, so this only needs re-running after a stub changes.
Each archive's entries carry the release date below, which is what the
knowledge base reads back as the artifact's last-modified date.
"""
from __future__ import annotations

import argparse
import logging
import subprocess
import tempfile
import zipfile
from datetime import datetime
from pathlib import Path

from snippet_forge.validator import JavaToolchain

ROOT = Path(__file__).resolve().parents[1]
STUBS = ROOT / "tests" / "fixtures" / "stub_src"
JARS = ROOT / "tests" / "fixtures" / "jars"

RELEASES = {
    "joda-time-2.9.9": datetime(2017, 3, 23, 12, 0, 0),
    "joda-time-2.1": datetime(2012, 2, 17, 12, 0, 0),
    "xstream-1.4.10": datetime(2017, 5, 23, 12, 0, 0),
}

log = logging.getLogger("build_fixtures")


def compile_artifact(toolchain: JavaToolchain, src: Path, out: Path) -> None:
    sources = sorted(str(p) for p in src.rglob("*.java"))
    argv = [*toolchain.command, "-d", str(out), *sources]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"compiling {src.name} failed:\n{proc.stdout}{proc.stderr}")


def write_jar(classes: Path, jar: Path, stamp: datetime) -> int:
    date_time = (stamp.year, stamp.month, stamp.day, stamp.hour, stamp.minute, stamp.second)
    jar.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with zipfile.ZipFile(jar, "w", zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(zipfile.ZipInfo("META-INF/MANIFEST.MF", date_time), "Manifest-Version: 1.0\r\n\r\n")
        for path in sorted(classes.rglob("*.class")):
            zf.writestr(zipfile.ZipInfo(path.relative_to(classes).as_posix(), date_time), path.read_bytes())
            count += 1
    return count


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=JARS)
    parser.add_argument("--java-compiler", help="javac command; default is discovery")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    toolchain = JavaToolchain.discover(args.java_compiler)
    log.info("compiler: %s", toolchain.describe())
    for artifact, stamp in RELEASES.items():
        with tempfile.TemporaryDirectory() as tmp:
            compile_artifact(toolchain, STUBS / artifact, Path(tmp))
            n = write_jar(Path(tmp), args.out / f"{artifact}.jar", stamp)
        log.info("%s.jar: %d classes, dated %s", artifact, n, stamp.date())


if __name__ == "__main__":
    main()
