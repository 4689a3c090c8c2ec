"""Compile Java snippets and check/run Python snippets, returning categorized diagnostics."""
from __future__ import annotations

import enum
import json
import logging
import os
import re
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import EnvMissing, TempIOError, ToolMissing
from .snippets import Language

logger = logging.getLogger(__name__)

JAVAC_ENV = "SNIPPET_FORGE_JAVAC"
JAVA_ENV = "SNIPPET_FORGE_JAVA"
JANINO_CP_ENV = "SNIPPET_FORGE_JANINO_CP"
JANINO_MAIN = "org.codehaus.commons.compiler.samples.CompilerDemo"
DEFAULT_TIMEOUT = 30.0


class Tool(str, enum.Enum):
    JAVA_COMPILER = "JavaCompiler"
    PYTHON_STATIC_CHECK = "PythonStaticCheck"
    PYTHON_INTERPRETER = "PythonInterpreter"


class Severity(str, enum.Enum):
    ERROR = "Error"
    WARNING = "Warning"


class ErrorCategory(str, enum.Enum):
    SYMBOL_NOT_FOUND = "SymbolNotFound"
    WRONG_ANNOTATION = "WrongAnnotation"
    METHOD_OVERRIDE = "MethodOverrideError"
    SYNTAX = "Syntax"
    OTHER = "Other"


@dataclass(frozen=True)
class Diagnostic:
    message: str
    category: ErrorCategory = ErrorCategory.OTHER
    severity: Severity = Severity.ERROR
    line: Optional[int] = None
    column: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "message": self.message,
            "category": self.category.value,
            "severity": self.severity.value,
            "line": self.line,
            "column": self.column,
        }


@dataclass
class ValidationReport:
    success: bool
    raw_log: str
    diagnostics: list[Diagnostic] = field(default_factory=list)
    duration: float = 0.0
    tool: Tool = Tool.JAVA_COMPILER
    timed_out: bool = False

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]

    def categories(self) -> set[ErrorCategory]:
        return {d.category for d in self.errors}

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "tool": self.tool.value,
            "duration": round(self.duration, 3),
            "timed_out": self.timed_out,
            "diagnostics": [d.to_dict() for d in self.diagnostics],
            "raw_log": self.raw_log,
        }


# --- categorization -------------------------------------------------------

@dataclass(frozen=True)
class _Rule:
    category: ErrorCategory
    pattern: re.Pattern
    after_annotation: bool = False


@dataclass(frozen=True)
class RuleTable:
    version: int
    rules: tuple[_Rule, ...]
    python_warnings: tuple[str, ...]

    @classmethod
    def from_dict(cls, data: dict) -> "RuleTable":
        rules = tuple(
            _Rule(ErrorCategory(r["category"]), re.compile(r["pattern"]), bool(r.get("after_annotation", False)))
            for r in data["rules"]
        )
        return cls(int(data["version"]), rules, tuple(data.get("python_warnings", ())))

    @classmethod
    def load(cls, path: Path | str | None = None) -> "RuleTable":
        if path is None:
            text = resources.files("snippet_forge").joinpath("data/diagnostic_rules.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_dict(json.loads(text))


@lru_cache(maxsize=1)
def default_rules() -> RuleTable:
    return RuleTable.load()


def categorize_diagnostic(message: str, after_annotation: bool = False,
                          rules: RuleTable | None = None) -> ErrorCategory:
    """First matching rule wins; unmatched messages are ``Other``."""
    for rule in (rules or default_rules()).rules:
        if rule.after_annotation and not after_annotation:
            continue
        if rule.pattern.search(message):
            return rule.category
    return ErrorCategory.OTHER


def follows_annotation(source: str, line: Optional[int]) -> bool:
    """Whether 1-based ``line``, or the nearest non-blank line above it, is an annotation."""
    if not line:
        return False
    lines = source.splitlines()
    if line > len(lines):
        return False
    if lines[line - 1].lstrip().startswith("@"):
        return True
    for prev in reversed(lines[: line - 1]):
        if prev.strip():
            return prev.lstrip().startswith("@")
    return False


# --- process helpers ------------------------------------------------------

@dataclass
class _Run:
    returncode: Optional[int]
    output: str
    duration: float
    timed_out: bool


def _run(argv: Sequence[str], cwd: Path, timeout: float, env: dict | None = None) -> _Run:
    start = time.monotonic()
    proc = subprocess.Popen(
        list(argv), cwd=cwd, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, env=env,
        start_new_session=(os.name == "posix"),
    )
    try:
        out, _ = proc.communicate(timeout=timeout)
        timed_out = False
    except subprocess.TimeoutExpired:
        # take the whole process group down; snippets may spawn children
        if os.name == "posix":
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
        else:
            proc.kill()
        out, _ = proc.communicate()
        timed_out = True
    return _Run(None if timed_out else proc.returncode, out.decode("utf-8", "replace"),
                time.monotonic() - start, timed_out)


def _normalize(log: str, workdir: Path) -> str:
    for form in {str(workdir), os.path.realpath(workdir)}:
        log = log.replace(form + os.sep, "").replace(form, ".")
    return log


# --- Java -----------------------------------------------------------------

def _bundled_janino() -> list[str]:
    base = resources.files("snippet_forge").joinpath("_jars")
    return [str(base.joinpath(n)) for n in ("janino-3.1.9.jar", "commons-compiler-3.1.9.jar")]


def _find_java() -> Optional[str]:
    if os.environ.get(JAVA_ENV):
        return os.environ[JAVA_ENV]
    java_home = os.environ.get("JAVA_HOME")
    if java_home and (Path(java_home) / "bin" / "java").exists():
        return str(Path(java_home) / "bin" / "java")
    found = shutil.which("java")
    if found:
        return found
    try:
        import jdk4py  # optional runtime-only JDK
    except ImportError:
        return None
    return str(jdk4py.JAVA)


@dataclass(frozen=True)
class JavaToolchain:
    """A Java compiler invocation: a real ``javac`` or the embedded janino compiler."""

    kind: str  # "javac" | "janino"
    command: tuple[str, ...]

    @classmethod
    def javac(cls, path: str = "javac") -> "JavaToolchain":
        return cls("javac", tuple(shlex.split(path)))

    @classmethod
    def janino(cls, java: str, classpath: Sequence[str] | None = None) -> "JavaToolchain":
        cp = os.pathsep.join(classpath or _bundled_janino())
        return cls("janino", (java, "-cp", cp, JANINO_MAIN))

    @classmethod
    def discover(cls, explicit: str | None = None) -> "JavaToolchain":
        """Explicit path, then ``$SNIPPET_FORGE_JAVAC``, ``javac`` on PATH, then janino on any JVM."""
        if explicit:
            return cls.javac(explicit)
        if os.environ.get(JAVAC_ENV):
            return cls.javac(os.environ[JAVAC_ENV])
        java_home = os.environ.get("JAVA_HOME")
        if java_home and (Path(java_home) / "bin" / "javac").exists():
            return cls.javac(str(Path(java_home) / "bin" / "javac"))
        if shutil.which("javac"):
            return cls.javac(shutil.which("javac"))
        java = _find_java()
        if java:
            cp = os.environ.get(JANINO_CP_ENV)
            return cls.janino(java, cp.split(os.pathsep) if cp else None)
        raise ToolMissing("no Java compiler: install a JDK, set $SNIPPET_FORGE_JAVAC, or install jdk4py")

    def argv(self, source: Path, classpath: Sequence[str], outdir: Path) -> list[str]:
        cp = os.pathsep.join(str(p) for p in classpath)
        if self.kind == "janino":
            args = [*self.command, "-d", str(outdir)]
            if cp:
                args += ["-classpath", cp]
            return args + [str(source)]
        args = [*self.command, "-encoding", "UTF-8", "-d", str(outdir)]
        if cp:
            args += ["-cp", cp]
        return args + [str(source)]

    def describe(self) -> str:
        if self.kind == "javac":
            try:
                out = subprocess.run([*self.command, "-version"], capture_output=True, text=True, timeout=60)
                return (out.stdout or out.stderr).strip()
            except (OSError, subprocess.SubprocessError):
                return "javac (version unknown)"
        try:
            out = subprocess.run([self.command[0], "-version"], capture_output=True, text=True, timeout=60)
            jvm = (out.stderr or out.stdout).splitlines()[0].strip()
        except (OSError, subprocess.SubprocessError, IndexError):
            jvm = "unknown JVM"
        return f"janino 3.1.9 on {jvm}"


_TOP_DECL = re.compile(
    r"^(?P<mods>(?:(?:public|final|abstract|strictfp|sealed|non-sealed)\s+)*)"
    r"(?:class|interface|enum|record|@interface)\s+(?P<name>[A-Za-z_$][\w$]*)"
)
_SCRUB = re.compile(r'"(?:\\.|[^"\\\n])*"|\'(?:\\.|[^\'\\\n])*\'|//[^\n]*|/\*.*?\*/', re.DOTALL)


def java_file_name(code: str) -> str:
    """File stem javac expects: the first public top-level type, else the first top-level type."""
    scrubbed = _SCRUB.sub(lambda m: re.sub(r"[^\n]", " ", m.group(0)), code)
    depth = 0
    first = public = None
    for line in scrubbed.splitlines():
        if depth == 0:
            m = _TOP_DECL.match(line.strip())
            if m:
                first = first or m["name"]
                if "public" in m["mods"].split() and public is None:
                    public = m["name"]
        depth += line.count("{") - line.count("}")
        depth = max(depth, 0)
    return public or first or "Snippet"


_JAVAC_LINE = re.compile(r"^(?P<file>[^\s:][^:]*\.java):(?P<line>\d+): (?P<sev>error|warning): (?P<msg>.*)$")
_JAVAC_BARE = re.compile(r"^error: (?P<msg>.*)$")
_JANINO_LINE = re.compile(r"File '?(?P<file>[^',]+)'?, Line (?P<line>\d+), Column (?P<col>\d+): (?P<msg>.*)$")


def _parse_javac(log: str, source: str, rules: RuleTable) -> list[Diagnostic]:
    out = []
    lines = log.splitlines()
    for i, text in enumerate(lines):
        m = _JAVAC_LINE.match(text)
        if m:
            line = int(m["line"])
            col = None
            # javac echoes the source line and a caret under the column
            if i + 2 < len(lines) and lines[i + 2].strip() == "^":
                col = lines[i + 2].index("^") + 1
            sev = Severity.ERROR if m["sev"] == "error" else Severity.WARNING
            msg = m["msg"].strip()
            cat = categorize_diagnostic(msg, follows_annotation(source, line), rules)
            out.append(Diagnostic(msg, cat, sev, line, col))
            continue
        m = _JAVAC_BARE.match(text)
        if m:
            msg = m["msg"].strip()
            out.append(Diagnostic(msg, categorize_diagnostic(msg, False, rules)))
    return out


def _parse_janino(log: str, source: str, rules: RuleTable) -> list[Diagnostic]:
    out = []
    for text in log.splitlines():
        m = _JANINO_LINE.search(text)
        if not m:
            continue
        msg = m["msg"].strip()
        # janino nests the location prefix when it rethrows
        while True:
            inner = _JANINO_LINE.match(msg)
            if not inner:
                break
            msg = inner["msg"].strip()
        line = int(m["line"])
        cat = categorize_diagnostic(msg, follows_annotation(source, line), rules)
        out.append(Diagnostic(msg, cat, Severity.ERROR, line, int(m["col"])))
    return out


# --- Python ---------------------------------------------------------------

@dataclass(frozen=True)
class PythonEnvironment:
    """An interpreter used to run snippets: a venv directory or an interpreter path."""

    python: str

    @classmethod
    def from_path(cls, path: Path | str | None) -> "PythonEnvironment":
        if path is None:
            return cls(sys.executable)
        p = Path(path)
        if p.is_dir():
            for cand in ("bin/python", "bin/python3", "Scripts/python.exe"):
                if (p / cand).exists():
                    return cls(str(p / cand))
            raise EnvMissing(f"{p}: no interpreter under bin/")
        if p.exists():
            return cls(str(p))
        found = shutil.which(str(path))
        if found:
            return cls(found)
        raise EnvMissing(f"{path}: no such interpreter or environment")

    def missing_distributions(self, names: Iterable[str]) -> list[str]:
        """Distributions from a manifest that the environment lacks."""
        names = [n for n in names if n.strip()]
        if not names:
            return []
        probe = (
            "import sys, importlib.metadata as m\n"
            "for n in sys.argv[1:]:\n"
            "    try: m.version(n)\n"
            "    except m.PackageNotFoundError: print(n)\n"
        )
        out = subprocess.run([self.python, "-c", probe, *names], capture_output=True, text=True, timeout=120)
        if out.returncode != 0:
            raise EnvMissing(f"{self.python}: cannot probe environment: {out.stderr.strip()}")
        return out.stdout.split()


def read_manifest(path: Path | str) -> list[str]:
    """Requirement names from a pip-style manifest, version specifiers dropped."""
    names = []
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line and not line.startswith("-"):
            names.append(re.split(r"[\s<>=!~;\[]", line, maxsplit=1)[0])
    return names


_FLAKES_LINE = re.compile(r"^(?P<file>[^:]+\.py):(?P<line>\d+):(?:(?P<col>\d+):?)? (?P<msg>.*)$")
_TB_FILE = re.compile(r'^\s*File "(?P<file>[^"]+)", line (?P<line>\d+)')
_TB_LAST = re.compile(r"^(?P<exc>[A-Za-z_][\w.]*(?:Error|Exception|Exit|Interrupt|Warning)|[A-Z]\w+): ?(?P<msg>.*)$")


def _parse_pyflakes(log: str, rules: RuleTable) -> list[Diagnostic]:
    out = []
    for text in log.splitlines():
        m = _FLAKES_LINE.match(text)
        if not m:
            continue
        msg = m["msg"].strip()
        warn = any(w in msg for w in rules.python_warnings)
        sev = Severity.WARNING if warn else Severity.ERROR
        cat = categorize_diagnostic(msg, False, rules)
        if cat is ErrorCategory.OTHER and not warn and re.search(r"syntax|expected|invalid|unexpected|unterminated|never closed|unmatched", msg):
            cat = ErrorCategory.SYNTAX
        col = int(m["col"]) if m["col"] else None
        out.append(Diagnostic(msg, cat, sev, int(m["line"]), col))
    return out


def _parse_traceback(log: str, script: str, rules: RuleTable) -> list[Diagnostic]:
    lines = log.rstrip().splitlines()
    line_no = None
    for text in lines:
        m = _TB_FILE.match(text)
        if m and Path(m["file"]).name == script:
            line_no = int(m["line"])
    for text in reversed(lines):
        m = _TB_LAST.match(text.strip())
        if m:
            msg = text.strip()
            return [Diagnostic(msg, categorize_diagnostic(msg, False, rules), Severity.ERROR, line_no)]
    if lines:
        return [Diagnostic(lines[-1].strip(), ErrorCategory.OTHER, Severity.ERROR, line_no)]
    return [Diagnostic("process exited with a non-zero status", ErrorCategory.OTHER)]


# --- validator ------------------------------------------------------------

class Validator:
    """Runs external checkers with a bound on concurrent processes."""

    def __init__(self, java: JavaToolchain | None = None, python_env: PythonEnvironment | None = None,
                 timeout: float = DEFAULT_TIMEOUT, max_concurrent: int = 4, rules: RuleTable | None = None,
                 checker: Sequence[str] | None = None, workdir: Path | str | None = None):
        self._java = java
        self.python_env = python_env
        self.timeout = timeout
        self.rules = rules or default_rules()
        self.checker = tuple(checker) if checker else (sys.executable, "-m", "pyflakes")
        self.workdir = Path(workdir) if workdir else None
        self._slots = threading.BoundedSemaphore(max_concurrent)

    @property
    def java(self) -> JavaToolchain:
        if self._java is None:
            self._java = JavaToolchain.discover()
        return self._java

    def _tempdir(self) -> tempfile.TemporaryDirectory:
        try:
            return tempfile.TemporaryDirectory(prefix="snippet-forge-", dir=self.workdir)
        except OSError as exc:
            raise TempIOError(f"cannot create a scratch directory: {exc}") from exc

    def validate(self, code: str, language: Language | str, classpath: Sequence[str] = ()) -> ValidationReport:
        if Language.coerce(language) is Language.JAVA:
            return self.validate_java(code, classpath)
        return self.validate_python(code)

    def validate_java(self, code: str, classpath: Sequence[str] = (), timeout: float | None = None) -> ValidationReport:
        toolchain = self.java
        timeout = timeout or self.timeout
        # the compiler runs inside a scratch directory, so relative entries would dangle
        classpath = [str(Path(p).resolve()) for p in classpath]
        with self._tempdir() as tmp:
            work = Path(tmp)
            src = work / f"{java_file_name(code)}.java"
            out_dir = work / "classes"
            try:
                src.write_text(code, encoding="utf-8")
                out_dir.mkdir()
            except OSError as exc:
                raise TempIOError(f"cannot write {src}: {exc}") from exc
            argv = toolchain.argv(src.relative_to(work), classpath, out_dir.relative_to(work))
            try:
                with self._slots:
                    run = _run(argv, work, timeout)
            except FileNotFoundError as exc:
                raise ToolMissing(f"{argv[0]}: {exc}") from exc
            log = _normalize(run.output, work)
        if run.timed_out:
            diag = Diagnostic(f"compilation timed out after {timeout:g}s", ErrorCategory.OTHER)
            return ValidationReport(False, log, [diag], run.duration, Tool.JAVA_COMPILER, True)
        parse = _parse_janino if toolchain.kind == "janino" else _parse_javac
        diags = parse(log, code, self.rules)
        ok = run.returncode == 0
        if not ok and not any(d.severity is Severity.ERROR for d in diags):
            tail = log.strip().splitlines()[-1] if log.strip() else f"compiler exited with status {run.returncode}"
            diags.append(Diagnostic(tail, categorize_diagnostic(tail, False, self.rules)))
        return ValidationReport(ok, log, diags, run.duration, Tool.JAVA_COMPILER)

    def validate_python(self, code: str, env: PythonEnvironment | None = None,
                        timeout: float | None = None) -> ValidationReport:
        env = env or self.python_env or PythonEnvironment.from_path(None)
        timeout = timeout or self.timeout
        with self._tempdir() as tmp:
            work = Path(tmp)
            script = work / "snippet.py"
            try:
                script.write_text(code, encoding="utf-8")
            except OSError as exc:
                raise TempIOError(f"cannot write {script}: {exc}") from exc
            with self._slots:
                try:
                    check = _run([*self.checker, script.name], work, timeout)
                except FileNotFoundError as exc:
                    raise ToolMissing(f"{self.checker[0]}: {exc}") from exc
            check_log = _normalize(check.output, work)
            if check.timed_out:
                diag = Diagnostic(f"static check timed out after {timeout:g}s", ErrorCategory.OTHER)
                return ValidationReport(False, check_log, [diag], check.duration, Tool.PYTHON_STATIC_CHECK, True)
            diags = _parse_pyflakes(check_log, self.rules)
            if any(d.severity is Severity.ERROR for d in diags):
                return ValidationReport(False, check_log, diags, check.duration, Tool.PYTHON_STATIC_CHECK)

            run_env = dict(os.environ, MPLBACKEND="Agg", PYTHONDONTWRITEBYTECODE="1")
            with self._slots:
                try:
                    run = _run([env.python, script.name], work, timeout, env=run_env)
                except FileNotFoundError as exc:
                    raise EnvMissing(f"{env.python}: {exc}") from exc
            run_log = _normalize(run.output, work)
        log = (check_log + run_log) if check_log else run_log
        duration = check.duration + run.duration
        if run.timed_out:
            diag = Diagnostic(f"execution timed out after {timeout:g}s", ErrorCategory.OTHER)
            return ValidationReport(False, log, diags + [diag], duration, Tool.PYTHON_INTERPRETER, True)
        if run.returncode != 0:
            diags = diags + _parse_traceback(run_log, script.name, self.rules)
        return ValidationReport(run.returncode == 0, log, diags, duration, Tool.PYTHON_INTERPRETER)


def validate_java(code: str, classpath: Sequence[str] = (), timeout: float = DEFAULT_TIMEOUT,
                  toolchain: JavaToolchain | None = None) -> ValidationReport:
    return Validator(java=toolchain, timeout=timeout).validate_java(code, classpath)


def validate_python(code: str, env: Path | str | PythonEnvironment | None = None,
                    timeout: float = DEFAULT_TIMEOUT) -> ValidationReport:
    if not isinstance(env, PythonEnvironment):
        env = PythonEnvironment.from_path(env)
    return Validator(python_env=env, timeout=timeout).validate_python(code)
