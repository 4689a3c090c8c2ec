"""Run configuration and orchestration of the inference and repair stages over a dataset."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import BudgetExceeded, ConfigError, EnvMissing, SnippetForgeError, ToolMissing
from .evaluation import (
    FailureLabel,
    RunSummary,
    SnippetScore,
    TaxonomyRow,
    aggregate_by_library,
    error_taxonomy_table,
    median_of_runs,
    prelabel_failure,
    summarize_run,
    write_run_report,
    write_table4,
    write_worksheet,
)
from .fixing import FixConfig, FixOutcome, GuardMode, fix, write_transcript
from .inference import InferenceConfig, InferenceResult, self_consistent_infer
from .kb.index import InverseIndex, load_index
from .llm import DEFAULT_MODEL, Backend, LiveBackend, LiveConfig, MockBackend, UsageLedger
from .snippets import CodeSnippet, ImportSet, Language, load_dataset, prepend_imports, strip_imports
from .validator import JavaToolchain, PythonEnvironment, ValidationReport, Validator

logger = logging.getLogger(__name__)

ENV_PREFIX = "SNIPPET_FORGE_"


@dataclass
class BackendSettings:
    kind: str = "mock"  # mock | live
    mock_transcript: Optional[str] = None
    endpoint: str = LiveConfig.endpoint
    model_id: str = DEFAULT_MODEL
    timeout: float = 60.0
    requests_per_second: float = 1.0
    max_in_flight: int = 1
    max_tokens: Optional[int] = None
    max_cost: Optional[float] = None
    usage_log: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "live"):
            raise ConfigError(f"backend must be 'mock' or 'live', not {self.kind!r}")


@dataclass
class RunConfig:
    dataset_root: Optional[str] = None
    libraries: Optional[list[str]] = None
    kb_index: Optional[str] = None
    python_env: Optional[str] = None
    java_compiler: Optional[str] = None
    base_classpath: list[str] = field(default_factory=list)
    backend: BackendSettings = field(default_factory=BackendSettings)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    fixing: FixConfig = field(default_factory=FixConfig)
    self_consistency: bool = True
    parallelism: int = 1
    repetitions: int = 1
    validation_timeout: float = 30.0
    taxonomy: bool = True
    out_dir: str = "runs/latest"

    def __post_init__(self) -> None:
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")

    @property
    def effective_inference(self) -> InferenceConfig:
        cfg = replace(self.inference, model_id=self.backend.model_id)
        if not self.self_consistency:
            cfg = replace(cfg, k_samples=1, max_tiebreak_rounds=1)
        return cfg

    @property
    def effective_fixing(self) -> FixConfig:
        return replace(self.fixing, model_id=self.backend.model_id)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fixing"]["guard_mode"] = self.fixing.guard_mode.value
        return d


# --- configuration assembly ----------------------------------------------

def _defaults() -> dict:
    return RunConfig().to_dict()


# environment variable -> (section, key); sections None are top level
_ENV_KEYS = {
    "DATASET": (None, "dataset_root"),
    "KB_INDEX": (None, "kb_index"),
    "PYTHON_ENV": (None, "python_env"),
    "OUT": (None, "out_dir"),
    "BACKEND": ("backend", "kind"),
    "ENDPOINT": ("backend", "endpoint"),
    "MODEL": ("backend", "model_id"),
    "MOCK_TRANSCRIPT": ("backend", "mock_transcript"),
}


def _env_layer(environ: dict) -> dict:
    layer: dict = {}
    for suffix, (section, key) in _ENV_KEYS.items():
        value = environ.get(ENV_PREFIX + suffix)
        if value:
            (layer.setdefault(section, {}) if section else layer)[key] = value
    return layer


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build(cls, data: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown {where} setting(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} settings: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    nested = {
        "backend": (BackendSettings, "backend"),
        "inference": (InferenceConfig, "inference"),
        "fixing": (FixConfig, "fixing"),
    }
    for key, (cls, where) in nested.items():
        if key in data:
            sub = dict(data[key])
            if cls is FixConfig and "guard_mode" in sub:
                try:
                    sub["guard_mode"] = GuardMode(sub["guard_mode"])
                except ValueError as exc:
                    raise ConfigError(str(exc)) from exc
            data[key] = _build(cls, sub, where)
    return _build(RunConfig, data, "run")


def load_config(path: Optional[str | Path] = None, overrides: Optional[dict] = None,
                environ: Optional[dict] = None) -> RunConfig:
    """Layered settings: overrides (flags) > config file > environment > defaults."""
    layered = _merge(_defaults(), _env_layer(os.environ if environ is None else environ))
    if path is not None:
        try:
            layered = _merge(layered, json.loads(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    layered = _merge(layered, overrides or {})
    return config_from_dict(layered)


# --- resources ------------------------------------------------------------

def make_backend(settings: BackendSettings) -> Backend:
    ledger = UsageLedger(max_tokens=settings.max_tokens, max_cost=settings.max_cost,
                         path=Path(settings.usage_log) if settings.usage_log else None)
    if settings.kind == "mock":
        if not settings.mock_transcript:
            raise ConfigError("the mock backend needs a transcript (--mock-transcript)")
        if not Path(settings.mock_transcript).is_file():
            raise ConfigError(f"mock transcript {settings.mock_transcript} not found")
        return MockBackend.from_jsonl(settings.mock_transcript, ledger=ledger)
    live = LiveConfig(endpoint=settings.endpoint, model_id=settings.model_id, timeout=settings.timeout,
                      requests_per_second=settings.requests_per_second, max_in_flight=settings.max_in_flight)
    live.resolved_key()  # fail early without a key
    return LiveBackend(live, ledger=ledger)


@dataclass
class Resources:
    backend: Backend
    validator: Validator
    kb: Optional[InverseIndex] = None


def prepare(cfg: RunConfig, snippets: list[CodeSnippet], backend: Backend | None = None,
            validator: Validator | None = None) -> Resources:
    languages = {s.language for s in snippets}
    kb = None
    if Language.JAVA in languages:
        if not cfg.kb_index:
            raise ConfigError("Java snippets need a knowledge-base index (--index)")
        kb = load_index(cfg.kb_index)
    if validator is None:
        java = JavaToolchain.discover(cfg.java_compiler) if Language.JAVA in languages else None
        env = None
        if Language.PYTHON in languages:
            if not cfg.python_env:
                raise ConfigError("Python snippets need an interpreter or environment (--python-env)")
            env = PythonEnvironment.from_path(cfg.python_env)
        validator = Validator(java=java, python_env=env, timeout=cfg.validation_timeout,
                              max_concurrent=max(cfg.parallelism, 1))
    return Resources(backend or make_backend(cfg.backend), validator, kb)


def load_snippets(cfg: RunConfig) -> list[CodeSnippet]:
    if not cfg.dataset_root:
        raise ConfigError("no dataset given (--dataset)")
    snippets = load_dataset(cfg.dataset_root, cfg.libraries)
    if not snippets:
        raise ConfigError(f"dataset {cfg.dataset_root} holds no snippets")
    return snippets


# --- per-snippet processing ----------------------------------------------

@dataclass
class SnippetRecord:
    snippet: CodeSnippet
    predicted: ImportSet
    score: SnippetScore
    inference: Optional[InferenceResult] = None
    outcome: Optional[FixOutcome] = None
    before: Optional[ValidationReport] = None
    label: Optional[FailureLabel] = None
    error: Optional[str] = None

    def prediction_row(self) -> dict:
        return {
            "snippet_id": self.snippet.id,
            "library": self.snippet.library_label,
            "imports": self.predicted.canonical_lines(),
            "compiled": self.score.compiled,
            "rounds_used": self.score.rounds_used,
            "error": self.error,
        }


def _truth(snippet: CodeSnippet) -> ImportSet:
    return snippet.ground_truth if snippet.ground_truth is not None else ImportSet()


def _label(rec: SnippetRecord, kb: InverseIndex | None) -> Optional[FailureLabel]:
    if rec.score.compiled and rec.score.fp == 0 and rec.score.fn == 0:
        return None
    body_modified = bool(rec.outcome and rec.outcome.body_modified)
    final = rec.outcome.final_report if rec.outcome else None
    return prelabel_failure(rec.predicted, _truth(rec.snippet), body_modified=body_modified,
                            final_report=final, kb=kb)


Stage = Callable[[CodeSnippet, RunConfig, Resources], SnippetRecord]


def synthesize_one(snippet: CodeSnippet, cfg: RunConfig, res: Resources) -> SnippetRecord:
    """Infer imports, prepend them, and repair until the validator accepts or rounds run out."""
    body, _ = strip_imports(snippet.body, snippet.language)
    snippet = replace(snippet, body=body)
    before = None
    if cfg.taxonomy:
        before = res.validator.validate(body, snippet.language, cfg.base_classpath)
    inferred = self_consistent_infer(snippet, cfg.effective_inference, res.backend)
    code = prepend_imports(body, inferred.chosen)
    outcome = fix(code, snippet, cfg.effective_fixing, res.backend, res.validator, res.kb, cfg.base_classpath)
    _, predicted = strip_imports(outcome.final_code, snippet.language)
    score = SnippetScore.from_sets(snippet.id, snippet.library_label, predicted, _truth(snippet),
                                   outcome.compiled, outcome.rounds_used)
    return SnippetRecord(snippet, predicted, score, inferred, outcome, before)


def infer_one(snippet: CodeSnippet, cfg: RunConfig, res: Resources) -> SnippetRecord:
    body, _ = strip_imports(snippet.body, snippet.language)
    snippet = replace(snippet, body=body)
    inferred = self_consistent_infer(snippet, cfg.effective_inference, res.backend)
    score = SnippetScore.from_sets(snippet.id, snippet.library_label, inferred.chosen, _truth(snippet), False)
    return SnippetRecord(snippet, inferred.chosen, score, inferred)


def make_fix_stage(start_imports: dict[str, ImportSet] | None = None) -> Stage:
    """Repair only; without ``start_imports`` the raw snippet goes in with no imports at all."""

    def fix_one(snippet: CodeSnippet, cfg: RunConfig, res: Resources) -> SnippetRecord:
        body, _ = strip_imports(snippet.body, snippet.language)
        snippet = replace(snippet, body=body)
        before = res.validator.validate(body, snippet.language, cfg.base_classpath) if cfg.taxonomy else None
        imports = (start_imports or {}).get(snippet.id, ImportSet())
        outcome = fix(prepend_imports(body, imports), snippet, cfg.effective_fixing, res.backend,
                      res.validator, res.kb, cfg.base_classpath)
        _, predicted = strip_imports(outcome.final_code, snippet.language)
        score = SnippetScore.from_sets(snippet.id, snippet.library_label, predicted, _truth(snippet),
                                       outcome.compiled, outcome.rounds_used)
        return SnippetRecord(snippet, predicted, score, None, outcome, before)

    return fix_one


def _guarded(stage: Stage, snippet: CodeSnippet, cfg: RunConfig, res: Resources) -> SnippetRecord:
    try:
        return stage(snippet, cfg, res)
    except (ToolMissing, EnvMissing):
        raise
    except (SnippetForgeError, ValueError) as exc:
        # one snippet failing must not sink the run
        kind = "budget" if isinstance(exc, BudgetExceeded) else type(exc).__name__
        logger.error("%s: %s: %s", snippet.id, kind, exc)
        score = SnippetScore.from_sets(snippet.id, snippet.library_label, ImportSet(), _truth(snippet), False)
        return SnippetRecord(snippet, ImportSet(), score, error=f"{type(exc).__name__}: {exc}")


@dataclass
class RunResult:
    records: list[SnippetRecord]
    summary: RunSummary
    taxonomy: list[TaxonomyRow]
    out_dir: Path

    @property
    def scores(self) -> list[SnippetScore]:
        return [r.score for r in self.records]


def _transcript_name(snippet_id: str) -> str:
    return snippet_id.replace("/", "__") + ".json"


def run_stage(stage: Stage, snippets: list[CodeSnippet], cfg: RunConfig, res: Resources,
              out_dir: Path, compile_measured: bool = True) -> RunResult:
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.parallelism > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            records = list(pool.map(lambda s: _guarded(stage, s, cfg, res), snippets))
    else:
        records = [_guarded(stage, s, cfg, res) for s in snippets]
    records.sort(key=lambda r: r.snippet.id)

    for rec in records:
        rec.label = _label(rec, res.kb) if compile_measured else None
        extra: dict[str, Any] = {"library": rec.snippet.library_label, "score": rec.score.to_dict(),
                                 "error": rec.error, "failure_label": rec.label.value if rec.label else None}
        if rec.inference is not None:
            extra["inference"] = rec.inference.to_dict()
        if rec.before is not None:
            extra["before"] = rec.before.to_dict()
        path = out_dir / "transcripts" / _transcript_name(rec.snippet.id)
        if rec.outcome is not None:
            write_transcript(path, rec.snippet, rec.outcome, extra)
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps({"snippet_id": rec.snippet.id, **extra}, indent=2), encoding="utf-8")

    per_library = aggregate_by_library(r.score for r in records)
    summary = summarize_run(per_library)
    taxonomy: list[TaxonomyRow] = []
    if compile_measured and any(r.before is not None for r in records):
        taxonomy = error_taxonomy_table(
            [r.before for r in records],
            [r.outcome.final_report if r.outcome else None for r in records],
            [r.snippet.library_label for r in records],
        )
    with open(out_dir / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.prediction_row()) + "\n")
    extra = {"compilation_measured": compile_measured}
    if hasattr(res.backend, "ledger") and getattr(res.backend, "ledger") is not None:
        extra["usage"] = res.backend.ledger.summary()
    write_run_report(out_dir, [r.score for r in records], per_library, summary, taxonomy, extra)
    if compile_measured:
        write_worksheet(out_dir / "failure_worksheet.csv", [
            {"snippet_id": r.snippet.id, "library": r.snippet.library_label, "compiled": r.score.compiled,
             "match": r.score.match.value, "fp": r.score.fp, "fn": r.score.fn,
             "heuristic_label": r.label.value, "notes": r.error or ""}
            for r in records if r.label is not None
        ])
    return RunResult(records, summary, taxonomy, out_dir)


def run_repeated(stage: Stage, snippets: list[CodeSnippet], cfg: RunConfig, res: Resources,
                 compile_measured: bool = True) -> tuple[list[RunResult], RunSummary]:
    """Run ``cfg.repetitions`` times and report each run plus the element-wise median."""
    out = Path(cfg.out_dir)
    if cfg.repetitions == 1:
        result = run_stage(stage, snippets, cfg, res, out, compile_measured)
        return [result], result.summary
    results = []
    for rep in range(1, cfg.repetitions + 1):
        if isinstance(res.backend, MockBackend):
            res.backend.reset()
        results.append(run_stage(stage, snippets, cfg, res, out / f"run-{rep}", compile_measured))
    median = median_of_runs([r.summary for r in results])
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "repetitions": cfg.repetitions,
        "runs": [r.summary.to_dict() for r in results],
        "median": median.to_dict(),
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
    write_table4(out / "table_match.csv", {**{f"run-{i}": r.summary for i, r in enumerate(results, 1)},
                                          "median": median})
    return results, median


def read_predictions(path: Path | str, snippets: list[CodeSnippet]) -> dict[str, tuple[ImportSet, bool]]:
    lang = {s.id: s.language for s in snippets}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                sid = row["snippet_id"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad prediction row: {exc}") from exc
            if sid not in lang:
                logger.warning("%s:%d: unknown snippet %s ignored", path, lineno, sid)
                continue
            imports = ImportSet.parse("\n".join(row.get("imports", [])), lang[sid])
            out[sid] = (imports, bool(row.get("compiled", False)))
    return out
