"""Command-line entry point: ``snippet-forge kb build|infer|fix|synthesize|eval``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConfigError, DatasetError, EnvMissing, SnippetForgeError, ToolMissing
from .evaluation import (
    SnippetScore,
    aggregate_by_library,
    summarize_run,
    write_run_report,
)
from .kb.index import build_index, load_dates, save_index
from .pipeline import (
    Resources,
    RunConfig,
    infer_one,
    load_config,
    load_snippets,
    make_backend,
    make_fix_stage,
    prepare,
    read_predictions,
    run_repeated,
    synthesize_one,
)
from .snippets import ImportSet

logger = logging.getLogger("snippet_forge")

EXIT_OK, EXIT_CONFIG, EXIT_ENV = 0, 1, 2


def _overrides(args: argparse.Namespace) -> dict:
    """Only flags the user actually gave override lower layers."""
    over: dict = {}
    backend: dict = {}
    inference: dict = {}
    fixing: dict = {}
    simple = {
        "dataset": "dataset_root", "index": "kb_index", "python_env": "python_env", "out": "out_dir",
        "repetitions": "repetitions", "parallelism": "parallelism", "java_compiler": "java_compiler",
        "timeout": "validation_timeout",
    }
    for flag, key in simple.items():
        value = getattr(args, flag, None)
        if value is not None:
            over[key] = str(value) if isinstance(value, Path) else value
    if getattr(args, "libraries", None):
        over["libraries"] = args.libraries.split(",")
    if getattr(args, "classpath", None):
        over["base_classpath"] = args.classpath.split(":")
    if getattr(args, "backend", None):
        backend["kind"] = args.backend
    if getattr(args, "mock_transcript", None):
        backend["mock_transcript"] = str(args.mock_transcript)
    if getattr(args, "model", None):
        backend["model_id"] = args.model
    if getattr(args, "usage_log", None):
        backend["usage_log"] = str(args.usage_log)
    if getattr(args, "k", None) is not None:
        inference["k_samples"] = args.k
    if getattr(args, "no_self_consistency", False):
        over["self_consistency"] = False
    if getattr(args, "max_rounds", None) is not None:
        fixing["max_rounds"] = args.max_rounds
    if getattr(args, "guard", None):
        fixing["guard_mode"] = args.guard
    if getattr(args, "no_taxonomy", False):
        over["taxonomy"] = False
    for key, section in (("backend", backend), ("inference", inference), ("fixing", fixing)):
        if section:
            over[key] = section
    return over


def _config(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, _overrides(args))


def _print_summary(summary, label: str = "summary") -> None:
    d = summary.to_dict()
    print(f"{label}: CR {d['compiled']}/{d['total']} ({100 * d['cr_pooled']:.1f}%)  "
          f"F1 {d['f1_macro']:.3f}  Rec {d['recall_macro']:.3f}  Pre {d['precision_macro']:.3f}  "
          f"match {json.dumps(d['match'])}")


def cmd_kb_build(args: argparse.Namespace) -> int:
    archives: list[Path] = []
    for item in args.archives:
        p = Path(item)
        archives.extend(sorted(p.resolve().rglob("*.jar")) if p.is_dir() else [p.resolve()])
    if not archives:
        raise ConfigError("no archives given")
    try:
        dates = load_dates(args.dates) if args.dates else {}
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    idx, errors = build_index(archives, dates, workers=args.workers)
    for err in errors:
        print(f"skipped {err}", file=sys.stderr)
    save_index(idx, args.out)
    print(f"indexed {len(idx.artifacts)} artifact(s), {len(idx.by_fqn)} class name(s) -> {args.out}")
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace) -> int:
    cfg = _config(args)
    snippets = load_snippets(cfg)
    res = prepare(cfg, snippets)
    _, summary = run_repeated(synthesize_one, snippets, cfg, res)
    _print_summary(summary, "median" if cfg.repetitions > 1 else "summary")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = _config(args)
    snippets = load_snippets(cfg)
    res = Resources(make_backend(cfg.backend), validator=None)  # inference never validates
    _, summary = run_repeated(infer_one, snippets, cfg, res, compile_measured=False)
    _print_summary(summary)
    return EXIT_OK


def cmd_fix(args: argparse.Namespace) -> int:
    cfg = _config(args)
    snippets = load_snippets(cfg)
    start = None
    if args.imports_from:
        start = {sid: imports for sid, (imports, _) in read_predictions(args.imports_from, snippets).items()}
    res = prepare(cfg, snippets)
    _, summary = run_repeated(make_fix_stage(start), snippets, cfg, res)
    _print_summary(summary)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args)
    snippets = load_snippets(cfg)
    preds = read_predictions(args.predictions, snippets)
    scores = []
    for s in snippets:
        pred, compiled = preds.get(s.id, (ImportSet(), False))
        truth = s.ground_truth if s.ground_truth is not None else ImportSet()
        scores.append(SnippetScore.from_sets(s.id, s.library_label, pred, truth, compiled))
    per_library = aggregate_by_library(scores)
    summary = summarize_run(per_library)
    write_run_report(cfg.out_dir, scores, per_library, summary, extra={"predictions": str(args.predictions)})
    _print_summary(summary)
    return EXIT_OK


def _common(p: argparse.ArgumentParser, backend: bool = True, validation: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--dataset", type=Path, help="dataset root: <library>/<id>.{java,py} + <id>.imports")
    p.add_argument("--libraries", help="comma-separated subset of libraries")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--repetitions", type=int, help="repeat the run and report the median")
    p.add_argument("--parallelism", type=int, help="snippets processed concurrently")
    if backend:
        p.add_argument("--backend", choices=("live", "mock"))
        p.add_argument("--mock-transcript", type=Path, help="JSONL of scripted responses")
        p.add_argument("--model", help="model id for the live backend")
        p.add_argument("--usage-log", type=Path, help="append token/cost rows to this CSV")
    if validation:
        p.add_argument("--index", type=Path, help="knowledge-base index (Java)")
        p.add_argument("--python-env", type=Path, help="virtualenv dir or interpreter for running Python")
        p.add_argument("--java-compiler", help="javac command to use instead of discovery")
        p.add_argument("--classpath", help="extra classpath entries, ':'-separated")
        p.add_argument("--timeout", type=float, help="validator timeout in seconds")
        p.add_argument("--no-taxonomy", action="store_true", help="skip validating the bare snippet up front")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snippet-forge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge-base maintenance")
    kb_sub = kb.add_subparsers(dest="kb_command", required=True)
    build = kb_sub.add_parser("build", help="index library archives")
    build.add_argument("--archives", nargs="+", required=True, help="jar files or directories of jars")
    build.add_argument("--dates", type=Path, help="TSV of <artifact_id>\\t<ISO date> overrides")
    build.add_argument("--out", type=Path, required=True, help="index file to write")
    build.add_argument("--workers", type=int, default=4)
    build.set_defaults(func=cmd_kb_build)

    infer = sub.add_parser("infer", help="import inference only")
    _common(infer, validation=False)
    infer.add_argument("--k", type=int, help="samples per round")
    infer.add_argument("--no-self-consistency", action="store_true", help="single sample (K=1)")
    infer.set_defaults(func=cmd_infer)

    fixp = sub.add_parser("fix", help="conversational repair only")
    _common(fixp)
    fixp.add_argument("--max-rounds", type=int)
    fixp.add_argument("--guard", choices=("Warn", "Reject"))
    fixp.add_argument("--imports-from", type=Path, help="predictions.jsonl to start from; default: no imports")
    fixp.set_defaults(func=cmd_fix)

    syn = sub.add_parser("synthesize", help="inference followed by repair")
    _common(syn)
    syn.add_argument("--k", type=int)
    syn.add_argument("--no-self-consistency", action="store_true")
    syn.add_argument("--max-rounds", type=int)
    syn.add_argument("--guard", choices=("Warn", "Reject"))
    syn.set_defaults(func=cmd_synthesize)

    ev = sub.add_parser("eval", help="score stored predictions without any model calls")
    _common(ev, backend=False, validation=False)
    ev.add_argument("--predictions", type=Path, required=True)
    ev.set_defaults(func=cmd_eval)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ToolMissing, EnvMissing) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENV
    except (ConfigError, DatasetError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SnippetForgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
