"""Repair a snippet by alternating validation and LLM fix requests."""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .errors import NoCodeFound
from .extract import extract_code_block
from .inference import PRESENTATION_GUIDE
from .kb.constraints import extract_constraints
from .kb.index import InverseIndex, assemble_classpath
from .llm import DEFAULT_MODEL, Backend, ChatMessage, CompletionRequest, RequestTag, Role, estimate_tokens
from .snippets import CodeSnippet, Language, strip_imports
from .validator import ValidationReport

logger = logging.getLogger(__name__)

FIX_KIND = "fix"
CODE_INTRO = "See the code below:"
LOG_INTRO = "For the above code I got the below error log:"
FOLLOWUP_INTRO = "You gave the above imports fix in your attempt {n}. But compiler gave this error:"
FIX_INSTRUCTION = {
    Language.JAVA: (
        "Now fix the error by focusing on fixing the import statements by not using wildcard imports and "
        "must not modify code body which means do not change anything inside the class. "
        "So, it can be successfully compiled and reply with full code."
    ),
    Language.PYTHON: (
        "Now fix the error by focusing on fixing the import statements. "
        "So, it can be run successfully and reply with full code."
    ),
}
# safety margin on the chars/4 token estimate
BUDGET_MARGIN = 1.10


class GuardMode(str, enum.Enum):
    WARN = "Warn"
    REJECT = "Reject"


@dataclass(frozen=True)
class FixConfig:
    max_rounds: int = 5
    temperature: float = 0.5
    # gpt-3.5-turbo-0125 has a 16k window; leave room for the new turn and the reply
    history_token_budget: int = 12_000
    guard_mode: GuardMode = GuardMode.WARN
    max_output_tokens: int = 1024
    model_id: str = DEFAULT_MODEL

    def __post_init__(self) -> None:
        # 0 is allowed: a single validation with no repair exchange
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if self.history_token_budget < 1:
            raise ValueError("history_token_budget must be positive")
        object.__setattr__(self, "guard_mode", GuardMode(self.guard_mode))


class SnippetValidator(Protocol):
    def validate(self, code: str, language: Language | str, classpath: Sequence[str] = ()) -> ValidationReport: ...


@dataclass
class ConversationState:
    snippet_id: str
    language: Language
    last_code: str
    last_error: str = ""
    attempt_number: int = 1
    history: list[ChatMessage] = field(default_factory=list)


@dataclass
class FixRound:
    round: int
    report: ValidationReport
    classpath: list[str] = field(default_factory=list)
    unresolved: list[str] = field(default_factory=list)
    prompt: list[dict] = field(default_factory=list)
    response: Optional[str] = None
    accepted: bool = False
    body_modified: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "validation": self.report.to_dict(),
            "classpath": self.classpath,
            "unresolved": self.unresolved,
            "prompt": self.prompt,
            "response": self.response,
            "accepted": self.accepted,
            "body_modified": self.body_modified,
            "note": self.note,
        }


@dataclass
class FixOutcome:
    final_code: str
    compiled: bool
    rounds_used: int
    per_round: list[FixRound]
    body_modified: bool
    # candidates that changed the body, whether or not they were kept
    modification_attempts: int = 0

    @property
    def final_report(self) -> ValidationReport:
        return self.per_round[-1].report

    @property
    def initial_report(self) -> ValidationReport:
        return self.per_round[0].report

    def to_dict(self) -> dict:
        return {
            "final_code": self.final_code,
            "compiled": self.compiled,
            "rounds_used": self.rounds_used,
            "body_modified": self.body_modified,
            "modification_attempts": self.modification_attempts,
            "rounds": [r.to_dict() for r in self.per_round],
        }


def history_tokens(messages: Sequence[ChatMessage]) -> int:
    """Serialized size of a history in estimated tokens, margin included."""
    return math.ceil(sum(estimate_tokens(m.content) for m in messages) * BUDGET_MARGIN)


def truncate_history(messages: Sequence[ChatMessage], budget: int) -> list[ChatMessage]:
    """Drop the oldest messages until the rest fit ``budget``.

    If even the newest message alone is too large, nothing is kept.
    """
    kept = list(messages)
    while kept and history_tokens(kept) > budget:
        kept.pop(0)
    return kept


def _request(messages: list[ChatMessage], cfg: FixConfig, snippet_id: str, attempt: int) -> CompletionRequest:
    return CompletionRequest(
        messages=tuple(messages),
        temperature=cfg.temperature,
        max_output_tokens=cfg.max_output_tokens,
        model_id=cfg.model_id,
        tag=RequestTag(FIX_KIND, snippet_id, attempt),
    )


def build_prompt_2_first(code: str, error_log: str, language: Language | str, cfg: FixConfig | None = None,
                         snippet_id: str = "") -> CompletionRequest:
    if not error_log.strip():
        raise ValueError("error log must be non-empty")
    language = Language.coerce(language)
    text = "\n".join([PRESENTATION_GUIDE, CODE_INTRO, code.rstrip("\n"), LOG_INTRO,
                      error_log.rstrip("\n"), FIX_INSTRUCTION[language]])
    return _request([ChatMessage(Role.USER, text)], cfg or FixConfig(), snippet_id, 1)


def followup_message(state: ConversationState) -> ChatMessage:
    text = "\n".join([state.last_code.rstrip("\n"), FOLLOWUP_INTRO.format(n=state.attempt_number),
                      state.last_error.rstrip("\n"), FIX_INSTRUCTION[state.language]])
    return ChatMessage(Role.USER, text)


def build_prompt_2_followup(state: ConversationState, cfg: FixConfig | None = None) -> CompletionRequest:
    if state.attempt_number < 2:
        raise ValueError(f"follow-up prompt needs attempt_number >= 2, got {state.attempt_number}")
    cfg = cfg or FixConfig()
    context = truncate_history(state.history, cfg.history_token_budget)
    return _request(context + [followup_message(state)], cfg, state.snippet_id, state.attempt_number)


def _normalized_lines(code: str, language: Language) -> list[str]:
    body, _ = strip_imports(code, language)
    return [" ".join(line.split()) for line in body.splitlines() if line.strip()]


def detect_body_modification(original_body: str, candidate_code: str,
                             language: Language | str = Language.JAVA) -> bool:
    """Whether the candidate's non-import lines differ from the original body, ignoring whitespace."""
    language = Language.coerce(language)
    return _normalized_lines(original_body, language) != _normalized_lines(candidate_code, language)


def _error_text(report: ValidationReport) -> str:
    if report.raw_log.strip():
        return report.raw_log
    lines = [d.message for d in report.diagnostics]
    return "\n".join(lines) or "validation failed without output"


def _check(code: str, language: Language, validator: SnippetValidator, kb: InverseIndex | None,
           base_classpath: Sequence[str]) -> tuple[ValidationReport, list[str], list[str]]:
    classpath, unresolved = list(base_classpath), []
    if language is Language.JAVA and kb is not None:
        _, imports = strip_imports(code, language)
        found, unresolved = assemble_classpath(imports, kb, extract_constraints(code, imports))
        classpath += [p for p in found if p not in classpath]
    report = validator.validate(code, language, classpath)
    return report, classpath, unresolved


def fix(code_with_imports: str, snippet: CodeSnippet, cfg: FixConfig, backend: Backend,
        validator: SnippetValidator, kb: InverseIndex | None = None,
        base_classpath: Sequence[str] = ()) -> FixOutcome:
    """Validate, and on failure ask the model for a corrected version, up to ``max_rounds`` times.

    The returned code is always the latest accepted revision, validated once
    more so that ``compiled`` describes exactly what is returned.
    """
    language = snippet.language
    original_body, _ = strip_imports(code_with_imports, language)
    state = ConversationState(snippet.id, language, code_with_imports)
    rounds: list[FixRound] = []
    modification_attempts = 0

    def outcome(compiled: bool, used: int) -> FixOutcome:
        modified = detect_body_modification(original_body, state.last_code, language)
        return FixOutcome(state.last_code, compiled, used, rounds, modified, modification_attempts)

    for i in range(cfg.max_rounds):
        report, classpath, unresolved = _check(state.last_code, language, validator, kb, base_classpath)
        record = FixRound(i, report, classpath, unresolved)
        rounds.append(record)
        if report.success:
            return outcome(True, i)

        state.last_error = _error_text(report)
        state.attempt_number = i + 1
        if i == 0:
            request = build_prompt_2_first(state.last_code, state.last_error, language, cfg, snippet.id)
            new_turn = request.messages[-1]
        else:
            request = build_prompt_2_followup(state, cfg)
            new_turn = request.messages[-1]
        record.prompt = [m.to_dict() for m in request.messages]
        reply = backend.complete(request)
        record.response = reply.text

        try:
            candidate = extract_code_block(reply.text, language)
        except NoCodeFound:
            candidate = None
            record.note = "no code in reply; keeping previous code"
        if candidate is not None:
            record.body_modified = detect_body_modification(original_body, candidate, language)
            if record.body_modified:
                modification_attempts += 1
            if record.body_modified and cfg.guard_mode is GuardMode.REJECT:
                record.note = "candidate changed the code body; rejected"
            else:
                record.accepted = True
                state.last_code = candidate
                if record.body_modified:
                    logger.warning("%s: round %d reply modified the code body", snippet.id, i + 1)

        history = state.history + [new_turn]
        if reply.text.strip():
            history.append(ChatMessage(Role.ASSISTANT, reply.text))
        state.history = truncate_history(history, cfg.history_token_budget)

    report, classpath, unresolved = _check(state.last_code, language, validator, kb, base_classpath)
    rounds.append(FixRound(cfg.max_rounds, report, classpath, unresolved, note="final validation"))
    return outcome(report.success, cfg.max_rounds)


def write_transcript(path: Path | str, snippet: CodeSnippet, outcome: FixOutcome, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"snippet_id": snippet.id, "language": snippet.language.value, **(extra or {}), "fix": outcome.to_dict()}
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return path
