"""Import statement inference with self-consistency voting."""
from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .extract import extract_import_statements
from .llm import DEFAULT_MODEL, Backend, ChatMessage, CompletionRequest, RequestTag, Role
from .snippets import CodeSnippet, ImportSet, Language

logger = logging.getLogger(__name__)

PRESENTATION_GUIDE = "Reply with to-the-point answer, no elaboration."

INFER_INSTRUCTION = {
    Language.JAVA: (
        "Do not check for any import statements in the code. Only give correct imports by not "
        "using wildcard imports. Please note that you need to pay close attention and your "
        "response should be specific and accurate. Avoid repetition and must not generate "
        "wrong and nonexistent imports:"
    ),
    Language.PYTHON: (
        "Only give correct import statements for the attached code. Please note that you need "
        "to pay close attention and your response should be specific and accurate. Avoid "
        "repetition and must not generate wrong imports:"
    ),
}

INFER_KIND = "infer"


@dataclass(frozen=True)
class InferenceConfig:
    k_samples: int = 10
    temperature: float = 1.0
    max_tiebreak_rounds: int = 5
    max_output_tokens: int = 256
    model_id: str = DEFAULT_MODEL
    # samples within one round may be issued concurrently
    workers: int = 1

    def __post_init__(self) -> None:
        if self.k_samples < 1:
            raise ValueError("k_samples must be >= 1")
        if self.max_tiebreak_rounds < 1:
            raise ValueError("max_tiebreak_rounds must be >= 1")


@dataclass
class InferenceResult:
    chosen: ImportSet
    samples: list[ImportSet]
    vote_count: int
    rounds_used: int
    # one {serialized set: votes} table per round
    round_votes: list[dict[str, int]] = field(default_factory=list)
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen.canonical_lines(),
            "vote_count": self.vote_count,
            "rounds_used": self.rounds_used,
            "fallback": self.fallback,
            "round_votes": self.round_votes,
            "samples": [s.canonical_lines() for s in self.samples],
        }


def build_prompt_1(snippet: CodeSnippet, cfg: InferenceConfig | None = None, attempt: int = 1) -> CompletionRequest:
    cfg = cfg or InferenceConfig()
    if not snippet.body.strip():
        raise ValueError(f"snippet {snippet.id} has an empty body")
    text = f"{PRESENTATION_GUIDE}\n{INFER_INSTRUCTION[snippet.language]}\n{snippet.body}"
    return CompletionRequest(
        messages=(ChatMessage(Role.USER, text),),
        temperature=cfg.temperature,
        max_output_tokens=cfg.max_output_tokens,
        model_id=cfg.model_id,
        tag=RequestTag(INFER_KIND, snippet.id, attempt),
    )


def tally(samples: list[ImportSet]) -> Counter:
    """Votes per distinct set; a set's identity ignores statement order."""
    return Counter(samples)


def _sample_round(snippet, cfg, backend, round_no) -> list[ImportSet]:
    request = build_prompt_1(snippet, cfg, attempt=round_no)

    def one(_):
        reply = backend.complete(request)
        return extract_import_statements(reply.text, snippet.language)

    if cfg.workers > 1 and cfg.k_samples > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.workers, cfg.k_samples)) as pool:
            return list(pool.map(one, range(cfg.k_samples)))
    return [one(i) for i in range(cfg.k_samples)]


def self_consistent_infer(snippet: CodeSnippet, cfg: InferenceConfig, backend: Backend) -> InferenceResult:
    """Sample K replies and keep the most frequent import set.

    A tie among the most frequent sets discards the round and draws a fresh
    batch of K.  After ``max_tiebreak_rounds`` tied rounds the tied set with
    the lexicographically smallest canonical serialization wins.
    """
    samples: list[ImportSet] = []
    round_votes: list[dict[str, int]] = []
    for round_no in range(1, cfg.max_tiebreak_rounds + 1):
        batch = _sample_round(snippet, cfg, backend, round_no)
        samples.extend(batch)
        votes = tally(batch)
        round_votes.append({s.serialize(): n for s, n in sorted(votes.items(), key=lambda kv: kv[0].serialize())})
        top = max(votes.values())
        leaders = [s for s, n in votes.items() if n == top]
        if len(leaders) == 1:
            return InferenceResult(leaders[0], samples, top, round_no, round_votes)
        logger.debug("%s: %d-way tie at %d votes in round %d", snippet.id, len(leaders), top, round_no)
    chosen = min(leaders, key=lambda s: s.serialize())
    logger.info("%s: tie unresolved after %d rounds, using lexicographic fallback", snippet.id, round_no)
    return InferenceResult(chosen, samples, top, round_no, round_votes, fallback=True)
