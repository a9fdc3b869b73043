"""Turning an ambiguous edit instruction into specific ones via an LLM.

The decomposition call happens once, at the largest requested instruction
count: smaller sets are prefixes of that one result, which guarantees the
nesting property (the set for N is always the first N entries of the set
for any larger N) and spends one provider call instead of N. Raw provider
responses are cached on disk keyed by a digest of (model id, prompt), so
repeated runs are free and auditable. Parsers never crash on arbitrary
text; they raise typed errors carrying the raw output.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence, runtime_checkable

from . import prompts
from .errors import (
    CaptionParseError,
    ClassificationError,
    DecompositionError,
    ProviderError,
    ValidationError,
)

DEFAULT_WORD_BUDGET = 10


@dataclass(frozen=True)
class AmbiguousInstruction:
    """A user edit request that admits many valid realizations."""

    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("ambiguous instruction must be non-empty")
        object.__setattr__(self, "text", self.text.strip())


@dataclass(frozen=True)
class SpecificInstructionSet:
    """Ordered specific instructions with provenance.

    ``prompt_digest`` identifies the exact prompt that produced the set and
    ``source_model`` the provider; together they make the decomposition
    reproducible and auditable.
    """

    instructions: tuple[str, ...]
    source_model: str = ""
    prompt_digest: str = ""
    caption: str = ""

    def __post_init__(self):
        items = tuple(self.instructions)
        if len(items) < 1:
            raise ValidationError("specific instruction set must be non-empty")
        if any(not s.strip() for s in items):
            raise ValidationError("specific instructions must be non-empty strings")
        if len(set(items)) != len(items):
            raise ValidationError("specific instructions must be distinct")
        object.__setattr__(self, "instructions", items)

    def __len__(self) -> int:
        return len(self.instructions)

    def prefix(self, n: int) -> "SpecificInstructionSet":
        """The length-``n`` prefix set; preserves provenance fields."""
        if not 1 <= n <= len(self.instructions):
            raise ValidationError(
                f"prefix length {n} out of range for a set of {len(self.instructions)}"
            )
        return SpecificInstructionSet(
            self.instructions[:n], self.source_model, self.prompt_digest, self.caption
        )


@dataclass(frozen=True)
class CaptionPair:
    """Initial and post-edit scene captions, kept short and comparable."""

    initial: str
    final: str
    word_budget: int = DEFAULT_WORD_BUDGET

    def __post_init__(self):
        for name in ("initial", "final"):
            text = getattr(self, name).strip()
            if not text:
                raise ValidationError(f"{name} caption must be non-empty")
            words = len(text.split())
            if words > self.word_budget:
                raise ValidationError(
                    f"{name} caption has {words} words, budget is {self.word_budget}"
                )
            object.__setattr__(self, name, text)


class Ambiguity(enum.Enum):
    AMBIGUOUS = "ambiguous"
    SPECIFIC = "specific"


@runtime_checkable
class LLMProvider(Protocol):
    """Text-in/text-out completion with optional image attachments."""

    @property
    def model_id(self) -> str: ...

    def complete(self, prompt: str, image_refs: Sequence[str] = ()) -> str: ...


class FixtureProvider:
    """Offline provider serving canned responses; counts calls for tests.

    ``responses`` maps exact prompts to replies, or is a callable from
    prompt to reply. Unknown prompts raise a provider error so silent
    fixture gaps surface immediately.
    """

    def __init__(
        self,
        responses: dict[str, str] | Callable[[str], str],
        model_id: str = "fixture",
    ):
        self._responses = responses
        self._model_id = model_id
        self.calls = 0

    @property
    def model_id(self) -> str:
        return self._model_id

    def complete(self, prompt: str, image_refs: Sequence[str] = ()) -> str:
        self.calls += 1
        if callable(self._responses):
            return self._responses(prompt)
        try:
            return self._responses[prompt]
        except KeyError:
            raise ProviderError(
                f"fixture provider has no response for prompt starting "
                f"{prompt[:60]!r}"
            ) from None


def cache_key(model_id: str, prompt: str) -> str:
    """Stable digest identifying one (model, prompt) completion."""
    payload = model_id.encode("utf-8") + b"\x00" + prompt.encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class PromptCache:
    """Append-only on-disk store of provider completions.

    One JSON record per line in ``records.jsonl``; each record carries the
    key, model id, full prompt, response, and timestamp, so the file is
    directly inspectable. Malformed lines are skipped on load rather than
    poisoning the cache. Writes are serialized per process and emitted as
    single full lines.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / "records.jsonl"
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        self._load()

    def _load(self):
        if not self.path.exists():
            return
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                self._entries[record["key"]] = record["response"]
            except (json.JSONDecodeError, KeyError, TypeError):
                continue

    def get(self, model_id: str, prompt: str) -> str | None:
        return self._entries.get(cache_key(model_id, prompt))

    def put(self, model_id: str, prompt: str, response: str) -> None:
        key = cache_key(model_id, prompt)
        record = {
            "key": key,
            "model_id": model_id,
            "prompt": prompt,
            "response": response,
            "timestamp": time.time(),
        }
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            self._entries[key] = response
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()

    def __len__(self) -> int:
        return len(self._entries)


def build_decomposition_prompt(caption: str, c: AmbiguousInstruction, n: int) -> str:
    return prompts.render_decomposition(caption, c.text, n)


def build_caption_prompt(c: AmbiguousInstruction, image_ref: str) -> str:
    return prompts.render_captioning(c.text, image_ref)


_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")
_SUGGESTED = re.compile(r"^\s*suggested output\s*:\s*", re.IGNORECASE)


def _clean_line(line: str) -> str:
    line = _BULLET.sub("", line.strip())
    line = _SUGGESTED.sub("", line)
    return line.strip()


def parse_specific_instructions(
    llm_output: str,
    n: int,
    *,
    source_model: str = "",
    prompt_digest: str = "",
    caption: str = "",
) -> SpecificInstructionSet:
    """Extract exactly ``n`` instructions, one per line, from raw LLM text.

    Bullets, numbering, and a leading "Suggested output:" are stripped;
    blank lines and duplicates are dropped; surplus lines beyond ``n`` are
    ignored so the first ``n`` usable lines form the set.
    """
    if n < 1:
        raise ValidationError(f"instruction count must be >= 1, got {n}")
    seen: set[str] = set()
    usable: list[str] = []
    for raw in llm_output.splitlines():
        line = _clean_line(raw)
        if not line or line in seen:
            continue
        seen.add(line)
        usable.append(line)
    if len(usable) < n:
        raise DecompositionError(
            f"needed {n} instructions but only {len(usable)} usable lines",
            raw_output=llm_output,
        )
    return SpecificInstructionSet(
        tuple(usable[:n]),
        source_model=source_model,
        prompt_digest=prompt_digest,
        caption=caption,
    )


_CAPTION_LINE = re.compile(r"^\s*([12])[.)]\s*(.+?)\s*$")


def _strip_quotes(text: str) -> str:
    text = text.strip()
    while len(text) >= 2 and text[0] in "\"'" and text[-1] == text[0]:
        text = text[1:-1].strip()
    return text


def parse_caption_pair(llm_output: str, word_budget: int = DEFAULT_WORD_BUDGET) -> CaptionPair:
    """Parse the numbered two-caption reply format ``1. "…" / 2. "…"``."""
    found: dict[str, str] = {}
    for raw in llm_output.splitlines():
        match = _CAPTION_LINE.match(raw)
        if match and match.group(1) not in found:
            found[match.group(1)] = _strip_quotes(match.group(2))
    missing = [k for k in ("1", "2") if not found.get(k)]
    if missing:
        raise CaptionParseError(
            f"caption reply missing line(s) {', '.join(missing)}",
            raw_output=llm_output,
        )
    try:
        return CaptionPair(found["1"], found["2"], word_budget=word_budget)
    except ValidationError as exc:
        raise CaptionParseError(str(exc), raw_output=llm_output) from exc


_RESPONSE_TOKEN = re.compile(r"response:\s*(ambiguous|specific)", re.IGNORECASE)


def parse_ambiguity(llm_output: str) -> Ambiguity:
    """Find the mandated leading token; reasoning before it is tolerated."""
    match = _RESPONSE_TOKEN.search(llm_output)
    if match is None:
        raise ClassificationError(
            "no 'Response: ambiguous.' or 'Response: specific.' token found",
            raw_output=llm_output,
        )
    return Ambiguity(match.group(1).lower())


class InstructionSpecifier:
    """High-level decomposition/captioning/classification over a provider."""

    def __init__(
        self,
        provider: LLMProvider,
        cache: PromptCache | None = None,
        max_retries: int = 2,
        word_budget: int = DEFAULT_WORD_BUDGET,
    ):
        if max_retries < 0:
            raise ValidationError(f"max_retries must be >= 0, got {max_retries}")
        self.provider = provider
        self.cache = cache
        self.max_retries = max_retries
        self.word_budget = word_budget

    def _complete(self, prompt: str, image_refs: Sequence[str] = ()) -> tuple[str, bool]:
        """Returns (response, from_cache); only non-cached calls hit the provider."""
        if self.cache is not None:
            cached = self.cache.get(self.provider.model_id, prompt)
            if cached is not None:
                return cached, True
        response = self.provider.complete(prompt, image_refs)
        return response, False

    def _store(self, prompt: str, response: str) -> None:
        if self.cache is not None:
            self.cache.put(self.provider.model_id, prompt, response)

    def decompose(
        self,
        caption: str,
        c: AmbiguousInstruction | str,
        max_n: int,
    ) -> SpecificInstructionSet:
        """One provider call for ``max_n`` instructions; smaller sets come
        from :meth:`SpecificInstructionSet.prefix`.

        Malformed outputs are retried up to ``max_retries`` times, then the
        last parse error propagates. Only parseable responses are cached,
        so a bad response never poisons future runs.
        """
        if isinstance(c, str):
            c = AmbiguousInstruction(c)
        prompt = build_decomposition_prompt(caption, c, max_n)
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()

        response, from_cache = self._complete(prompt)
        attempts = 0
        while True:
            try:
                result = parse_specific_instructions(
                    response,
                    max_n,
                    source_model=self.provider.model_id,
                    prompt_digest=digest,
                    caption=caption,
                )
            except DecompositionError:
                if from_cache:
                    # A cached record should always re-parse; treat failure
                    # as a stale record and fall through to the provider.
                    from_cache = False
                    response = self.provider.complete(prompt, ())
                    continue
                attempts += 1
                if attempts > self.max_retries:
                    raise
                response = self.provider.complete(prompt, ())
                continue
            if not from_cache:
                self._store(prompt, response)
            return result

    def caption_pair(self, c: AmbiguousInstruction | str, image_ref: str) -> CaptionPair:
        if isinstance(c, str):
            c = AmbiguousInstruction(c)
        prompt = build_caption_prompt(c, image_ref)
        response, from_cache = self._complete(prompt, (image_ref,))
        pair = parse_caption_pair(response, word_budget=self.word_budget)
        if not from_cache:
            self._store(prompt, response)
        return pair

    def classify_ambiguity(self, c: AmbiguousInstruction | str) -> Ambiguity:
        if isinstance(c, str):
            c = AmbiguousInstruction(c)
        prompt = prompts.render_selection(c.text)
        response, from_cache = self._complete(prompt)
        verdict = parse_ambiguity(response)
        if not from_cache:
            self._store(prompt, response)
        return verdict
