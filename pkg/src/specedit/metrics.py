"""Edit-quality metrics over pluggable joint image-text embeddings.

Three cosine metrics: input preservation (original vs edited image
embeddings), edit strength (edited image vs final caption), and
directional adherence (image-embedding difference vs caption-embedding
difference). Embedding encoders are injected; the built-in hash provider
produces deterministic unit vectors from content digests so the whole
metric suite runs offline. A pairwise preference judge and diversity
helpers round out the evaluation surface.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from . import prompts
from .errors import EvaluationError, UndefinedMetricError, ValidationError
from .specifier import CaptionPair, LLMProvider


class Modality(enum.Enum):
    IMAGE = "image"
    TEXT = "text"


@dataclass(frozen=True)
class EmbeddingVector:
    """A raw (unnormalized) embedding with its modality and provider id."""

    values: np.ndarray
    modality: Modality
    provider_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValidationError(f"embedding must be a non-empty 1-D vector, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.size)


def _cosine_raw(a: np.ndarray, b: np.ndarray) -> float:
    if a.size != b.size:
        raise ValidationError(f"embedding dims differ: {a.size} vs {b.size}")
    dot_ab = float(np.dot(a, b))
    dot_aa = float(np.dot(a, a))
    dot_bb = float(np.dot(b, b))
    if dot_aa == 0.0 or dot_bb == 0.0:
        raise ValidationError("cosine is undefined for a zero vector")
    # sqrt of the product (not product of sqrts) so cosine(v, v) is
    # exactly 1.0: dot_ab / sqrt(dot_ab * dot_ab) == 1.0 in IEEE floats.
    return dot_ab / float(np.sqrt(dot_aa * dot_bb))


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of two embeddings; errors on zero vectors."""
    return _cosine_raw(a.values, b.values)


def _require_modality(vec: EmbeddingVector, expected: Modality, role: str) -> None:
    if vec.modality is not expected:
        raise ValidationError(
            f"{role} must be a {expected.value} embedding, got {vec.modality.value}"
        )


def clip_i(x_emb: EmbeddingVector, edited_emb: EmbeddingVector) -> float:
    """Input preservation: cosine between original and edited image embeddings."""
    _require_modality(x_emb, Modality.IMAGE, "original embedding")
    _require_modality(edited_emb, Modality.IMAGE, "edited embedding")
    return cosine(x_emb, edited_emb)


def clip_d(edited_emb: EmbeddingVector, final_caption_emb: EmbeddingVector) -> float:
    """Edit strength: cosine between the edited image embedding and the
    final-caption text embedding (higher is better)."""
    _require_modality(edited_emb, Modality.IMAGE, "edited embedding")
    _require_modality(final_caption_emb, Modality.TEXT, "final caption embedding")
    return cosine(edited_emb, final_caption_emb)


def clip_delta(
    x_emb: EmbeddingVector,
    edited_emb: EmbeddingVector,
    init_caption_emb: EmbeddingVector,
    final_caption_emb: EmbeddingVector,
) -> float:
    """Directional adherence: cosine between the image-embedding change and
    the caption-embedding change.

    Undefined (typed error, never reported as 0) when either difference
    vector is exactly zero, e.g. an edit that changed nothing.
    """
    _require_modality(x_emb, Modality.IMAGE, "original embedding")
    _require_modality(edited_emb, Modality.IMAGE, "edited embedding")
    _require_modality(init_caption_emb, Modality.TEXT, "initial caption embedding")
    _require_modality(final_caption_emb, Modality.TEXT, "final caption embedding")
    image_diff = edited_emb.values - x_emb.values
    text_diff = final_caption_emb.values - init_caption_emb.values
    if not np.any(image_diff):
        raise UndefinedMetricError("image embeddings are identical; direction undefined")
    if not np.any(text_diff):
        raise UndefinedMetricError("caption embeddings are identical; direction undefined")
    return _cosine_raw(image_diff, text_diff)


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Joint image-text encoder surface the metrics consume."""

    @property
    def provider_id(self) -> str: ...

    def embed_image(self, image: np.ndarray) -> EmbeddingVector: ...

    def embed_text(self, text: str) -> EmbeddingVector: ...


class HashEmbeddingProvider:
    """Deterministic offline embedder: content digest seeds a unit vector.

    Identical inputs map to identical embeddings (so self-similarity is
    exactly 1); distinct inputs map to effectively uncorrelated directions.
    Purely a test/fixture device, with no semantic content.
    """

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise ValidationError(f"embedding dim must be >= 2, got {dim}")
        self.dim = dim

    @property
    def provider_id(self) -> str:
        return f"hash-{self.dim}"

    def _from_bytes(self, payload: bytes, modality: Modality) -> EmbeddingVector:
        digest = hashlib.sha256(modality.value.encode("ascii") + b"\x00" + payload).digest()
        seed = int.from_bytes(digest[:8], "big")
        rng = np.random.Generator(np.random.PCG64(seed))
        vec = rng.standard_normal(self.dim)
        vec = vec / np.linalg.norm(vec)
        return EmbeddingVector(vec, modality, self.provider_id)

    def embed_image(self, image: np.ndarray) -> EmbeddingVector:
        arr = np.ascontiguousarray(np.asarray(image, dtype=np.float32))
        header = f"{arr.shape}".encode("ascii")
        return self._from_bytes(header + arr.tobytes(), Modality.IMAGE)

    def embed_text(self, text: str) -> EmbeddingVector:
        return self._from_bytes(text.encode("utf-8"), Modality.TEXT)


@dataclass
class SampleMetrics:
    """Metric values for one edited sample; directional adherence may be
    missing when undefined."""

    sample_id: str
    clip_d: float
    clip_i: float
    clip_delta: float | None

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "clip_d": self.clip_d,
            "clip_i": self.clip_i,
            "clip_delta": self.clip_delta,
        }


@dataclass
class MetricReport:
    """Per-sample metric records plus aggregate means.

    Undefined directional values are excluded from their mean and counted
    separately, never coerced to zero.
    """

    samples: list[SampleMetrics] = field(default_factory=list)

    def add(self, sample: SampleMetrics) -> None:
        self.samples.append(sample)

    def _mean(self, values: list[float]) -> float | None:
        return float(np.mean(values)) if values else None

    def aggregate(self) -> dict:
        defined_delta = [s.clip_delta for s in self.samples if s.clip_delta is not None]
        return {
            "count": len(self.samples),
            "clip_d_mean": self._mean([s.clip_d for s in self.samples]),
            "clip_i_mean": self._mean([s.clip_i for s in self.samples]),
            "clip_delta_mean": self._mean(defined_delta),
            "clip_delta_undefined": len(self.samples) - len(defined_delta),
        }

    def to_json(self) -> str:
        payload = {
            "samples": [s.to_dict() for s in self.samples],
            "aggregate": self.aggregate(),
        }
        return json.dumps(payload, indent=2)


def evaluate_edit(
    original: np.ndarray,
    edited: np.ndarray,
    captions: CaptionPair,
    provider: EmbeddingProvider,
    sample_id: str = "",
) -> SampleMetrics:
    """All three metrics for one edit; a mathematically undefined
    directional value is recorded as missing."""
    x_emb = provider.embed_image(original)
    edited_emb = provider.embed_image(edited)
    init_cap = provider.embed_text(captions.initial)
    final_cap = provider.embed_text(captions.final)
    try:
        delta: float | None = clip_delta(x_emb, edited_emb, init_cap, final_cap)
    except UndefinedMetricError:
        delta = None
    return SampleMetrics(
        sample_id=sample_id,
        clip_d=clip_d(edited_emb, final_cap),
        clip_i=clip_i(x_emb, edited_emb),
        clip_delta=delta,
    )


def diversity(
    samples: Sequence[np.ndarray],
    reference: np.ndarray,
    distance: Callable[[np.ndarray, np.ndarray], float],
) -> float:
    """Mean provider distance between the reference image and each sample."""
    if len(samples) == 0:
        raise ValidationError("diversity requires at least one sample")
    return float(np.mean([float(distance(reference, s)) for s in samples]))


def mean_absolute_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Simple built-in distance: mean absolute pixel difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"image shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def mean_pixel_difference(reference: np.ndarray, samples: Sequence[np.ndarray]) -> np.ndarray:
    """Per-pixel mean absolute difference across samples, as an image array."""
    if len(samples) == 0:
        raise ValidationError("mean pixel difference requires at least one sample")
    ref = np.asarray(reference, dtype=np.float32)
    diffs = []
    for sample in samples:
        arr = np.asarray(sample, dtype=np.float32)
        if arr.shape != ref.shape:
            raise ValidationError(f"sample shape {arr.shape} differs from reference {ref.shape}")
        diffs.append(np.abs(arr - ref))
    return np.mean(np.stack(diffs, axis=0), axis=0)


class Preference(enum.Enum):
    A = "A"
    B = "B"


def parse_preference(reply: str) -> Preference:
    """Accept exactly one judge letter, tolerating whitespace and a
    trailing period; anything else is a contract violation."""
    token = reply.strip().rstrip(".").strip()
    if token.upper() == "A":
        return Preference.A
    if token.upper() == "B":
        return Preference.B
    raise EvaluationError(f"judge reply is not a single A/B verdict: {reply!r}")


def gpt_preference(
    image_ref: str,
    edited_a_ref: str,
    edited_b_ref: str,
    instruction: str,
    provider: LLMProvider,
    max_retries: int = 2,
) -> Preference:
    """One pairwise preference query; retries unusable verdicts, then errors."""
    prompt = prompts.render_preference(instruction, image_ref, edited_a_ref, edited_b_ref)
    attempts = 0
    while True:
        reply = provider.complete(prompt, (image_ref, edited_a_ref, edited_b_ref))
        try:
            return parse_preference(reply)
        except EvaluationError:
            attempts += 1
            if attempts > max_retries:
                raise


@dataclass(frozen=True)
class PreferenceRecord:
    """Verdicts from the position-bias control: the same pair judged twice
    with the A/B slots swapped. ``consistent`` means the two runs point at
    the same underlying image; it is recorded, not asserted."""

    forward: Preference
    swapped: Preference

    @property
    def consistent(self) -> bool:
        return self.forward != self.swapped


def gpt_preference_swapped(
    image_ref: str,
    edited_a_ref: str,
    edited_b_ref: str,
    instruction: str,
    provider: LLMProvider,
    max_retries: int = 2,
) -> PreferenceRecord:
    forward = gpt_preference(
        image_ref, edited_a_ref, edited_b_ref, instruction, provider, max_retries
    )
    swapped = gpt_preference(
        image_ref, edited_b_ref, edited_a_ref, instruction, provider, max_retries
    )
    return PreferenceRecord(forward, swapped)
