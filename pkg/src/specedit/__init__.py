"""Zero-shot image editing with ambiguous instructions.

Two pieces work together: an LLM turns one ambiguous edit request into a
small ordered set of specific instructions, and the denoising loop of an
instruction-conditioned diffusion editor injects those instructions
through an extra guidance term built by per-location argmax selection
over their noise estimates.
"""

from .cli import main
from .denoiser import (
    Conditioning,
    CountingBackend,
    DenoiserBackend,
    MockAutoencoder,
    MockDenoiser,
    create_backend,
    register_backend,
)
from .errors import (
    BackendError,
    CaptionParseError,
    ClassificationError,
    ConfigError,
    DecompositionError,
    EvaluationError,
    PipelineError,
    ProviderError,
    ShapeMismatchError,
    SpecEditError,
    UndefinedMetricError,
    ValidationError,
)
from .guidance import (
    GuidanceWeights,
    Latent,
    SelectionMask,
    aggregate_by_mask,
    average_aggregate,
    build_selection_mask,
    cfg_combine,
    channel_salience,
    composable_combine,
    sane_combine,
    specific_delta,
    specific_guidance_term,
)
from .images import load_image, save_image, synthetic_image
from .metrics import (
    EmbeddingVector,
    HashEmbeddingProvider,
    MetricReport,
    Modality,
    Preference,
    SampleMetrics,
    clip_d,
    clip_delta,
    clip_i,
    cosine,
    diversity,
    evaluate_edit,
    gpt_preference,
    gpt_preference_swapped,
    mean_pixel_difference,
)
from .pipeline import (
    EditConfig,
    EditManifest,
    EditStrategy,
    StepEstimates,
    estimate_cost,
    per_step_combination,
    replay_manifest,
    run_edit,
)
from .scheduler import AncestralSampler, NoiseSchedule
from .specifier import (
    AmbiguousInstruction,
    Ambiguity,
    CaptionPair,
    FixtureProvider,
    InstructionSpecifier,
    LLMProvider,
    PromptCache,
    SpecificInstructionSet,
    parse_ambiguity,
    parse_caption_pair,
    parse_specific_instructions,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousInstruction",
    "Ambiguity",
    "AncestralSampler",
    "BackendError",
    "CaptionPair",
    "CaptionParseError",
    "ClassificationError",
    "Conditioning",
    "ConfigError",
    "CountingBackend",
    "DecompositionError",
    "DenoiserBackend",
    "EditConfig",
    "EditManifest",
    "EditStrategy",
    "EmbeddingVector",
    "EvaluationError",
    "FixtureProvider",
    "GuidanceWeights",
    "HashEmbeddingProvider",
    "InstructionSpecifier",
    "LLMProvider",
    "Latent",
    "MetricReport",
    "MockAutoencoder",
    "MockDenoiser",
    "Modality",
    "NoiseSchedule",
    "PipelineError",
    "Preference",
    "PromptCache",
    "ProviderError",
    "SampleMetrics",
    "SelectionMask",
    "ShapeMismatchError",
    "SpecEditError",
    "SpecificInstructionSet",
    "StepEstimates",
    "UndefinedMetricError",
    "ValidationError",
    "aggregate_by_mask",
    "average_aggregate",
    "build_selection_mask",
    "cfg_combine",
    "channel_salience",
    "clip_d",
    "clip_delta",
    "clip_i",
    "composable_combine",
    "cosine",
    "create_backend",
    "diversity",
    "estimate_cost",
    "evaluate_edit",
    "gpt_preference",
    "gpt_preference_swapped",
    "load_image",
    "main",
    "mean_pixel_difference",
    "parse_ambiguity",
    "parse_caption_pair",
    "parse_specific_instructions",
    "per_step_combination",
    "register_backend",
    "replay_manifest",
    "run_edit",
    "sane_combine",
    "save_image",
    "specific_delta",
    "specific_guidance_term",
    "synthetic_image",
]
