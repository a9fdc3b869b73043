"""End-to-end editing runs: conditioning fan-out, strategy dispatch,
scheduler stepping, and replayable manifests.

One run encodes the input image, walks the full denoising schedule, issues
exactly the conditional noise predictions its strategy needs at each step,
combines them, and decodes the final latent. Everything stochastic flows
from the single seed in ``EditConfig``, so a manifest plus the input image
replays bit-identically on the mock backend.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import images
from .denoiser import Conditioning, CountingBackend, DenoiserBackend, create_backend
from .errors import BackendError, PipelineError, ValidationError
from .guidance import (
    GuidanceWeights,
    Latent,
    SelectionMask,
    average_aggregate,
    cfg_combine,
    composable_combine,
    sane_combine,
    specific_guidance_term,
)
from .scheduler import AncestralSampler, NoiseSchedule
from .specifier import SpecificInstructionSet

PROMPT_CONCAT_SEPARATOR = ", "
MANIFEST_VERSION = 1


class EditStrategy(enum.Enum):
    """How the per-step noise estimates are combined."""

    BASELINE = "baseline"
    SANE = "sane"
    SANE_NO_C = "sane_no_c"
    SANE_AVG = "sane_avg"
    PROMPT_CONCAT = "prompt_concat"
    COMPOSABLE = "composable"

    @staticmethod
    def parse(name: str) -> "EditStrategy":
        key = name.strip().lower().replace("-", "_")
        for strategy in EditStrategy:
            if strategy.value == key:
                return strategy
        known = ", ".join(s.value for s in EditStrategy)
        raise ValidationError(f"unknown strategy {name!r}; choose one of: {known}")

    @property
    def needs_specific_calls(self) -> bool:
        """True when the strategy issues one extra call per specific instruction."""
        return self in (
            EditStrategy.SANE,
            EditStrategy.SANE_NO_C,
            EditStrategy.SANE_AVG,
            EditStrategy.COMPOSABLE,
        )

    @property
    def needs_instructions(self) -> bool:
        """True when the strategy reads the specific-instruction set at all."""
        return self is not EditStrategy.BASELINE


@dataclass(frozen=True)
class EditConfig:
    """Run-level knobs: guidance weights, schedule length, seed, image size,
    and how many specific instructions to use."""

    weights: GuidanceWeights
    steps: int = 30
    seed: int = 0
    image_size: tuple[int, int] = (512, 512)
    n_specific: int = 3

    def __post_init__(self):
        if self.steps < 1:
            raise ValidationError(f"steps must be >= 1, got {self.steps}")
        if self.n_specific < 0:
            raise ValidationError(f"n_specific must be >= 0, got {self.n_specific}")
        width, height = self.image_size
        if width < 1 or height < 1:
            raise ValidationError(f"image size must be positive, got {self.image_size}")


@dataclass(frozen=True)
class StepEstimates:
    """All noise predictions gathered at one timestep."""

    eps_uncond: Latent
    eps_image: Latent
    eps_full: Latent
    eps_specifics: tuple[Latent, ...] = ()


def per_step_combination(
    strategy: EditStrategy,
    estimates: StepEstimates,
    weights: GuidanceWeights,
) -> tuple[Latent, SelectionMask | None]:
    """Dispatch one step's estimates through the strategy's combination rule.

    Returns the guided estimate and, for mask-based strategies, the
    selection mask used (``None`` otherwise).
    """
    specifics = list(estimates.eps_specifics)
    if strategy.needs_specific_calls and not specifics:
        raise PipelineError(f"strategy {strategy.value} dispatched without specific estimates")
    if strategy in (EditStrategy.BASELINE, EditStrategy.PROMPT_CONCAT):
        combined = cfg_combine(estimates.eps_uncond, estimates.eps_image, estimates.eps_full, weights)
        return combined, None
    if strategy is EditStrategy.SANE:
        return sane_combine(
            estimates.eps_uncond, estimates.eps_image, estimates.eps_full, specifics, weights
        )
    if strategy is EditStrategy.SANE_NO_C:
        return sane_combine(
            estimates.eps_uncond,
            estimates.eps_image,
            estimates.eps_full,
            specifics,
            weights.with_text_weight(0.0),
        )
    if strategy is EditStrategy.SANE_AVG:
        base = cfg_combine(estimates.eps_uncond, estimates.eps_image, estimates.eps_full, weights)
        term = specific_guidance_term(
            average_aggregate(specifics), estimates.eps_image, weights.w_specific
        )
        return Latent(base.data + term.data), None
    if strategy is EditStrategy.COMPOSABLE:
        combined = composable_combine(
            estimates.eps_uncond, estimates.eps_image, estimates.eps_full, specifics, weights
        )
        return combined, None
    raise PipelineError(f"unhandled strategy {strategy!r}")


def estimate_cost(n_specific: int, steps: int, strategy: EditStrategy = EditStrategy.SANE) -> int:
    """Denoiser calls a run will issue: ``steps * (3 + N)`` for strategies
    that fan out over specific instructions, ``steps * 3`` otherwise."""
    if n_specific < 0:
        raise ValidationError(f"n_specific must be >= 0, got {n_specific}")
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    per_step = 3 + n_specific if strategy.needs_specific_calls else 3
    return steps * per_step


def _digest_array(arr: np.ndarray) -> str:
    payload = np.ascontiguousarray(arr)
    header = f"{payload.dtype.str}|{payload.shape}".encode("ascii")
    return hashlib.sha256(header + payload.tobytes()).hexdigest()


@dataclass
class EditManifest:
    """Complete, replayable record of one editing run."""

    instruction: str
    strategy: str
    weights: dict[str, float]
    steps: int
    seed: int
    image_size: tuple[int, int]
    n_specific: int
    backend_id: str
    specific_instructions: list[str] = field(default_factory=list)
    instruction_provenance: dict[str, str] = field(default_factory=dict)
    input_digest: str = ""
    output_digest: str = ""
    input_path: str = ""
    output_path: str = ""
    calls_per_step: int = 0
    total_calls: int = 0
    batching: str = "sequential"
    mask_histograms: list[list[int]] = field(default_factory=list)
    full_masks: list[list[list[int]]] = field(default_factory=list)
    metrics: dict[str, float] = field(default_factory=dict)
    wall_seconds: float = 0.0
    manifest_version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "manifest_version": self.manifest_version,
            "instruction": self.instruction,
            "strategy": self.strategy,
            "weights": dict(self.weights),
            "steps": self.steps,
            "seed": self.seed,
            "image_size": list(self.image_size),
            "n_specific": self.n_specific,
            "backend_id": self.backend_id,
            "specific_instructions": list(self.specific_instructions),
            "instruction_provenance": dict(self.instruction_provenance),
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "input_path": self.input_path,
            "output_path": self.output_path,
            "calls_per_step": self.calls_per_step,
            "total_calls": self.total_calls,
            "batching": self.batching,
            "mask_histograms": self.mask_histograms,
            "full_masks": self.full_masks,
            "metrics": dict(self.metrics),
            "wall_seconds": self.wall_seconds,
        }

    @staticmethod
    def from_dict(payload: dict) -> "EditManifest":
        version = payload.get("manifest_version")
        if version != MANIFEST_VERSION:
            raise ValidationError(f"unsupported manifest version {version!r}")
        return EditManifest(
            instruction=payload["instruction"],
            strategy=payload["strategy"],
            weights=dict(payload["weights"]),
            steps=int(payload["steps"]),
            seed=int(payload["seed"]),
            image_size=tuple(payload["image_size"]),  # type: ignore[arg-type]
            n_specific=int(payload["n_specific"]),
            backend_id=payload["backend_id"],
            specific_instructions=list(payload.get("specific_instructions", [])),
            instruction_provenance=dict(payload.get("instruction_provenance", {})),
            input_digest=payload.get("input_digest", ""),
            output_digest=payload.get("output_digest", ""),
            input_path=payload.get("input_path", ""),
            output_path=payload.get("output_path", ""),
            calls_per_step=int(payload.get("calls_per_step", 0)),
            total_calls=int(payload.get("total_calls", 0)),
            batching=payload.get("batching", "sequential"),
            mask_histograms=[list(h) for h in payload.get("mask_histograms", [])],
            full_masks=payload.get("full_masks", []),
            metrics=dict(payload.get("metrics", {})),
            wall_seconds=float(payload.get("wall_seconds", 0.0)),
        )

    def save(self, path: str | Path) -> Path:
        """Write as JSON atomically (temp file plus rename)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path

    @staticmethod
    def load(path: str | Path) -> "EditManifest":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return EditManifest.from_dict(payload)


def _conditioning_text(
    strategy: EditStrategy,
    instruction: str,
    spec_set: SpecificInstructionSet | None,
) -> str:
    if strategy is EditStrategy.PROMPT_CONCAT:
        assert spec_set is not None
        return PROMPT_CONCAT_SEPARATOR.join([instruction, *spec_set.instructions])
    return instruction


def run_edit(
    image: np.ndarray,
    instruction: str,
    spec_set: SpecificInstructionSet | None,
    config: EditConfig,
    strategy: EditStrategy,
    backend: DenoiserBackend,
    full_masks: bool = False,
) -> tuple[np.ndarray, EditManifest]:
    """Execute one complete edit and return the image plus its manifest.

    ``spec_set`` must be present and non-empty for every strategy except
    BASELINE, which ignores it entirely. ``full_masks`` switches the mask
    diagnostics from per-step histograms (the default, compact) to full
    index dumps.
    """
    image = images.validate_image_array(image)
    if not instruction.strip():
        raise ValidationError("edit instruction must be non-empty")
    active_set: SpecificInstructionSet | None = None
    if strategy.needs_instructions:
        if spec_set is None or len(spec_set) == 0:
            raise ValidationError(f"strategy {strategy.value} requires specific instructions")
        if config.n_specific < 1:
            raise ValidationError(
                f"strategy {strategy.value} requires n_specific >= 1, got {config.n_specific}"
            )
        if config.n_specific > len(spec_set):
            raise ValidationError(
                f"n_specific={config.n_specific} exceeds the {len(spec_set)} available instructions"
            )
        active_set = spec_set.prefix(config.n_specific)

    _, height, width = image.shape
    if (width, height) != config.image_size:
        raise ValidationError(
            f"image is {width}x{height} but config expects "
            f"{config.image_size[0]}x{config.image_size[1]}"
        )
    factor = backend.downscale_factor
    if height % factor or width % factor:
        raise ValidationError(
            f"image dims {width}x{height} not divisible by backend downscale {factor}"
        )

    counting = backend if isinstance(backend, CountingBackend) else CountingBackend(backend)
    calls_before = counting.calls
    started = time.perf_counter()

    image_latent = counting.encode(image)
    latent_shape = (counting.latent_channels, height // factor, width // factor)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    z = Latent(rng.standard_normal(latent_shape).astype(np.float32))

    sampler = AncestralSampler(NoiseSchedule.linear(config.steps))
    text = _conditioning_text(strategy, instruction, active_set)
    mask_histograms: list[list[int]] = []
    mask_dumps: list[list[list[int]]] = []

    for t in sampler.timesteps():
        try:
            eps_uncond = counting.predict_noise(z, t, Conditioning.unconditional())
            eps_image = counting.predict_noise(z, t, Conditioning.image_only(image_latent))
            eps_full = counting.predict_noise(z, t, Conditioning.full(image_latent, text))
            specifics: tuple[Latent, ...] = ()
            if strategy.needs_specific_calls:
                assert active_set is not None
                specifics = tuple(
                    counting.predict_noise(z, t, Conditioning.full(image_latent, s))
                    for s in active_set.instructions
                )
            estimates = StepEstimates(eps_uncond, eps_image, eps_full, specifics)
            eps_tilde, mask = per_step_combination(strategy, estimates, config.weights)
            z = sampler.step(z, t, eps_tilde, rng)
        except Exception as exc:
            raise PipelineError(f"edit failed at step t={t}: {exc}") from exc
        if mask is not None:
            mask_histograms.append(mask.histogram(len(specifics)))
            if full_masks:
                mask_dumps.append([[int(v) for v in row] for row in mask.indices])

    edited = np.clip(counting.decode(z), 0.0, 1.0).astype(np.float32)
    elapsed = time.perf_counter() - started
    total_calls = counting.calls - calls_before

    manifest = EditManifest(
        instruction=instruction.strip(),
        strategy=strategy.value,
        weights={
            "w_image": config.weights.w_image,
            "w_text": config.weights.w_text,
            "w_specific": config.weights.w_specific,
        },
        steps=config.steps,
        seed=config.seed,
        image_size=config.image_size,
        n_specific=config.n_specific if strategy.needs_instructions else 0,
        backend_id=counting.model_id,
        specific_instructions=list(active_set.instructions) if active_set else [],
        instruction_provenance=(
            {
                "source_model": active_set.source_model,
                "prompt_digest": active_set.prompt_digest,
                "caption": active_set.caption,
            }
            if active_set
            else {}
        ),
        input_digest=_digest_array(image),
        output_digest=_digest_array(edited),
        calls_per_step=total_calls // config.steps,
        total_calls=total_calls,
        mask_histograms=mask_histograms,
        full_masks=mask_dumps,
        wall_seconds=elapsed,
    )
    return edited, manifest


def replay_manifest(
    manifest: EditManifest,
    image: np.ndarray,
    backend: DenoiserBackend | None = None,
) -> tuple[np.ndarray, EditManifest]:
    """Re-run an edit from its manifest and verify the recorded digests.

    The input image must hash to the manifest's input digest; the rerun
    must reproduce the output digest. Raises a validation error otherwise.
    """
    image = images.validate_image_array(image)
    if manifest.input_digest and _digest_array(image) != manifest.input_digest:
        raise ValidationError("input image does not match the manifest's input digest")
    if backend is None:
        if manifest.backend_id.startswith("mock-denoiser-f"):
            factor = int(manifest.backend_id.rsplit("-f", 1)[1])
            backend = create_backend("mock", factor=factor)
        else:
            raise BackendError(
                f"cannot auto-construct backend {manifest.backend_id!r}; pass one explicitly"
            )
    strategy = EditStrategy.parse(manifest.strategy)
    config = EditConfig(
        weights=GuidanceWeights(
            manifest.weights["w_image"],
            manifest.weights["w_text"],
            manifest.weights["w_specific"],
        ),
        steps=manifest.steps,
        seed=manifest.seed,
        image_size=tuple(manifest.image_size),  # type: ignore[arg-type]
        n_specific=manifest.n_specific,
    )
    spec_set = None
    if manifest.specific_instructions:
        provenance = manifest.instruction_provenance
        spec_set = SpecificInstructionSet(
            tuple(manifest.specific_instructions),
            source_model=provenance.get("source_model", ""),
            prompt_digest=provenance.get("prompt_digest", ""),
            caption=provenance.get("caption", ""),
        )
    edited, rerun = run_edit(image, manifest.instruction, spec_set, config, strategy, backend)
    if manifest.output_digest and rerun.output_digest != manifest.output_digest:
        raise ValidationError(
            "replay produced a different output digest; backend or inputs differ"
        )
    return edited, rerun
