"""Noise-estimate combination algebra for instruction-guided diffusion editing.

All functions here are pure and stateless: they take noise estimates as
``Latent`` values and return new ones, with no model execution, scheduler
math, or I/O. The central op is :func:`sane_combine`, which injects a set
of specific-instruction noise estimates into standard three-term
classifier-free guidance through a per-location argmax selection mask.

Conventions:
  - A ``Latent`` wraps a float array of shape ``[channels, height, width]``.
  - Selection happens per spatial location: all channels at one location
    come from the same winning instruction, which keeps the selected noise
    internally coherent. Saliences reduce over channels by mean before the
    argmax (see ``channel_salience``).
  - Argmax ties resolve to the lowest instruction index.
  - All algebra runs in float32 at minimum; float64 inputs stay float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeMismatchError, ValidationError


@dataclass(frozen=True)
class Latent:
    """A multi-channel spatial array: noisy latents, encoded images, and
    noise estimates all use this container.

    Invariants enforced at construction: 3-D ``[C, H, W]`` with every dim
    at least 1, floating dtype (at least 32-bit), and all entries finite.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        elif arr.dtype.itemsize < 4:
            arr = arr.astype(np.float32)
        if arr.ndim != 3:
            raise ValidationError(
                f"latent must be 3-D [channels, height, width], got shape {arr.shape}"
            )
        if min(arr.shape) < 1:
            raise ValidationError(f"latent dims must all be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("latent contains non-finite entries")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def allclose(self, other: "Latent", rtol: float = 1e-6, atol: float = 0.0) -> bool:
        return bool(np.allclose(self.data, other.data, rtol=rtol, atol=atol))


@dataclass(frozen=True)
class GuidanceWeights:
    """Scalar strengths for the three guidance terms.

    ``w_image`` scales the image-conditioning term, ``w_text`` the
    original-instruction term, ``w_specific`` the specific-instruction
    term. Negative values are allowed (weights may be swept); only
    non-finite values are rejected.
    """

    w_image: float
    w_text: float
    w_specific: float = 0.0

    def __post_init__(self):
        for name in ("w_image", "w_text", "w_specific"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValidationError(f"guidance weight {name} must be finite, got {value!r}")

    def with_text_weight(self, w_text: float) -> "GuidanceWeights":
        return GuidanceWeights(self.w_image, w_text, self.w_specific)


@dataclass(frozen=True)
class SelectionMask:
    """Per-spatial-location winning instruction indices, shape ``[H, W]``."""

    indices: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.indices)
        if arr.dtype.kind not in "iu":
            raise ValidationError(f"selection mask must be integer-typed, got {arr.dtype}")
        if arr.ndim != 2:
            raise ValidationError(f"selection mask must be 2-D [height, width], got {arr.shape}")
        if arr.size and arr.min() < 0:
            raise ValidationError("selection mask contains negative indices")
        object.__setattr__(self, "indices", arr.astype(np.int64, copy=False))

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return self.indices.shape  # type: ignore[return-value]

    def histogram(self, n: int) -> list[int]:
        """Count of locations won by each of ``n`` instructions."""
        counts = np.bincount(self.indices.ravel(), minlength=n)
        return [int(c) for c in counts]


def _require_same_shape(*latents: Latent) -> tuple[int, int, int]:
    shape = latents[0].shape
    for lat in latents[1:]:
        if lat.shape != shape:
            raise ShapeMismatchError(f"latent shapes differ: {shape} vs {lat.shape}")
    return shape


def cfg_combine(
    eps_uncond: Latent,
    eps_image: Latent,
    eps_full: Latent,
    weights: GuidanceWeights,
) -> Latent:
    """Three-term classifier-free guidance.

    Returns ``eps_uncond + w_image * (eps_image - eps_uncond)
    + w_text * (eps_full - eps_uncond_on_image)`` elementwise, where
    ``eps_image`` is the estimate conditioned on the image only and
    ``eps_full`` the estimate conditioned on image and instruction.
    """
    _require_same_shape(eps_uncond, eps_image, eps_full)
    u, i, f = eps_uncond.data, eps_image.data, eps_full.data
    combined = u + weights.w_image * (i - u) + weights.w_text * (f - i)
    return Latent(combined)


def specific_delta(eps_specific: Latent, eps_image: Latent) -> Latent:
    """Elementwise absolute difference between a specific-instruction
    estimate and the image-only estimate."""
    _require_same_shape(eps_specific, eps_image)
    return Latent(np.abs(eps_specific.data - eps_image.data))


def channel_salience(delta: Latent) -> np.ndarray:
    """Reduce a per-channel delta to one scalar per spatial location.

    Uses the channel mean, so the downstream argmax compares instructions
    by their average per-location effect rather than by any single channel.
    """
    return delta.data.mean(axis=0)


def build_selection_mask(saliences: Sequence[np.ndarray]) -> SelectionMask:
    """Per-location argmax over a list of ``[H, W]`` salience maps.

    Ties resolve to the lowest list index, which makes the mask
    deterministic and stable under reordering of equal candidates.
    """
    if len(saliences) == 0:
        raise ValidationError("cannot build a selection mask from zero salience maps")
    arrays = [np.asarray(s) for s in saliences]
    shape = arrays[0].shape
    for arr in arrays[1:]:
        if arr.shape != shape:
            raise ShapeMismatchError(f"salience shapes differ: {shape} vs {arr.shape}")
    stacked = np.stack(arrays, axis=0)
    # np.argmax returns the first maximal index, i.e. lowest-index tie-break.
    return SelectionMask(np.argmax(stacked, axis=0))


def aggregate_by_mask(noises: Sequence[Latent], mask: SelectionMask) -> Latent:
    """Compose noise estimates by copying, at each spatial location, all
    channels from the estimate whose index the mask selects."""
    if len(noises) == 0:
        raise ValidationError("cannot aggregate zero noise estimates")
    shape = _require_same_shape(*noises)
    channels, height, width = shape
    if mask.spatial_shape != (height, width):
        raise ShapeMismatchError(
            f"mask spatial shape {mask.spatial_shape} does not match latents {(height, width)}"
        )
    if int(mask.indices.max()) >= len(noises):
        raise ValidationError(
            f"mask selects index {int(mask.indices.max())} but only {len(noises)} noises given"
        )
    stacked = np.stack([n.data for n in noises], axis=0)  # [N, C, H, W]
    picker = np.broadcast_to(mask.indices[None, None, :, :], (1, channels, height, width))
    selected = np.take_along_axis(stacked, picker, axis=0)[0]
    return Latent(selected)


def specific_guidance_term(eps_bar: Latent, eps_image: Latent, w_specific: float) -> Latent:
    """The extra guidance component: ``w_specific * (eps_bar - eps_image)``."""
    _require_same_shape(eps_bar, eps_image)
    if not np.isfinite(w_specific):
        raise ValidationError(f"w_specific must be finite, got {w_specific!r}")
    return Latent(w_specific * (eps_bar.data - eps_image.data))


def sane_combine(
    eps_uncond: Latent,
    eps_image: Latent,
    eps_full: Latent,
    eps_specifics: Sequence[Latent],
    weights: GuidanceWeights,
) -> tuple[Latent, SelectionMask]:
    """Full guided estimate with masked specific-instruction aggregation.

    Pipeline: per-instruction absolute deltas against the image-only
    estimate, channel-mean salience, per-location argmax mask, mask-gated
    aggregation, then the weighted specific term added on top of standard
    three-term guidance. The mask is returned alongside the estimate so
    callers can log which instruction governed each region.
    """
    if len(eps_specifics) == 0:
        raise ValidationError(
            "sane_combine requires at least one specific-instruction estimate; "
            "use plain cfg_combine for the no-instruction case"
        )
    _require_same_shape(eps_uncond, eps_image, eps_full, *eps_specifics)
    deltas = [specific_delta(eps, eps_image) for eps in eps_specifics]
    saliences = [channel_salience(d) for d in deltas]
    mask = build_selection_mask(saliences)
    eps_bar = aggregate_by_mask(eps_specifics, mask)
    term = specific_guidance_term(eps_bar, eps_image, weights.w_specific)
    base = cfg_combine(eps_uncond, eps_image, eps_full, weights)
    return Latent(base.data + term.data), mask


def average_aggregate(noises: Sequence[Latent]) -> Latent:
    """Elementwise arithmetic mean of noise estimates (ablation variant
    of the masked aggregation)."""
    if len(noises) == 0:
        raise ValidationError("cannot average zero noise estimates")
    _require_same_shape(*noises)
    stacked = np.stack([n.data for n in noises], axis=0)
    return Latent(stacked.mean(axis=0))


def composable_combine(
    eps_uncond: Latent,
    eps_image: Latent,
    eps_full: Latent,
    eps_specifics: Sequence[Latent],
    weights: GuidanceWeights,
) -> Latent:
    """Composition baseline: every specific delta is added, unmasked.

    Returns the three-term guidance plus ``sum_i w_specific *
    (eps_specifics[i] - eps_image)``. One shared ``w_specific`` is applied
    to every instruction.
    """
    if len(eps_specifics) == 0:
        raise ValidationError("composable_combine requires at least one specific estimate")
    _require_same_shape(eps_uncond, eps_image, eps_full, *eps_specifics)
    base = cfg_combine(eps_uncond, eps_image, eps_full, weights)
    total = base.data.copy()
    for eps in eps_specifics:
        total = total + weights.w_specific * (eps.data - eps_image.data)
    return Latent(total)
