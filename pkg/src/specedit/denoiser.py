"""Denoiser backend contract, a deterministic mock backend, and a registry.

The editing pipeline only ever talks to a ``DenoiserBackend``: one noise
prediction per conditioning per step, plus an autoencoder pair mapping
images to latents and back. Real diffusion editors plug in through the
registry by dotted factory path; the built-in ``mock`` backend is fully
deterministic, needs no weights, and is sensitive to every part of its
conditioning, which makes pipeline behavior testable end to end.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .errors import BackendError, ValidationError
from .guidance import Latent


@dataclass(frozen=True)
class Conditioning:
    """What a single noise prediction is conditioned on.

    ``image=None`` and ``instruction=None`` is the unconditional slot.
    An empty or whitespace-only instruction is normalized to absent, so
    there is exactly one representation of "no text".
    """

    image: Latent | None = None
    instruction: str | None = None

    def __post_init__(self):
        text = self.instruction
        if text is not None and text.strip() == "":
            object.__setattr__(self, "instruction", None)
        if self.image is None and self.instruction is not None:
            raise ValidationError(
                "text-conditioned predictions require the image conditioning too"
            )

    @staticmethod
    def unconditional() -> "Conditioning":
        return Conditioning(None, None)

    @staticmethod
    def image_only(image: Latent) -> "Conditioning":
        return Conditioning(image, None)

    @staticmethod
    def full(image: Latent, instruction: str) -> "Conditioning":
        if instruction.strip() == "":
            raise ValidationError("full conditioning requires a non-empty instruction")
        return Conditioning(image, instruction)


@runtime_checkable
class DenoiserBackend(Protocol):
    """Minimal surface a diffusion editor must expose to the pipeline."""

    @property
    def model_id(self) -> str: ...

    @property
    def latent_channels(self) -> int: ...

    @property
    def downscale_factor(self) -> int: ...

    def encode(self, image: np.ndarray) -> Latent: ...

    def decode(self, latent: Latent) -> np.ndarray: ...

    def predict_noise(self, z_t: Latent, timestep: int, cond: Conditioning) -> Latent: ...


def _digest_seed(*parts: bytes) -> np.random.Generator:
    digest = hashlib.sha256(b"\x00".join(parts)).digest()
    seed = int.from_bytes(digest[:8], "big")
    return np.random.Generator(np.random.PCG64(seed))


class MockAutoencoder:
    """Lossless latent codec: space-to-depth with a fixed downscale factor.

    ``encode`` moves each ``f x f`` pixel block into channels, so a
    ``[3, H, W]`` image becomes ``[3 * f * f, H / f, W / f]`` with no
    arithmetic on the values. ``decode`` inverts it exactly, which makes
    round-trips bitwise identities and keeps image-space checks sharp.
    """

    def __init__(self, factor: int = 2):
        if factor < 1:
            raise ValidationError(f"downscale factor must be >= 1, got {factor}")
        self.factor = factor

    def encode(self, image: np.ndarray) -> Latent:
        arr = np.asarray(image, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ValidationError(f"expected [3, H, W] image, got shape {arr.shape}")
        f = self.factor
        _, height, width = arr.shape
        if height % f or width % f:
            raise ValidationError(
                f"image spatial dims {height}x{width} not divisible by factor {f}"
            )
        blocks = arr.reshape(3, height // f, f, width // f, f)
        latent = blocks.transpose(0, 2, 4, 1, 3).reshape(3 * f * f, height // f, width // f)
        return Latent(latent)

    def decode(self, latent: Latent) -> np.ndarray:
        f = self.factor
        channels, height, width = latent.shape
        if channels != 3 * f * f:
            raise ValidationError(
                f"latent has {channels} channels, expected {3 * f * f} for factor {f}"
            )
        blocks = latent.data.reshape(3, f, f, height, width)
        image = blocks.transpose(0, 3, 1, 4, 2).reshape(3, height * f, width * f)
        return image


class MockDenoiser:
    """Deterministic stand-in for an instruction-conditioned diffusion editor.

    Each prediction is unit-variance noise drawn from a generator seeded by
    a digest of the model id, timestep, current latent bytes, and the full
    conditioning, so: identical inputs reproduce bitwise, and changing any
    input changes the output. Text conditioning additionally stamps an
    instruction-specific bias patch whose location and sign derive from the
    instruction text, giving different instructions spatially distinct
    effects for mask-selection behavior to act on.
    """

    def __init__(self, factor: int = 2, bias_strength: float = 2.5):
        self._codec = MockAutoencoder(factor)
        self.bias_strength = float(bias_strength)

    @property
    def model_id(self) -> str:
        return f"mock-denoiser-f{self._codec.factor}"

    @property
    def latent_channels(self) -> int:
        return 3 * self._codec.factor * self._codec.factor

    @property
    def downscale_factor(self) -> int:
        return self._codec.factor

    def encode(self, image: np.ndarray) -> Latent:
        return self._codec.encode(image)

    def decode(self, latent: Latent) -> np.ndarray:
        return self._codec.decode(latent)

    def predict_noise(self, z_t: Latent, timestep: int, cond: Conditioning) -> Latent:
        if timestep < 0:
            raise ValidationError(f"timestep must be >= 0, got {timestep}")
        image_bytes = b"-" if cond.image is None else cond.image.data.tobytes()
        text_bytes = b"-" if cond.instruction is None else cond.instruction.encode("utf-8")
        rng = _digest_seed(
            self.model_id.encode("utf-8"),
            str(timestep).encode("ascii"),
            z_t.data.tobytes(),
            image_bytes,
            text_bytes,
        )
        noise = rng.standard_normal(z_t.shape).astype(np.float32)
        if cond.image is not None:
            if cond.image.shape != z_t.shape:
                raise ValidationError(
                    f"image conditioning shape {cond.image.shape} does not match latent {z_t.shape}"
                )
            # Small structured pull toward the source content so the
            # image-conditioned estimate differs systematically, not just
            # statistically, from the unconditional one.
            noise = noise + 0.25 * np.tanh(cond.image.data)
        if cond.instruction is not None:
            noise = noise + self._instruction_bias(cond.instruction, z_t.shape)
        return Latent(noise)

    def _instruction_bias(self, instruction: str, shape: tuple[int, int, int]) -> np.ndarray:
        channels, height, width = shape
        digest = hashlib.sha256(instruction.encode("utf-8")).digest()
        top = digest[0] % max(1, height // 2)
        left = digest[1] % max(1, width // 2)
        box_h = 1 + digest[2] % max(1, height - top)
        box_w = 1 + digest[3] % max(1, width - left)
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        bias = np.zeros(shape, dtype=np.float32)
        bias[:, top : top + box_h, left : left + box_w] = sign * self.bias_strength
        return bias


class CountingBackend:
    """Wrapper that counts ``predict_noise`` calls for cost accounting."""

    def __init__(self, inner: DenoiserBackend):
        self.inner = inner
        self.calls = 0

    @property
    def model_id(self) -> str:
        return self.inner.model_id

    @property
    def latent_channels(self) -> int:
        return self.inner.latent_channels

    @property
    def downscale_factor(self) -> int:
        return self.inner.downscale_factor

    def encode(self, image: np.ndarray) -> Latent:
        return self.inner.encode(image)

    def decode(self, latent: Latent) -> np.ndarray:
        return self.inner.decode(latent)

    def predict_noise(self, z_t: Latent, timestep: int, cond: Conditioning) -> Latent:
        self.calls += 1
        return self.inner.predict_noise(z_t, timestep, cond)

    def reset(self):
        self.calls = 0


_REGISTRY: dict[str, Callable[..., DenoiserBackend]] = {}


def register_backend(name: str, factory: Callable[..., DenoiserBackend]) -> None:
    if not name:
        raise ValidationError("backend name must be non-empty")
    _REGISTRY[name] = factory


def create_backend(name: str, **kwargs) -> DenoiserBackend:
    """Instantiate a backend by registry name or dotted ``module:factory`` path.

    The dotted form lets deployments point at a real diffusion editor
    without this package importing it; the factory must return an object
    satisfying ``DenoiserBackend``.
    """
    factory = _REGISTRY.get(name)
    if factory is None and ":" in name:
        module_name, _, attr = name.partition(":")
        try:
            import importlib

            module = importlib.import_module(module_name)
            factory = getattr(module, attr)
        except (ImportError, AttributeError) as exc:
            raise BackendError(f"cannot load backend factory {name!r}: {exc}") from exc
    if factory is None:
        known = ", ".join(sorted(_REGISTRY)) or "(none)"
        raise BackendError(f"unknown backend {name!r}; registered: {known}")
    backend = factory(**kwargs)
    required = ("predict_noise", "encode", "decode", "model_id", "latent_channels")
    missing = [attr for attr in required if not hasattr(backend, attr)]
    if missing:
        raise BackendError(
            f"backend {name!r} is missing required attributes: {', '.join(missing)}"
        )
    return backend


register_backend("mock", MockDenoiser)
