"""INI configuration: one file with [weights], [sampler], [backend], [llm].

Every key has a default matching the reference hyperparameters, so an
empty or absent file yields a fully working mock-backend setup. Command
line overrides always win over file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .guidance import GuidanceWeights
from .pipeline import EditConfig

DEFAULT_W_IMAGE = 1.5
DEFAULT_W_TEXT = 7.0
DEFAULT_W_SPECIFIC = 7.0
DEFAULT_STEPS = 30
DEFAULT_IMAGE_SIZE = (512, 512)
DEFAULT_N_SPECIFIC = 3


def parse_size(text: str) -> tuple[int, int]:
    """Parse "WxH" (or a single number for square) into (width, height)."""
    raw = text.strip().lower()
    try:
        if "x" in raw:
            w_text, h_text = raw.split("x", 1)
            size = (int(w_text), int(h_text))
        else:
            side = int(raw)
            size = (side, side)
    except ValueError:
        raise ConfigError(f"cannot parse image size {text!r}; expected WxH") from None
    if size[0] < 1 or size[1] < 1:
        raise ConfigError(f"image size must be positive, got {text!r}")
    return size


@dataclass
class AppConfig:
    """Parsed configuration for all commands."""

    w_image: float = DEFAULT_W_IMAGE
    w_text: float = DEFAULT_W_TEXT
    w_specific: float = DEFAULT_W_SPECIFIC
    steps: int = DEFAULT_STEPS
    seed: int = 0
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    n_specific: int = DEFAULT_N_SPECIFIC
    backend_name: str = "mock"
    backend_options: dict[str, str] = field(default_factory=dict)
    llm_provider: str = "fixture"
    llm_model_id: str = "fixture"
    llm_fixture_file: str = ""
    cache_dir: str = ""
    word_budget: int = 10
    embedding_dim: int = 64

    @property
    def weights(self) -> GuidanceWeights:
        return GuidanceWeights(self.w_image, self.w_text, self.w_specific)

    def edit_config(self) -> EditConfig:
        return EditConfig(
            weights=self.weights,
            steps=self.steps,
            seed=self.seed,
            image_size=self.image_size,
            n_specific=self.n_specific,
        )


def load_config(path: str | Path | None = None) -> AppConfig:
    """Read an INI file into an AppConfig; a missing path means defaults."""
    config = AppConfig()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    known_sections = {"weights", "sampler", "backend", "llm"}
    unknown = set(parser.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    try:
        if parser.has_section("weights"):
            section = parser["weights"]
            config.w_image = section.getfloat("w_image", config.w_image)
            config.w_text = section.getfloat("w_text", config.w_text)
            config.w_specific = section.getfloat("w_specific", config.w_specific)
        if parser.has_section("sampler"):
            section = parser["sampler"]
            config.steps = section.getint("steps", config.steps)
            config.seed = section.getint("seed", config.seed)
            if section.get("image_size"):
                config.image_size = parse_size(section["image_size"])
            config.n_specific = section.getint("n_specific", config.n_specific)
        if parser.has_section("backend"):
            section = parser["backend"]
            config.backend_name = section.get("name", config.backend_name)
            config.backend_options = {
                key: value for key, value in section.items() if key != "name"
            }
        if parser.has_section("llm"):
            section = parser["llm"]
            config.llm_provider = section.get("provider", config.llm_provider)
            config.llm_model_id = section.get("model_id", config.llm_model_id)
            config.llm_fixture_file = section.get("fixture_file", config.llm_fixture_file)
            config.cache_dir = section.get("cache_dir", config.cache_dir)
            config.word_budget = section.getint("word_budget", config.word_budget)
            config.embedding_dim = section.getint("embedding_dim", config.embedding_dim)
    except ValueError as exc:
        raise ConfigError(f"invalid value in config {path}: {exc}") from exc
    return config


def apply_overrides(
    config: AppConfig,
    *,
    seed: int | None = None,
    steps: int | None = None,
    n_specific: int | None = None,
    backend: str | None = None,
    image_size: str | None = None,
    w_image: float | None = None,
    w_text: float | None = None,
    w_specific: float | None = None,
) -> AppConfig:
    """Return a copy with any provided command-line overrides applied."""
    updates: dict = {}
    if seed is not None:
        updates["seed"] = seed
    if steps is not None:
        updates["steps"] = steps
    if n_specific is not None:
        updates["n_specific"] = n_specific
    if backend is not None:
        updates["backend_name"] = backend
    if image_size is not None:
        updates["image_size"] = parse_size(image_size)
    if w_image is not None:
        updates["w_image"] = w_image
    if w_text is not None:
        updates["w_text"] = w_text
    if w_specific is not None:
        updates["w_specific"] = w_specific
    return replace(config, **updates)
