"""Command-line entry points: decompose, edit, eval, bench.

Each command reads one INI config (every key optional), applies explicit
flag overrides on top, and writes all outputs under ``--out`` with stable
file names, so runs are reproducible and diffable. Offline operation is
the default: the mock denoiser backend and fixture LLM provider need no
network or weights.
"""

from __future__ import annotations

import argparse
import hashlib
import importlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import images, metrics
from .config import AppConfig, apply_overrides, load_config
from .denoiser import create_backend
from .errors import ConfigError, SpecEditError
from .pipeline import EditManifest, EditStrategy, estimate_cost, run_edit
from .specifier import (
    CaptionPair,
    FixtureProvider,
    InstructionSpecifier,
    LLMProvider,
    PromptCache,
    SpecificInstructionSet,
)


@dataclass
class RunSpec:
    """One resolved command invocation: what to run, on what, where to."""

    command: str
    config: AppConfig
    out_dir: Path
    inputs: dict[str, str] = field(default_factory=dict)

    def ensure_out_dir(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir


def _load_provider(config: AppConfig) -> LLMProvider:
    name = config.llm_provider
    if name == "fixture":
        if not config.llm_fixture_file:
            raise ConfigError(
                "the fixture LLM provider needs [llm] fixture_file pointing at a "
                "JSON file of prompt (or prompt digest) to response"
            )
        path = Path(config.llm_fixture_file)
        if not path.exists():
            raise ConfigError(f"fixture file not found: {path}")
        table = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(table, dict):
            raise ConfigError("fixture file must hold a JSON object of prompt to response")

        def lookup(prompt: str) -> str:
            if prompt in table:
                return table[prompt]
            digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
            if digest in table:
                return table[digest]
            raise ConfigError(
                f"fixture file has no entry for this prompt (digest {digest})"
            )

        return FixtureProvider(lookup, model_id=config.llm_model_id)
    if ":" in name:
        module_name, _, attr = name.partition(":")
        try:
            module = importlib.import_module(module_name)
            factory = getattr(module, attr)
        except (ImportError, AttributeError) as exc:
            raise ConfigError(f"cannot load LLM provider {name!r}: {exc}") from exc
        return factory()
    raise ConfigError(f"unknown LLM provider {name!r}; use 'fixture' or 'module:factory'")


def _build_specifier(config: AppConfig) -> InstructionSpecifier:
    provider = _load_provider(config)
    cache = PromptCache(config.cache_dir) if config.cache_dir else None
    return InstructionSpecifier(provider, cache=cache, word_budget=config.word_budget)


def _backend(config: AppConfig):
    options = {}
    for key, value in config.backend_options.items():
        try:
            options[key] = int(value)
        except ValueError:
            options[key] = value
    return create_backend(config.backend_name, **options)


def _config_from_args(args: argparse.Namespace) -> AppConfig:
    config = load_config(args.config)
    return apply_overrides(
        config,
        seed=getattr(args, "seed", None),
        steps=getattr(args, "steps", None),
        n_specific=getattr(args, "n", None),
        backend=getattr(args, "backend", None),
        image_size=getattr(args, "size", None),
        w_image=getattr(args, "w_image", None),
        w_text=getattr(args, "w_text", None),
        w_specific=getattr(args, "w_specific", None),
    )


def cmd_decompose(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    spec = RunSpec("decompose", config, Path(args.out))
    specifier = _build_specifier(config)
    result = specifier.decompose(args.caption, args.instruction, config.n_specific)
    for instruction in result.instructions:
        print(instruction)
    out_dir = spec.ensure_out_dir()
    record = {
        "instruction": args.instruction,
        "caption": args.caption,
        "n": config.n_specific,
        "instructions": list(result.instructions),
        "source_model": result.source_model,
        "prompt_digest": result.prompt_digest,
    }
    record_path = out_dir / "decomposition.json"
    record_path.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    return 0


def _resolve_instructions(
    args: argparse.Namespace, config: AppConfig, strategy: EditStrategy
) -> SpecificInstructionSet | None:
    if not strategy.needs_instructions:
        return None
    if args.specific:
        return SpecificInstructionSet(tuple(args.specific), source_model="cli")
    if args.caption is None:
        raise ConfigError(
            "this strategy needs specific instructions: pass --specific (repeatable) "
            "or --caption to decompose via the configured LLM provider"
        )
    specifier = _build_specifier(config)
    return specifier.decompose(args.caption, args.instruction, config.n_specific)


def cmd_edit(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    spec = RunSpec("edit", config, Path(args.out))
    strategy = EditStrategy.parse(args.strategy)
    image = images.load_image(args.image)
    _, height, width = image.shape
    if args.size is None and (width, height) != config.image_size:
        # No explicit size requested: run at the image's own dims.
        config = apply_overrides(config, image_size=f"{width}x{height}")
    elif (width, height) != config.image_size:
        image = images.resize_image(image, config.image_size)

    spec_set = _resolve_instructions(args, config, strategy)
    if spec_set is not None and config.n_specific > len(spec_set):
        config = apply_overrides(config, n_specific=len(spec_set))
    backend = _backend(config)
    edited, manifest = run_edit(
        image,
        args.instruction,
        spec_set,
        config.edit_config(),
        strategy,
        backend,
        full_masks=args.full_masks,
    )
    out_dir = spec.ensure_out_dir()
    output_path = images.save_image(edited, out_dir / "edited.png")
    manifest.input_path = str(Path(args.image).resolve())
    manifest.output_path = str(output_path.resolve())
    manifest_path = manifest.save(out_dir / "manifest.json")
    print(manifest_path)
    return 0


def _eval_one(
    report: metrics.MetricReport,
    provider: metrics.EmbeddingProvider,
    original,
    edited,
    captions,
    sample_id: str,
) -> None:
    report.add(metrics.evaluate_edit(original, edited, captions, provider, sample_id=sample_id))


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    spec = RunSpec("eval", config, Path(args.out))
    if args.manifest:
        manifest = EditManifest.load(args.manifest)
        original_path = args.original or manifest.input_path
        edited_path = args.edited or manifest.output_path
        if not original_path or not edited_path:
            raise ConfigError("manifest lacks image paths; pass --original/--edited")
    else:
        if not args.original or not (args.edited or args.edited_dir):
            raise ConfigError("eval needs --original plus --edited or --edited-dir")
        original_path = args.original
        edited_path = args.edited

    captions = CaptionPair(
        args.initial_caption, args.final_caption, word_budget=config.word_budget
    )
    provider = metrics.HashEmbeddingProvider(config.embedding_dim)
    original = images.load_image(original_path)
    report = metrics.MetricReport()
    if args.edited_dir:
        edited_paths = sorted(Path(args.edited_dir).glob("*.png"))
        if not edited_paths:
            raise ConfigError(f"no .png files under {args.edited_dir}")
        for path in edited_paths:
            _eval_one(report, provider, original, images.load_image(path), captions, path.name)
    else:
        _eval_one(
            report, provider, original, images.load_image(edited_path), captions,
            Path(edited_path).name,
        )
    rendered = report.to_json()
    print(rendered)
    out_dir = spec.ensure_out_dir()
    (out_dir / "metrics.json").write_text(rendered + "\n", encoding="utf-8")
    return 0


def _parse_n_range(text: str) -> list[int]:
    raw = text.strip()
    try:
        if ":" in raw:
            lo_text, hi_text = raw.split(":", 1)
            lo, hi = int(lo_text), int(hi_text)
            if hi < lo:
                raise ValueError
            values = list(range(lo, hi + 1))
        else:
            values = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse n range {text!r}; use LO:HI or a comma list") from None
    if not values or any(v < 0 for v in values):
        raise ConfigError(f"n range must be non-negative and non-empty, got {text!r}")
    return values


def cmd_bench(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    spec = RunSpec("bench", config, Path(args.out))
    n_values = _parse_n_range(args.n_range)
    width, height = config.image_size
    image = images.synthetic_image(width, height, seed=config.seed)
    rows = []
    print("n\tstrategy\tcalls\texpected\tseconds")
    for n in n_values:
        strategy = EditStrategy.BASELINE if n == 0 else EditStrategy.SANE
        spec_set = None
        if n > 0:
            spec_set = SpecificInstructionSet(
                tuple(f"benchmark instruction {i + 1}" for i in range(n)),
                source_model="bench",
            )
        run_config = apply_overrides(config, n_specific=n if n > 0 else None)
        backend = _backend(config)
        started = time.perf_counter()
        _, manifest = run_edit(
            image, "benchmark edit", spec_set, run_config.edit_config(), strategy, backend
        )
        elapsed = time.perf_counter() - started
        expected = estimate_cost(n, config.steps, strategy)
        rows.append(
            {
                "n": n,
                "strategy": strategy.value,
                "calls": manifest.total_calls,
                "expected_calls": expected,
                "seconds": elapsed,
            }
        )
        print(f"{n}\t{strategy.value}\t{manifest.total_calls}\t{expected}\t{elapsed:.3f}")
    out_dir = spec.ensure_out_dir()
    (out_dir / "bench.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specedit",
        description=(
            "Zero-shot editing with ambiguous instructions: decompose them into "
            "specific ones and inject those into diffusion guidance."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", default=None, help="INI config path")
        p.add_argument("--out", default="specedit-out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--backend", default=None, help="denoiser backend name")

    p_dec = sub.add_parser("decompose", help="turn an ambiguous instruction into specific ones")
    common(p_dec)
    p_dec.add_argument("--instruction", required=True)
    p_dec.add_argument("--caption", required=True, help="caption describing the input scene")
    p_dec.add_argument("--n", type=_positive_int, default=None, help="instruction count")
    p_dec.set_defaults(handler=cmd_decompose)

    p_edit = sub.add_parser("edit", help="run one edit end to end")
    common(p_edit)
    p_edit.add_argument("--image", required=True, help="input image path")
    p_edit.add_argument("--instruction", required=True)
    p_edit.add_argument("--strategy", default="sane")
    p_edit.add_argument("--n", type=_positive_int, default=None)
    p_edit.add_argument("--steps", type=_positive_int, default=None)
    p_edit.add_argument("--size", default=None, help="run size WxH (resizes the input)")
    p_edit.add_argument("--caption", default=None, help="scene caption for LLM decomposition")
    p_edit.add_argument(
        "--specific", action="append", default=[],
        help="specific instruction (repeatable); bypasses the LLM",
    )
    p_edit.add_argument("--w-image", type=float, default=None, dest="w_image")
    p_edit.add_argument("--w-text", type=float, default=None, dest="w_text")
    p_edit.add_argument("--w-specific", type=float, default=None, dest="w_specific")
    p_edit.add_argument("--full-masks", action="store_true", dest="full_masks")
    p_edit.set_defaults(handler=cmd_edit)

    p_eval = sub.add_parser("eval", help="compute edit-quality metrics")
    common(p_eval)
    p_eval.add_argument("--manifest", default=None)
    p_eval.add_argument("--original", default=None)
    p_eval.add_argument("--edited", default=None)
    p_eval.add_argument("--edited-dir", default=None, dest="edited_dir")
    p_eval.add_argument("--initial-caption", required=True, dest="initial_caption")
    p_eval.add_argument("--final-caption", required=True, dest="final_caption")
    p_eval.set_defaults(handler=cmd_eval)

    p_bench = sub.add_parser("bench", help="measure denoiser-call cost vs instruction count")
    common(p_bench)
    p_bench.add_argument("--n-range", default="0:3", dest="n_range", help="LO:HI or comma list")
    p_bench.add_argument("--steps", type=_positive_int, default=None)
    p_bench.add_argument("--size", default=None, help="image size WxH")
    p_bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except SpecEditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
