"""Canonical LLM prompt templates and their rendering helpers.

The four task prompts (instruction decomposition, caption-pair generation,
pairwise preference judging, ambiguity classification) are stored here as
plain-text constants with ``<angle-bracket>`` placeholders. They are the
single source of truth: rendering only substitutes placeholders, and the
test suite freezes each template's digest so any wording drift fails
loudly. Typographic quotes from the source material are normalized to
ASCII; everything else, including spelling quirks in the in-context
examples, is kept exactly.
"""

from __future__ import annotations

import hashlib

from .errors import ValidationError

DECOMPOSITION_TEMPLATE = (
    "You are a helpful assistant for image editing. I will provide you with a "
    "caption that describes an image, and an editing instruction that represents "
    "an ambiguous modification of the scene. Your task is to propose specific "
    "modifications. You can ask to add or replace elements in the scene, "
    "proposing consistent modification that agree with the ambiguous instruction."
    "\n\n"
    "Be concise and output your instructions without further considerations or "
    "reasoning, one local modification per line. Do not output any other text "
    'than the suggested outputs, do not write "suggested output:".'
    "\n\n"
    "I am going to provide some examples now.\n"
    "Caption: a photo of a urban scenario, with cars.\n"
    "ambiguous instruction: make the scene vintage.\n"
    "Suggested output: replace the cars with old cars\n"
    "Caption: a photo of a dog running on the grass.\n"
    "ambiguous instruction: make it look funny.\n"
    "Suggested output: add a hat to the dog."
    "\n\n"
    "The main subject of the scene must stay the same. For instance, if the "
    "photo is describing a cat as the main subject, you cannot replace the cat "
    "with another animal. You should NEVER remove elements. Only propose "
    "instructions targeting elements that appear in the caption, without "
    "imagining anything else."
    "\n\n"
    "Now, provide <N> outputs for the following caption and subjective "
    "instruction. Caption: <caption> ambiguous instruction <c>"
)

CAPTIONING_TEMPLATE = (
    "I am going to provide an input image and an editing instruction. You "
    "should propose 1) a caption that describes accurately the input image, max "
    "10 words, focusing only on visual content 2) a caption that encompasses "
    "how the image should look like after applying the instruction. The "
    "instruction is: <c>. The image is <x>."
    "\n\n"
    "Try to keep these captions as compact as possible. The captions should be "
    "as similar as possible to each other."
    "\n\n"
    "You should reply following the format:\n"
    '1. "caption 1"\n'
    '2. "caption 2"\n'
    "Just reply with the captions without reasoning or considerations."
)

PREFERENCE_TEMPLATE = (
    "I'm going to provide three pictures and one editing textual instruction. "
    "The first is an original picture. The second and the third pictures are "
    "edited pictures, where image editing methods are applying transformations "
    "to the original picture by following the instruction. The image editing "
    "methods identifiers are A and B. You should tell me what is the editing "
    "method that produces the best edited image. For your evaluation, you "
    "should balance how much the edited image respects the instruction, the "
    "quality and realism of the generated image, and the content preservation "
    "from the original picture."
    "\n\n"
    "Reply with A or B only without further text. The images are ordered in "
    "this way: original image, the image of method A, the image of method B."
    "\n\n"
    "Now, provide your answer for the input images and the instruction: <c> "
    "images: <x>, <x_a>, <x_b>."
)

SELECTION_TEMPLATE = (
    "You are a helpful assistant for image editing. I will provide you with an "
    "editing instruction that requires certain modification of the scene in "
    "the image. Your task is to decide whether this instruction represents an "
    "abstract instruction or a specific instruction."
    "\n\n"
    "Here are some examples:\n"
    "ambiguous instruction: 'Change the image so it apears old and musty.'\n"
    "ambiguous instruction: 'Make it a snowy day.'\n"
    "ambiguous instruction: 'Change the image so the players look like zombies.'\n"
    "Specific instruction: 'Add the word 'tray' in white to the bottom of the image.'\n"
    "Specific instruction: 'Change the sheep into a calf.'\n"
    "Specific instruction: 'Draw this in an oil painting style.'"
    "\n\n"
    "Now, tell me if the following instruction is ambiguous or specific. The "
    "instruction is: <c>."
    "\n\n"
    "Before answering, motivate your decision by reasoning about the "
    "properties of this instruction."
    "\n\n"
    "Your response should start with either 'Response: ambiguous.' or "
    "'Response: specific.'"
)

TEMPLATES: dict[str, str] = {
    "decomposition": DECOMPOSITION_TEMPLATE,
    "captioning": CAPTIONING_TEMPLATE,
    "preference": PREFERENCE_TEMPLATE,
    "selection": SELECTION_TEMPLATE,
}


def template_digest(name: str) -> str:
    """Hex digest of a template's exact bytes, for drift detection."""
    try:
        text = TEMPLATES[name]
    except KeyError:
        raise ValidationError(f"unknown template {name!r}") from None
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _fill(template: str, substitutions: dict[str, str]) -> str:
    rendered = template
    for placeholder, value in substitutions.items():
        if placeholder not in rendered:
            raise ValidationError(f"placeholder {placeholder!r} missing from template")
        rendered = rendered.replace(placeholder, value)
    return rendered


def render_decomposition(caption: str, instruction: str, n: int) -> str:
    if n < 1:
        raise ValidationError(f"instruction count must be >= 1, got {n}")
    return _fill(
        DECOMPOSITION_TEMPLATE,
        {"<caption>": caption, "<c>": instruction, "<N>": str(n)},
    )


def render_captioning(instruction: str, image_ref: str) -> str:
    return _fill(CAPTIONING_TEMPLATE, {"<c>": instruction, "<x>": image_ref})


def render_preference(instruction: str, image_ref: str, image_a_ref: str, image_b_ref: str) -> str:
    return _fill(
        PREFERENCE_TEMPLATE,
        {"<c>": instruction, "<x>": image_ref, "<x_a>": image_a_ref, "<x_b>": image_b_ref},
    )


def render_selection(instruction: str) -> str:
    return _fill(SELECTION_TEMPLATE, {"<c>": instruction})
