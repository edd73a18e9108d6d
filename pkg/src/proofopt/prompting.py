"""Prompt template loading and rendering.

Templates are plain text files with {name} placeholders. Rendering uses
literal replacement rather than str.format because Lean sources are full of
braces.
"""

from __future__ import annotations

import re
from importlib import resources

from .errors import TemplateMissing

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")


def load_template(template_id: str) -> str:
    try:
        return (resources.files("proofopt") / "prompts" / f"{template_id}.txt").read_text(
            encoding="utf-8"
        )
    except (FileNotFoundError, OSError) as exc:
        raise TemplateMissing(f"no prompt template named {template_id!r}") from exc


def render(template_id: str, **fields: str) -> str:
    text = load_template(template_id)
    for name, value in fields.items():
        text = text.replace("{" + name + "}", value)
    leftover = _PLACEHOLDER.findall(text)
    # Placeholders surviving substitution mean the caller passed the wrong
    # field set for this template.
    unfilled = [name for name in leftover if name in _known_placeholders(template_id)]
    if unfilled:
        raise TemplateMissing(f"template {template_id!r} is missing fields: {unfilled}")
    return text


def _known_placeholders(template_id: str) -> set[str]:
    return set(_PLACEHOLDER.findall(load_template(template_id)))
