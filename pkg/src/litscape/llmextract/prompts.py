"""Versioned prompt templates shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from string import Template

EXCERPT_CHARS = 12_000

LABEL_TEMPLATE = "label_cluster.v1"
EXTRACT_TEMPLATE = "extract_fields.v1"
NORMALIZE_TEMPLATE = "normalize_label.v1"
PRIMER_TEMPLATE = "lca_primer.v1"
SYSTEM_TEMPLATE = "system.v1"


class PromptBudgetError(ValueError):
    pass


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Template body with its ``#`` header lines removed."""
    text = resources.files("litscape").joinpath(f"prompts/{name}.txt").read_text(encoding="utf-8")
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return "\n".join(body).strip("\n")


def render(name: str, **values) -> str:
    return Template(load_template(name)).substitute(**values)


def truncate_at_whitespace(text: str, limit: int = EXCERPT_CHARS) -> str:
    """First ``limit`` characters, cut back to the last whitespace so no word is split."""
    if len(text) <= limit:
        return text
    if text[limit].isspace():
        return text[:limit].rstrip()
    head = text[:limit]
    cut = max(head.rfind(" "), head.rfind("\n"), head.rfind("\t"))
    if cut <= 0:
        return head
    return head[:cut].rstrip()


def check_budget(messages, budget: int) -> None:
    used = sum(len(m["content"]) for m in messages)
    if used > budget:
        raise PromptBudgetError(f"prompt is {used} characters, budget is {budget}")
