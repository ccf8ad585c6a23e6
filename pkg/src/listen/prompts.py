"""Five-part prompt assembly and rendering of items for the preference oracle."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .model import Dataset, Item

SECTION_SEPARATOR = "\n\n"


@dataclass(frozen=True)
class PromptParts:
    persona: str
    metric_definitions: str
    user_priorities: str
    solutions: str
    format_instructions: str

    def ablated(self) -> PromptParts:
        """Base-prompt variant: same parts with the user priorities removed."""
        return replace(self, user_priorities="")


def build_prompt(parts: PromptParts) -> str:
    """Concatenate the non-empty parts in fixed order."""
    sections = (
        parts.persona,
        parts.metric_definitions,
        parts.user_priorities,
        parts.solutions,
        parts.format_instructions,
    )
    return SECTION_SEPARATOR.join(s.strip("\n") for s in sections if s.strip())


def candidate_label(index: int) -> str:
    """0 -> A, 25 -> Z, 26 -> AA, 27 -> AB, ..."""
    if index < 0:
        raise ValueError("label index must be non-negative")
    label = ""
    n = index + 1
    while n:
        n, rem = divmod(n - 1, 26)
        label = chr(ord("A") + rem) + label
    return label


def label_index(label: str) -> int:
    if not label or not label.isalpha() or not label.isupper():
        raise ValueError(f"not a candidate label: {label!r}")
    n = 0
    for ch in label:
        n = n * 26 + (ord(ch) - ord("A") + 1)
    return n - 1


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_definitions(dataset: Dataset) -> str:
    lines = ["Use these definitions:"]
    for attr in dataset.schema:
        parts = [attr.description or attr.name]
        if attr.units:
            parts.append(f"units: {attr.units}")
        if attr.kind == "numerical":
            parts.append("lower is better" if attr.direction == "minimize" else "higher is better")
        elif attr.kind == "textual":
            parts.append("non-metric")
        lines.append(f"- {attr.name}: " + "; ".join(parts))
    return "\n".join(lines)


def render_item(dataset: Dataset, item: Item, indent: str = "  ") -> str:
    """All attributes of `item`, unnormalized, with units."""
    lines = []
    for attr in dataset.schema:
        if attr.kind == "numerical":
            value = item.numerical.get(attr.name)
        elif attr.kind == "categorical":
            value = item.categorical.get(attr.name)
        else:
            value = item.textual.get(attr.name)
        if value is None:
            continue
        text = _fmt(value)
        if attr.units and attr.kind == "numerical":
            text = f"{text} {attr.units}"
        lines.append(f"{indent}- {attr.name}: {text}")
    return "\n".join(lines)


def render_candidates(dataset: Dataset, items: Sequence[Item]) -> str:
    blocks = ["Candidate solutions:"]
    for i, item in enumerate(items):
        blocks.append(f"Option {candidate_label(i)}:\n{render_item(dataset, item)}")
    return "\n".join(blocks)


def render_refinement(dataset: Dataset, weights: Mapping[str, float], current: Item) -> str:
    return (
        "Current weights (applied to features scaled to [0, 1]):\n"
        + json.dumps(dict(weights), indent=2)
        + "\n\nBest solution under these weights (original units):\n"
        + render_item(dataset, current)
        + "\n\nCritique this solution against the priorities above and adjust the weights so the"
        " scoring better reflects them."
    )


def weight_format_instructions(layout: Sequence[str]) -> str:
    keys = ", ".join(f'"{k}"' for k in layout)
    return (
        "Output format: return only a JSON object mapping each of the following feature names to a"
        " weight between -1 and 1. Features are scaled to [0, 1] across all solutions; a positive"
        " weight prefers higher values and a negative weight prefers lower values. One-hot features"
        " look like \"attribute=value\".\n"
        f"Features: [{keys}]"
    )


def champion_format_instructions(n_candidates: int) -> str:
    last = candidate_label(n_candidates - 1)
    return (
        f"Identify the single best solution among options A to {last}. End your answer with a line in"
        " the exact format: FINAL A (B, C ...) where the first label is the best option and the"
        " optional parenthesised labels list the rest in order of preference."
    )


def weight_prompt_parts(
    dataset: Dataset,
    layout: Sequence[str],
    *,
    current: Item | None = None,
    previous_weights: Mapping[str, float] | None = None,
    ablation: bool = False,
) -> PromptParts:
    """Initialization prompt when `current` is None, refinement prompt otherwise."""
    if current is None:
        solutions = ""
    else:
        solutions = render_refinement(dataset, previous_weights or {}, current)
    parts = PromptParts(
        persona=dataset.persona,
        metric_definitions=render_definitions(dataset),
        user_priorities=dataset.utterance,
        solutions=solutions,
        format_instructions=weight_format_instructions(layout),
    )
    return parts.ablated() if ablation else parts


def champion_prompt_parts(dataset: Dataset, candidates: Sequence[Item], *, ablation: bool = False) -> PromptParts:
    parts = PromptParts(
        persona=dataset.persona,
        metric_definitions=render_definitions(dataset),
        user_priorities=dataset.utterance,
        solutions=render_candidates(dataset, candidates),
        format_instructions=champion_format_instructions(len(candidates)),
    )
    return parts.ablated() if ablation else parts
