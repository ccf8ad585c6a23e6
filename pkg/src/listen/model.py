"""Items, datasets and the linear scoring shared by every algorithm and metric."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

KINDS = ("numerical", "categorical", "textual")
DIRECTIONS = ("maximize", "minimize", "neutral")


class SchemaError(ValueError):
    """A dataset, item or weight vector violates its schema."""


@dataclass(frozen=True)
class AttributeSchema:
    name: str
    kind: str
    direction: str = "neutral"
    units: str = ""
    description: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.direction not in DIRECTIONS:
            raise SchemaError(f"attribute {self.name!r}: unknown direction {self.direction!r}")
        if self.kind == "numerical" and self.direction == "neutral":
            raise SchemaError(f"numerical attribute {self.name!r} needs maximize or minimize")

    def to_dict(self) -> dict[str, str]:
        return {
            "name": self.name,
            "kind": self.kind,
            "direction": self.direction,
            "units": self.units,
            "description": self.description,
        }


@dataclass(frozen=True)
class Item:
    id: str
    numerical: Mapping[str, float] = field(default_factory=dict)
    categorical: Mapping[str, str] = field(default_factory=dict)
    textual: Mapping[str, str] = field(default_factory=dict)

    def attributes(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        out.update(self.numerical)
        out.update(self.categorical)
        out.update(self.textual)
        return out


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    layout: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.layout):
            raise SchemaError("feature values and layout differ in length")


@dataclass(frozen=True)
class WeightVector:
    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        for key, value in self.weights.items():
            if not math.isfinite(value):
                raise SchemaError(f"weight {key!r} is not finite: {value}")

    def as_array(self, layout: Sequence[str]) -> np.ndarray:
        """Weights ordered by `layout`; keys must match exactly."""
        if set(self.weights) != set(layout):
            missing = sorted(set(layout) - set(self.weights))
            extra = sorted(set(self.weights) - set(layout))
            raise SchemaError(f"weight keys do not match layout (missing={missing}, extra={extra})")
        return np.array([self.weights[k] for k in layout], dtype=float)

    def scaled(self, factor: float) -> WeightVector:
        return WeightVector({k: v * factor for k, v in self.weights.items()})

    @classmethod
    def zeros(cls, layout: Iterable[str]) -> WeightVector:
        return cls({k: 0.0 for k in layout})

    @classmethod
    def from_array(cls, values: Sequence[float], layout: Sequence[str]) -> WeightVector:
        return cls({k: float(v) for k, v in zip(layout, values)})


@dataclass(frozen=True)
class Dataset:
    """A candidate set plus the texts and ground truth used to evaluate selections.

    ``ground_truth`` is the expert-ranked subset, best first. When
    ``tie_group_size`` is set, the first K entries share the top rank.
    ``metadata`` carries generator parameters for synthetic data.
    """

    name: str
    schema: tuple[AttributeSchema, ...]
    items: tuple[Item, ...]
    persona: str = ""
    utterance: str = ""
    ground_truth: tuple[str, ...] = ()
    tie_group_size: int | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))
        validate_dataset(self)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_ranked(self) -> int:
        return len(self.ground_truth)

    def attribute(self, name: str) -> AttributeSchema:
        for attr in self.schema:
            if attr.name == name:
                return attr
        raise KeyError(name)

    def index_of(self, item_id: str) -> int:
        return self._index()[item_id]

    def item(self, item_id: str) -> Item:
        return self.items[self.index_of(item_id)]

    def _index(self) -> dict[str, int]:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {it.id: i for i, it in enumerate(self.items)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def top_group(self) -> tuple[str, ...]:
        """Ids sharing the best ground-truth rank (one id unless a tie group is declared)."""
        if not self.ground_truth:
            return ()
        k = self.tie_group_size or 1
        return self.ground_truth[:k]


def validate_dataset(ds: Dataset) -> None:
    problems: list[str] = []
    kinds: dict[str, str] = {}
    for attr in ds.schema:
        if attr.name in kinds:
            problems.append(f"duplicate attribute name {attr.name!r}")
        kinds[attr.name] = attr.kind
    seen: set[str] = set()
    for item in ds.items:
        if item.id in seen:
            problems.append(f"duplicate item id {item.id!r}")
        seen.add(item.id)
        for kind, values in (
            ("numerical", item.numerical),
            ("categorical", item.categorical),
            ("textual", item.textual),
        ):
            for key, value in values.items():
                if kinds.get(key) != kind:
                    problems.append(f"item {item.id!r}: field {key!r} is not a {kind} attribute")
                elif kind == "numerical" and not (
                    isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
                ):
                    problems.append(f"item {item.id!r}: field {key!r} has non-finite value {value!r}")
    gt_seen: set[str] = set()
    for gid in ds.ground_truth:
        if gid not in seen:
            problems.append(f"ground truth id {gid!r} is not an item")
        if gid in gt_seen:
            problems.append(f"ground truth id {gid!r} listed twice")
        gt_seen.add(gid)
    if ds.tie_group_size is not None and not 1 <= ds.tie_group_size <= len(ds.ground_truth):
        problems.append(f"tie group size {ds.tie_group_size} outside 1..{len(ds.ground_truth)}")
    if problems:
        raise SchemaError(f"dataset {ds.name!r} invalid: " + "; ".join(problems))


def feature_layout(dataset: Dataset, include_categorical: bool = True) -> tuple[str, ...]:
    layout = [a.name for a in dataset.schema if a.kind == "numerical"]
    if include_categorical:
        for attr in dataset.schema:
            if attr.kind != "categorical":
                continue
            categories: dict[str, None] = {}
            for item in dataset.items:
                label = item.categorical.get(attr.name)
                if label is not None:
                    categories.setdefault(str(label), None)
            layout.extend(f"{attr.name}={c}" for c in categories)
    return tuple(layout)


def feature_array(dataset: Dataset, include_categorical: bool = True) -> tuple[np.ndarray, tuple[str, ...]]:
    """Dense (N, d) matrix of raw numerical columns followed by one-hot blocks."""
    if not dataset.items:
        raise SchemaError("dataset has no items")
    layout = feature_layout(dataset, include_categorical)
    col = {label: j for j, label in enumerate(layout)}
    numerical = [a.name for a in dataset.schema if a.kind == "numerical"]
    categorical = [a.name for a in dataset.schema if a.kind == "categorical"] if include_categorical else []
    out = np.zeros((len(dataset.items), len(layout)), dtype=float)
    missing: list[str] = []
    for i, item in enumerate(dataset.items):
        for name in numerical:
            if name not in item.numerical:
                missing.append(f"{item.id}.{name}")
                continue
            out[i, col[name]] = float(item.numerical[name])
        for name in categorical:
            label = item.categorical.get(name)
            if label is None:
                missing.append(f"{item.id}.{name}")
                continue
            out[i, col[f"{name}={label}"]] = 1.0
    if missing:
        raise SchemaError("missing attribute values: " + ", ".join(missing[:20]))
    return out, layout


def build_feature_matrix(
    dataset: Dataset, include_categorical: bool = True
) -> tuple[list[FeatureVector], tuple[str, ...]]:
    arr, layout = feature_array(dataset, include_categorical)
    return [FeatureVector(tuple(float(v) for v in row), layout) for row in arr], layout


def minmax_array(arr: np.ndarray) -> np.ndarray:
    """Column-wise min-max scaling; zero-range columns become 0."""
    arr = np.asarray(arr, dtype=float)
    lo = arr.min(axis=0)
    span = arr.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (arr - lo) / safe, 0.0)


def normalize_minmax(matrix: Sequence[FeatureVector]) -> list[FeatureVector]:
    if not matrix:
        raise SchemaError("cannot normalize an empty matrix")
    layout = matrix[0].layout
    if any(fv.layout != layout for fv in matrix):
        raise SchemaError("feature vectors have differing layouts")
    scaled = minmax_array(np.array([fv.values for fv in matrix], dtype=float))
    return [FeatureVector(tuple(float(v) for v in row), layout) for row in scaled]


def score(weights: WeightVector, features: FeatureVector) -> float:
    w = weights.as_array(features.layout)
    return float(np.dot(w, np.asarray(features.values, dtype=float)))


def argmax_index(scores: np.ndarray) -> int:
    """Index of the maximal score; ties go to the lowest index."""
    scores = np.asarray(scores)
    if scores.size == 0:
        raise ValueError("argmax of an empty score list")
    # np.argmax returns the first occurrence of the maximum
    return int(np.argmax(scores))


def argmax_item(weights: WeightVector, normalized: Sequence[FeatureVector], items: Sequence[Item]) -> Item:
    if not normalized or len(normalized) != len(items):
        raise ValueError("feature list must be non-empty and aligned with items")
    w = weights.as_array(normalized[0].layout)
    scores = np.array([fv.values for fv in normalized], dtype=float) @ w
    return items[argmax_index(scores)]
