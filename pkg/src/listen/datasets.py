"""Dataset files and synthetic generators.

File format (JSON)::

    {
      "name": "...", "persona": "...", "utterance": "...",
      "schema": [{"name", "kind", "direction", "units", "description"}, ...],
      "items": [{"id": "...", "attributes": {"price": 120.0, "airline": "AA", ...}}, ...],
      "ground_truth": {"ranking": ["id", ...], "tie_group_size": null},
      "metadata": {...}
    }

Synthetic datasets record their generator under ``metadata.generator`` so the
ground truth can be re-derived and scripted oracles can answer from the true
weights.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .model import (
    KINDS,
    AttributeSchema,
    Dataset,
    Item,
    SchemaError,
    WeightVector,
    feature_array,
    feature_layout,
    minmax_array,
)

# --------------------------------------------------------------------------- I/O


def dataset_from_dict(doc: dict[str, Any]) -> Dataset:
    problems: list[str] = []
    schema = []
    for raw in doc.get("schema", []):
        if raw.get("kind") not in KINDS:
            problems.append(f"attribute {raw.get('name')!r}: unknown kind {raw.get('kind')!r}")
            continue
        try:
            schema.append(AttributeSchema(
                name=raw["name"], kind=raw["kind"], direction=raw.get("direction", "neutral"),
                units=raw.get("units", ""), description=raw.get("description", ""),
            ))
        except SchemaError as exc:
            problems.append(str(exc))
    if problems:
        raise SchemaError("; ".join(problems))
    kinds = {a.name: a.kind for a in schema}
    items = []
    for raw in doc.get("items", []):
        iid = str(raw.get("id"))
        buckets: dict[str, dict] = {"numerical": {}, "categorical": {}, "textual": {}}
        for key, value in raw.get("attributes", {}).items():
            kind = kinds.get(key)
            if kind is None:
                problems.append(f"item {iid!r}: unknown attribute {key!r}")
                continue
            if kind == "numerical" and (isinstance(value, bool) or not isinstance(value, (int, float))):
                problems.append(f"item {iid!r}: attribute {key!r} is not a number")
                continue
            buckets[kind][key] = float(value) if kind == "numerical" else str(value)
        for attr in schema:
            if attr.kind == "numerical" and attr.name not in buckets["numerical"]:
                problems.append(f"item {iid!r}: missing numerical attribute {attr.name!r}")
        items.append(Item(iid, buckets["numerical"], buckets["categorical"], buckets["textual"]))
    if problems:
        raise SchemaError("; ".join(problems))
    gt = doc.get("ground_truth") or {}
    return Dataset(
        name=doc.get("name", ""),
        schema=tuple(schema),
        items=tuple(items),
        persona=doc.get("persona", ""),
        utterance=doc.get("utterance", ""),
        ground_truth=tuple(gt.get("ranking", [])),
        tie_group_size=gt.get("tie_group_size"),
        metadata=doc.get("metadata", {}),
    )


def dataset_to_dict(ds: Dataset) -> dict[str, Any]:
    return {
        "name": ds.name,
        "persona": ds.persona,
        "utterance": ds.utterance,
        "schema": [a.to_dict() for a in ds.schema],
        "items": [{"id": it.id, "attributes": it.attributes()} for it in ds.items],
        "ground_truth": {"ranking": list(ds.ground_truth), "tie_group_size": ds.tie_group_size},
        "metadata": dict(ds.metadata),
    }


def load_dataset(path: str | Path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return dataset_from_dict(doc)


def dumps_dataset(ds: Dataset) -> str:
    return json.dumps(dataset_to_dict(ds), indent=1) + "\n"


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(ds: Dataset, path: str | Path) -> None:
    atomic_write_text(path, dumps_dataset(ds))


# --------------------------------------------------------------------------- synthetic

GENERATORS = ("linear", "lexicographic", "threshold")


@dataclass
class SyntheticSpec:
    n_items: int = 100
    n_numerical: int = 3
    value_range: tuple[float, float] = (0.0, 100.0)
    directions: list[str] | None = None
    categorical_cardinalities: list[int] = field(default_factory=list)
    generator: str = "linear"
    true_weights: list[float] | None = None
    # threshold generator: cap the `n_constraints` most heavily weighted
    # attributes (or the named ones) at this quantile of their preferred direction
    threshold_quantile: float = 0.5
    threshold_attributes: list[str] | None = None
    n_constraints: int = 2
    noise: float = 0.0
    n_ranked: int = 10
    tie_group_size: int | None = None
    seed: int = 0
    name: str | None = None

    def __post_init__(self) -> None:
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.n_items < 1 or self.n_numerical < 1:
            raise ValueError("need at least one item and one numerical attribute")
        if not 1 <= self.n_ranked <= self.n_items:
            raise ValueError("n_ranked must lie in 1..n_items")
        if self.tie_group_size is not None and not 1 <= self.tie_group_size <= self.n_ranked:
            raise ValueError("tie_group_size must lie in 1..n_ranked")
        if self.directions is not None and len(self.directions) != self.n_numerical:
            raise ValueError("one direction per numerical attribute")
        self.value_range = tuple(self.value_range)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SyntheticSpec:
        return cls(**d)


def _preference_order(spec: SyntheticSpec, ds_schema: Sequence[AttributeSchema], scaled: np.ndarray,
                      layout: Sequence[str], weights: np.ndarray) -> tuple[np.ndarray, dict[str, Any]]:
    """Item indices best first under the spec's generator, plus generator metadata."""
    utility = scaled @ weights
    meta: dict[str, Any] = {"kind": spec.generator, "feature_space": "minmax",
                            "true_weights": {k: float(v) for k, v in zip(layout, weights)}}
    n = len(utility)
    if spec.generator == "linear":
        return np.lexsort((np.arange(n), -utility)), meta
    if spec.generator == "lexicographic":
        names = [a.name for a in ds_schema if a.kind == "numerical"]
        tiers = sorted(range(len(names)), key=lambda j: -abs(weights[j]))
        keys = [np.round(np.sign(weights[j]) * scaled[:, j], 12) for j in tiers]
        meta["tiers"] = [names[j] for j in tiers]
        # np.lexsort sorts by the last key first
        return np.lexsort([np.arange(n)] + [-k for k in reversed(keys)]), meta
    names = [a.name for a in ds_schema if a.kind == "numerical"]
    if spec.threshold_attributes:
        capped = [names.index(a) for a in spec.threshold_attributes]
    else:
        k = min(spec.n_constraints, len(names))
        capped = [int(j) for j in np.argsort(-np.abs(weights[: len(names)]), kind="stable")[:k]]
    feasible = np.ones(n, dtype=bool)
    constraints = []
    for j in capped:
        oriented = np.sign(weights[j]) * scaled[:, j]
        cap = float(np.quantile(oriented, spec.threshold_quantile))
        feasible &= oriented <= cap
        constraints.append({"attribute": names[j], "sign": float(np.sign(weights[j])), "oriented_cap": cap})
    meta["constraints"] = constraints
    meta["n_feasible"] = int(feasible.sum())
    return np.lexsort((np.arange(n), -utility, ~feasible)), meta


def rank_by_generator(dataset: Dataset) -> list[str]:
    """Re-derive the generator's full preference order from the stored metadata."""
    gen = dict(dataset.metadata["generator"])
    if "spec" in gen:
        spec = SyntheticSpec.from_dict(gen["spec"])
    else:
        spec = SyntheticSpec(n_items=dataset.n_items, n_ranked=1, generator=gen.get("kind", "linear"))
    raw, layout = feature_array(dataset, include_categorical=True)
    weights = WeightVector(gen["true_weights"]).as_array(layout)
    order, _ = _preference_order(spec, dataset.schema, minmax_array(raw), layout, weights)
    return [dataset.items[i].id for i in order]


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.value_range
    directions = spec.directions or [str(d) for d in rng.choice(["maximize", "minimize"], size=spec.n_numerical)]
    schema = [
        AttributeSchema(f"x{j}", "numerical", directions[j], units="units", description=f"synthetic metric {j}")
        for j in range(spec.n_numerical)
    ]
    schema += [
        AttributeSchema(f"c{j}", "categorical", "neutral", description=f"synthetic category {j}")
        for j in range(len(spec.categorical_cardinalities))
    ]
    values = np.round(rng.uniform(lo, hi, size=(spec.n_items, spec.n_numerical)), 4)
    cats = [rng.integers(0, k, size=spec.n_items) for k in spec.categorical_cardinalities]
    width = len(str(spec.n_items - 1))
    items = []
    for i in range(spec.n_items):
        items.append(Item(
            id=f"s{i:0{width}d}",
            numerical={f"x{j}": float(values[i, j]) for j in range(spec.n_numerical)},
            categorical={f"c{j}": f"k{int(c[i])}" for j, c in enumerate(cats)},
        ))
    name = spec.name or f"synthetic-{spec.generator}-{spec.seed}"
    bare = Dataset(name=name, schema=tuple(schema), items=tuple(items))
    raw, layout = feature_array(bare, include_categorical=True)
    scaled = minmax_array(raw)
    if spec.true_weights is not None:
        weights = np.asarray(spec.true_weights, dtype=float)
        if weights.shape != (len(layout),):
            raise ValueError(f"true_weights needs {len(layout)} entries for layout {layout}")
    else:
        # sign follows the declared direction so the data reads naturally
        sign = np.array([-1.0 if d == "minimize" else 1.0 for d in directions])
        weights = np.concatenate([
            sign * rng.uniform(0.2, 1.0, size=spec.n_numerical),
            rng.uniform(-0.5, 0.5, size=len(layout) - spec.n_numerical),
        ])
    order, gen_meta = _preference_order(spec, schema, scaled, layout, weights)
    ranking = [items[i].id for i in order]
    if spec.noise > 0:
        ranking = _perturb_adjacent(ranking, spec.noise, rng)
    gen_meta["spec"] = _spec_dict(spec)
    return Dataset(
        name=name,
        schema=tuple(schema),
        items=tuple(items),
        persona="You are an analyst choosing the best option for a client.",
        utterance=_utterance(schema, weights),
        ground_truth=tuple(ranking[: spec.n_ranked]),
        tie_group_size=spec.tie_group_size,
        metadata={"synthetic": True, "generator": gen_meta},
    )


def _spec_dict(spec: SyntheticSpec) -> dict[str, Any]:
    d = asdict(spec)
    d["value_range"] = list(spec.value_range)
    return d


def _perturb_adjacent(ranking: list[str], noise: float, rng: np.random.Generator) -> list[str]:
    # disjoint swaps only, so no item moves more than one place
    out = list(ranking)
    i = 0
    while i < len(out) - 1:
        if rng.random() < noise:
            out[i], out[i + 1] = out[i + 1], out[i]
            i += 1
        i += 1
    return out


def _utterance(schema: Sequence[AttributeSchema], weights: np.ndarray) -> str:
    numerical = [a for a in schema if a.kind == "numerical"]
    order = sorted(range(len(numerical)), key=lambda j: -abs(weights[j]))
    phrases = []
    for j in order:
        verb = "higher" if weights[j] > 0 else "lower"
        phrases.append(f"{verb} {numerical[j].name}")
    return "I care most about " + ", then ".join(phrases) + "."


def with_threshold(spec: SyntheticSpec, quantile: float = 0.5, attributes: list[str] | None = None,
                   n_constraints: int = 2) -> SyntheticSpec:
    """The constrained twin of a linear spec: same items and weights, hard caps added."""
    d = _spec_dict(spec)
    d.update(generator="threshold", threshold_quantile=quantile, threshold_attributes=attributes,
             n_constraints=n_constraints, name=None)
    return SyntheticSpec.from_dict(d)


def generator_weights(dataset: Dataset) -> WeightVector:
    try:
        return WeightVector(dataset.metadata["generator"]["true_weights"])
    except KeyError as exc:
        raise SchemaError(f"dataset {dataset.name!r} carries no generator weights") from exc


def layout_matches(dataset: Dataset, weights: WeightVector) -> bool:
    return set(weights.weights) == set(feature_layout(dataset, include_categorical=True))
