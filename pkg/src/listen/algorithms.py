"""Selection algorithms: utility refinement, tournament, and the two baselines.

Every runner returns a :class:`RunRecord` with one entry per iteration so
traces of different algorithms line up on the same iteration axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import Dataset, WeightVector, argmax_index, feature_array, minmax_array
from .oracle import DEFAULT_RETRIES, Oracle, OracleError, Transcript, choose_champion, elicit_weights
from .prompts import build_prompt, champion_prompt_parts, weight_prompt_parts

ALGORITHMS = ("listen_u", "listen_t", "baseline_random", "baseline_zscore")
ORACLE_ALGORITHMS = ("listen_u", "listen_t")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    algorithm: str
    iterations: int = 25
    batch_size: int = 5
    seed: int = 0
    ablation_base_prompt: bool = False
    retries: int = DEFAULT_RETRIES
    strict_json: bool = False

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.iterations < 1:
            raise ConfigError("iterations must be positive")
        if self.algorithm == "listen_t":
            if self.iterations < 3:
                raise ConfigError("listen_t needs at least 3 iterations")
            if self.batch_size < 2:
                raise ConfigError("listen_t needs a batch size of at least 2")


@dataclass
class IterationEntry:
    t: int
    selected: str
    weights: dict[str, float] | None = None
    batch: list[str] | None = None
    transcript_refs: list[int] = field(default_factory=list)
    kind: str = "select"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"t": self.t, "selected": self.selected, "kind": self.kind}
        if self.weights is not None:
            out["weights"] = self.weights
        if self.batch is not None:
            out["batch"] = self.batch
        out["transcript_refs"] = self.transcript_refs
        return out


@dataclass
class RunRecord:
    dataset: str
    config: RunConfig
    entries: list[IterationEntry] = field(default_factory=list)
    transcript: Transcript = field(default_factory=Transcript)

    @property
    def final(self) -> str | None:
        return self.entries[-1].selected if self.entries else None

    def selections(self) -> list[str]:
        return [e.selected for e in self.entries]

    @property
    def oracle_calls(self) -> int:
        return self.transcript.calls


class RunError(RuntimeError):
    """An oracle failure aborted a run; `record` holds the trace up to the failure."""

    def __init__(self, message: str, record: RunRecord) -> None:
        super().__init__(message)
        self.record = record


def _refs_since(transcript: Transcript, start: int) -> list[int]:
    return list(range(start, len(transcript.records)))


def run_listen_u(dataset: Dataset, config: RunConfig, oracle: Oracle, transcript: Transcript | None = None) -> RunRecord:
    if config.algorithm != "listen_u":
        raise ConfigError("run_listen_u needs algorithm='listen_u'")
    record = RunRecord(dataset.name, config, transcript=transcript or Transcript())
    raw, layout = feature_array(dataset, include_categorical=True)
    scaled = minmax_array(raw)
    weights: WeightVector | None = None
    current = None
    for t in range(1, config.iterations + 1):
        parts = weight_prompt_parts(
            dataset,
            layout,
            current=current,
            previous_weights=None if weights is None else dict(weights.weights),
            ablation=config.ablation_base_prompt,
        )
        start = len(record.transcript.records)
        try:
            weights = elicit_weights(oracle, build_prompt(parts), layout, record.transcript,
                                     retries=config.retries, strict=config.strict_json)
        except OracleError as exc:
            raise RunError(f"listen_u iteration {t}: {exc}", record) from exc
        current = dataset.items[argmax_index(scaled @ weights.as_array(layout))]
        record.entries.append(IterationEntry(
            t=t, selected=current.id, weights=dict(weights.weights),
            transcript_refs=_refs_since(record.transcript, start),
        ))
    return record


def run_listen_t(dataset: Dataset, config: RunConfig, oracle: Oracle, transcript: Transcript | None = None) -> RunRecord:
    """T - 1 batch rounds then one playoff among the distinct champions.

    Entry t < T reports the champion of round t; entry T the playoff winner.
    """
    if config.algorithm != "listen_t":
        raise ConfigError("run_listen_t needs algorithm='listen_t'")
    record = RunRecord(dataset.name, config, transcript=transcript or Transcript())
    rng = np.random.default_rng(config.seed)
    n = dataset.n_items
    size = min(config.batch_size, n)
    champions: list[str] = []
    for t in range(1, config.iterations):
        batch = [dataset.items[i] for i in rng.choice(n, size=size, replace=False)]
        parts = champion_prompt_parts(dataset, batch, ablation=config.ablation_base_prompt)
        start = len(record.transcript.records)
        try:
            champ = choose_champion(oracle, build_prompt(parts), batch, record.transcript, retries=config.retries)
        except OracleError as exc:
            raise RunError(f"listen_t round {t}: {exc}", record) from exc
        if champ.id not in champions:
            champions.append(champ.id)
        record.entries.append(IterationEntry(
            t=t, selected=champ.id, batch=[c.id for c in batch], kind="round",
            transcript_refs=_refs_since(record.transcript, start),
        ))
    finalists = [dataset.item(cid) for cid in champions]
    parts = champion_prompt_parts(dataset, finalists, ablation=config.ablation_base_prompt)
    start = len(record.transcript.records)
    try:
        winner = choose_champion(oracle, build_prompt(parts), finalists, record.transcript, retries=config.retries)
    except OracleError as exc:
        raise RunError(f"listen_t playoff: {exc}", record) from exc
    record.entries.append(IterationEntry(
        t=config.iterations, selected=winner.id, batch=list(champions), kind="playoff",
        transcript_refs=_refs_since(record.transcript, start),
    ))
    return record


def run_baseline_random(dataset: Dataset, config: RunConfig) -> RunRecord:
    record = RunRecord(dataset.name, config)
    rng = np.random.default_rng(config.seed)
    picks = rng.integers(0, dataset.n_items, size=config.iterations)
    for t, i in enumerate(picks, start=1):
        record.entries.append(IterationEntry(t=t, selected=dataset.items[int(i)].id))
    return record


def zscore_scores(dataset: Dataset) -> np.ndarray:
    """Mean direction-signed z-score of each item over the numerical attributes."""
    raw, layout = feature_array(dataset, include_categorical=False)
    if not layout:
        raise ConfigError("z-score baseline needs at least one numerical attribute")
    std = raw.std(axis=0)
    z = np.where(std > 0, (raw - raw.mean(axis=0)) / np.where(std > 0, std, 1.0), 0.0)
    sign = np.array([-1.0 if dataset.attribute(name).direction == "minimize" else 1.0 for name in layout])
    return (z * sign).mean(axis=1)


def run_baseline_zscore(dataset: Dataset, config: RunConfig) -> RunRecord:
    record = RunRecord(dataset.name, config)
    chosen = dataset.items[argmax_index(zscore_scores(dataset))].id
    for t in range(1, config.iterations + 1):
        record.entries.append(IterationEntry(t=t, selected=chosen))
    return record


def run(dataset: Dataset, config: RunConfig, oracle: Oracle | None = None,
        transcript: Transcript | None = None) -> RunRecord:
    if config.algorithm in ORACLE_ALGORITHMS and oracle is None:
        raise ConfigError(f"{config.algorithm} needs an oracle")
    if config.algorithm == "listen_u":
        return run_listen_u(dataset, config, oracle, transcript)
    if config.algorithm == "listen_t":
        return run_listen_t(dataset, config, oracle, transcript)
    if config.algorithm == "baseline_random":
        return run_baseline_random(dataset, config)
    return run_baseline_zscore(dataset, config)
