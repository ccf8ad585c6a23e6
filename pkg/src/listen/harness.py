"""Seeded experiment grids: datasets x algorithms x replications.

Layout of an output directory::

    traces/<cell>.jsonl        one line per iteration (selection, NAR, AUS)
    transcripts/<cell>.jsonl   every oracle call of the cell
    fits/<dataset>.json        fitted utility used for AUS
    aggregate.csv              dataset, algorithm, iteration, metric, mean, two_se, n
    concordance.csv            concordance and ranked-set statistics per dataset
    metadata.json              plan, flags and interpretation choices

A cell whose trace file exists is not rerun.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .algorithms import ALGORITHMS, ORACLE_ALGORITHMS, ConfigError, RunConfig, RunError, RunRecord, run
from .datasets import atomic_write_text, generator_weights
from .evaluation import (
    FittedUtility,
    FitConvergenceError,
    concordance,
    fit_utility,
    normalized_average_rank,
)
from .model import Dataset, WeightVector
from .oracle import (
    FixedWeightsOracle,
    LLMHTTPOracle,
    OracleError,
    ReplayOracle,
    ScriptedLinearOracle,
    Transcript,
    wall_clock,
)

logger = logging.getLogger(__name__)

ORACLE_KINDS = ("scripted_linear", "scripted_fixed_weights", "replay", "llm_http")
METRICS = ("nar", "aus")
BASE_SUFFIX = "@base"

DECISIONS = {
    "normalization": "min-max per column; zero-range columns map to 0",
    "argmax_ties": "lowest item index",
    "concordance_features": "min-max scaled numerical columns plus one-hot columns",
    "concordance_tie_group": "success when any maximizer belongs to the top tie group",
    "utility_fit": "damped Newton, L2 1e-4 on weights, gradient tolerance 1e-8; intercept unpenalized, pinned to 0 when all labels agree",
    "listen_t_sampling": "without replacement within a batch, independent across rounds",
    "listen_t_playoff": "deduplicated champions; a single finalist still costs one call",
    "listen_t_intermediate": "iteration t < T reports the champion of round t",
    "zscore_trace": "constant selection repeated for every iteration",
    "default_batch_size": "5 (not stated in the source method)",
    "llm_decoding": "temperature and sampling left to the server unless configured",
    "retries": "3 retries per call, then a hard error for the cell",
}

TRACE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["dataset", "algorithm", "replication", "seed", "t", "selected", "kind", "nar"],
    "properties": {
        "dataset": {"type": "string"},
        "algorithm": {"type": "string"},
        "replication": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer"},
        "t": {"type": "integer", "minimum": 1},
        "selected": {"type": "string"},
        "kind": {"enum": ["select", "round", "playoff"]},
        "nar": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "aus": {"type": ["number", "null"]},
        "weights": {"type": "object", "additionalProperties": {"type": "number"}},
        "batch": {"type": "array", "items": {"type": "string"}},
    },
}


@dataclass
class OracleSpec:
    kind: str = "scripted_linear"
    temperature: float = 0.0
    fixed_weights: list[dict[str, float]] | None = None
    replay_dir: str | None = None
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "LISTEN_LLM_API_KEY"
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ORACLE_KINDS:
            raise ConfigError(f"unknown oracle kind {self.kind!r}; expected one of {ORACLE_KINDS}")


@dataclass
class ExperimentPlan:
    datasets: Sequence[Dataset]
    algorithms: Sequence[str]
    out_dir: str | Path
    replications: int = 50
    iterations: int = 25
    batch_size: int = 5
    base_seed: int = 0
    ablation: bool = False
    oracle: OracleSpec = field(default_factory=OracleSpec)
    confirm_llm_spend: bool = False
    max_workers: int = 1
    concordance_samples: int = 1000
    fit_pairs: int = 10_000
    fit_q: float = 0.95

    def cells(self) -> list[Cell]:
        out = []
        for ds in self.datasets:
            for algo in self.algorithms:
                variants = [False, True] if self.ablation and algo in ORACLE_ALGORITHMS else [False]
                for ablated in variants:
                    for r in range(self.replications):
                        out.append(Cell(ds.name, algo, ablated, r, self.base_seed + r))
        return out

    def estimated_oracle_calls(self) -> int:
        return sum(self.iterations for c in self.cells() if c.algorithm in ORACLE_ALGORITHMS)

    def validate(self) -> None:
        if not self.algorithms:
            raise ConfigError("plan has no algorithms")
        if not self.datasets:
            raise ConfigError("plan has no datasets")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"dataset names must be unique: {names}")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        for algo in self.algorithms:
            RunConfig(algo, iterations=self.iterations, batch_size=self.batch_size)
        if self.oracle.kind == "llm_http" and not self.confirm_llm_spend:
            calls = self.estimated_oracle_calls()
            if calls:
                raise ConfigError(
                    f"plan would make about {calls} LLM calls; pass confirm_llm_spend to proceed")

    def describe(self) -> dict[str, Any]:
        return {
            "datasets": [d.name for d in self.datasets],
            "algorithms": list(self.algorithms),
            "replications": self.replications,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "base_seed": self.base_seed,
            "ablation": self.ablation,
            "oracle": asdict(self.oracle),
            "concordance_samples": self.concordance_samples,
            "fit_pairs": self.fit_pairs,
            "fit_q": self.fit_q,
        }


@dataclass(frozen=True)
class Cell:
    dataset: str
    algorithm: str
    ablated: bool
    replication: int
    seed: int

    @property
    def label(self) -> str:
        return self.algorithm + (BASE_SUFFIX if self.ablated else "")

    @property
    def key(self) -> str:
        return f"{self.dataset}__{self.label}__r{self.replication:03d}"


@dataclass
class CellResult:
    cell: Cell
    rows: list[dict[str, Any]]
    transcript: Transcript | None = None
    error: str | None = None
    resumed: bool = False


@dataclass
class ResultBundle:
    plan: ExperimentPlan
    results: dict[str, CellResult]
    fits: dict[str, FittedUtility | None]
    fit_errors: dict[str, str]
    concordances: dict[str, Any]

    @property
    def failures(self) -> list[CellResult]:
        return [r for r in self.results.values() if r.error is not None]

    def records_for(self, dataset: str, label: str) -> list[CellResult]:
        return [r for r in self.results.values()
                if r.cell.dataset == dataset and r.cell.label == label and r.error is None]


def make_oracle(spec: OracleSpec, dataset: Dataset, cell: Cell):
    if spec.kind == "scripted_linear":
        return ScriptedLinearOracle.from_dataset(dataset, generator_weights(dataset),
                                                 temperature=spec.temperature, seed=cell.seed)
    if spec.kind == "scripted_fixed_weights":
        if not spec.fixed_weights:
            raise ConfigError("scripted_fixed_weights oracle needs fixed_weights")
        return FixedWeightsOracle([WeightVector(w) for w in spec.fixed_weights])
    if spec.kind == "replay":
        if not spec.replay_dir:
            raise ConfigError("replay oracle needs replay_dir")
        return ReplayOracle.from_file(Path(spec.replay_dir) / "transcripts" / f"{cell.key}.jsonl")
    if spec.endpoint and spec.model:
        return LLMHTTPOracle(spec.endpoint, spec.model, api_key_env=spec.api_key_env,
                             temperature=spec.temperature or None, timeout=spec.timeout)
    return LLMHTTPOracle.from_env(api_key_env=spec.api_key_env, temperature=spec.temperature or None,
                                  timeout=spec.timeout)


def trace_rows(record: RunRecord, cell: Cell, dataset: Dataset, fit: FittedUtility | None) -> list[dict[str, Any]]:
    utilities = fit.item_utilities(dataset) if fit is not None else None
    rows = []
    for entry in record.entries:
        row: dict[str, Any] = {
            "dataset": cell.dataset,
            "algorithm": cell.label,
            "replication": cell.replication,
            "seed": cell.seed,
            **entry.to_dict(),
            "nar": normalized_average_rank(entry.selected, dataset).normalized_rank,
            "aus": None if utilities is None else float(utilities[dataset.index_of(entry.selected)]),
        }
        row.pop("transcript_refs", None)
        rows.append(row)
    return rows


def _jsonl(rows: Sequence[dict[str, Any]]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def run_cell(plan: ExperimentPlan, dataset: Dataset, cell: Cell, fit: FittedUtility | None) -> CellResult:
    out = Path(plan.out_dir)
    trace_path = out / "traces" / f"{cell.key}.jsonl"
    if trace_path.exists():
        return CellResult(cell, _read_jsonl(trace_path), resumed=True)
    config = RunConfig(cell.algorithm, iterations=plan.iterations, batch_size=plan.batch_size,
                       seed=cell.seed, ablation_base_prompt=cell.ablated)
    transcript = Transcript(clock=wall_clock if plan.oracle.kind == "llm_http" else None)
    try:
        oracle = make_oracle(plan.oracle, dataset, cell) if cell.algorithm in ORACLE_ALGORITHMS else None
        record = run(dataset, config, oracle, transcript)
    except (RunError, OracleError, ValueError, KeyError, OSError) as exc:
        logger.warning("cell %s failed: %s", cell.key, exc)
        if isinstance(exc, RunError):
            transcript = exc.record.transcript
        _write_transcript(out, cell, transcript)
        return CellResult(cell, [], transcript, error=str(exc))
    rows = trace_rows(record, cell, dataset, fit)
    _write_transcript(out, cell, record.transcript)
    # the trace is written last: its presence marks the cell complete
    atomic_write_text(trace_path, _jsonl(rows))
    return CellResult(cell, rows, record.transcript)


def _write_transcript(out: Path, cell: Cell, transcript: Transcript) -> None:
    if transcript.records:
        atomic_write_text(out / "transcripts" / f"{cell.key}.jsonl", transcript.to_jsonl())


def _check_writable(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")


def run_experiment(plan: ExperimentPlan) -> ResultBundle:
    plan.validate()
    out = Path(plan.out_dir)
    _check_writable(out)
    by_name = {d.name: d for d in plan.datasets}
    fits: dict[str, FittedUtility | None] = {}
    fit_errors: dict[str, str] = {}
    conc: dict[str, Any] = {}
    for ds in plan.datasets:
        fits[ds.name] = None
        if ds.ground_truth:
            try:
                fits[ds.name] = fit_utility(ds, plan.fit_pairs, plan.fit_q, rng=plan.base_seed)
            except (FitConvergenceError, ValueError) as exc:
                fit_errors[ds.name] = str(exc)
            try:
                conc[ds.name] = concordance(ds, plan.concordance_samples, rng=plan.base_seed)
            except ValueError as exc:
                conc[ds.name] = None
                logger.warning("no concordance for %s: %s", ds.name, exc)

    cells = plan.cells()
    if plan.max_workers > 1:
        with ThreadPoolExecutor(plan.max_workers) as pool:
            futures = [pool.submit(run_cell, plan, by_name[c.dataset], c, fits[c.dataset]) for c in cells]
            results = [f.result() for f in futures]
    else:
        results = [run_cell(plan, by_name[c.dataset], c, fits[c.dataset]) for c in cells]
    bundle = ResultBundle(plan, {r.cell.key: r for r in results}, fits, fit_errors, conc)
    n_failed = len(bundle.failures)
    if n_failed:
        logger.warning("%d of %d cells failed and are excluded from aggregates", n_failed, len(cells))
    return bundle


# --------------------------------------------------------------------------- reports


def mean_two_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(2.0 * arr.std(ddof=1) / math.sqrt(arr.size))


def aggregate_rows(trace_rows_: Sequence[dict[str, Any]]) -> list[dict[str, Any]]:
    """Mean and 2SE across replications per (dataset, algorithm, iteration, metric)."""
    groups: dict[tuple[str, str, int, str], list[float]] = {}
    for row in trace_rows_:
        for metric in METRICS:
            value = row.get(metric)
            if value is None:
                continue
            groups.setdefault((row["dataset"], row["algorithm"], int(row["t"]), metric), []).append(float(value))
    out = []
    for (ds, algo, t, metric) in sorted(groups):
        mean, two_se = mean_two_se(groups[(ds, algo, t, metric)])
        out.append({"dataset": ds, "algorithm": algo, "iteration": t, "metric": metric,
                    "mean": mean, "two_se": two_se, "n": len(groups[(ds, algo, t, metric)])})
    return out


def _csv(rows: Sequence[dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


AGGREGATE_COLUMNS = ("dataset", "algorithm", "iteration", "metric", "mean", "two_se", "n")
CONCORDANCE_COLUMNS = ("dataset", "concordance", "two_se", "samples", "total_items", "ranked_items",
                       "ranked_prop", "feature_space")


def concordance_rows(bundle: ResultBundle) -> list[dict[str, Any]]:
    rows = []
    for ds in bundle.plan.datasets:
        c = bundle.concordances.get(ds.name)
        rows.append({
            "dataset": ds.name,
            "concordance": None if c is None else c.p,
            "two_se": None if c is None else c.two_se,
            "samples": None if c is None else c.n,
            "total_items": ds.n_items,
            "ranked_items": ds.n_ranked,
            "ranked_prop": ds.n_ranked / ds.n_items,
            "feature_space": None if c is None else c.feature_space,
        })
    return rows


def emit_reports(bundle: ResultBundle) -> dict[str, Path]:
    """Write aggregates, concordance table, fits and metadata; returns the paths."""
    if not bundle.results:
        raise ConfigError("empty result bundle")
    out = Path(bundle.plan.out_dir)
    _check_writable(out)
    ok_rows = [row for key in sorted(bundle.results) for row in bundle.results[key].rows
               if bundle.results[key].error is None]
    paths = {
        "aggregate": out / "aggregate.csv",
        "concordance": out / "concordance.csv",
        "metadata": out / "metadata.json",
    }
    texts = {
        "aggregate": _csv(aggregate_rows(ok_rows), AGGREGATE_COLUMNS),
        "concordance": _csv(concordance_rows(bundle), CONCORDANCE_COLUMNS),
    }
    for name, fit in sorted(bundle.fits.items()):
        if fit is not None:
            paths[f"fit:{name}"] = out / "fits" / f"{name}.json"
            texts[f"fit:{name}"] = json.dumps(fit.to_dict(), indent=2, sort_keys=True) + "\n"
    failures = sorted(bundle.failures, key=lambda r: r.cell.key)
    meta = {
        "package_version": __version__,
        "plan": bundle.plan.describe(),
        "decisions": DECISIONS,
        "cells": len(bundle.results),
        "failed_cells": [{"cell": r.cell.key, "error": r.error} for r in failures],
        "fit_errors": bundle.fit_errors,
        "trace_schema": TRACE_SCHEMA,
    }
    texts["metadata"] = json.dumps(meta, indent=2, sort_keys=True) + "\n"
    for key, path in paths.items():
        atomic_write_text(path, texts[key])
    return paths


def report_from_dir(out_dir: str | Path) -> Path:
    """Recompute aggregate.csv from the trace files already in `out_dir`."""
    out = Path(out_dir)
    rows = []
    for path in sorted((out / "traces").glob("*.jsonl")):
        rows.extend(_read_jsonl(path))
    if not rows:
        raise ConfigError(f"no traces under {out / 'traces'}")
    target = out / "aggregate.csv"
    atomic_write_text(target, _csv(aggregate_rows(rows), AGGREGATE_COLUMNS))
    return target
