"""Ground-truth scoring: normalized average rank, concordance, fitted utility."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit

from .algorithms import RunRecord
from .model import Dataset, WeightVector, feature_array, minmax_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankOutcome:
    item_id: str
    raw_rank: float
    normalized_rank: float
    ranked: bool


def unranked_rank(n_items: int, n_ranked: int) -> float:
    """Mean of the ranks m+1..N left over for unranked items."""
    return (n_ranked + 1 + n_items) / 2


def normalized_average_rank(selected: str, dataset: Dataset) -> RankOutcome:
    """Rank of `selected` in the ground truth divided by N.

    Unranked items share (m + 1 + N) / 2; members of a declared top tie group
    share (K + 1) / 2.
    """
    if not dataset.ground_truth:
        raise ValueError(f"dataset {dataset.name!r} has no ground truth")
    dataset.index_of(selected)  # KeyError for foreign ids
    n, m = dataset.n_items, dataset.n_ranked
    positions = _positions(dataset)
    if selected in positions:
        pos = positions[selected]
        k = dataset.tie_group_size or 0
        raw = (k + 1) / 2 if pos <= k else float(pos)
        ranked = True
    else:
        raw = unranked_rank(n, m)
        ranked = False
    return RankOutcome(selected, raw, raw / n, ranked)


def _positions(dataset: Dataset) -> dict[str, int]:
    return {gid: i for i, gid in enumerate(dataset.ground_truth, start=1)}


def nar_trace(record: RunRecord, dataset: Dataset) -> list[float]:
    return [normalized_average_rank(s, dataset).normalized_rank for s in record.selections()]


# --------------------------------------------------------------------------- concordance


@dataclass(frozen=True)
class ConcordanceResult:
    p: float
    two_se: float
    n: int
    successes: int
    feature_space: str = "minmax"


def two_standard_errors(p: float, n: int) -> float:
    return 2.0 * math.sqrt(p * (1.0 - p) / n)


def concordance(
    dataset: Dataset,
    num_samples: int = 1000,
    rng: np.random.Generator | int | None = None,
    *,
    normalized: bool = True,
    include_categorical: bool = True,
) -> ConcordanceResult:
    """Share of random Uniform[-1, 1] linear utilities whose best item is the human top item.

    A draw counts as a success when the set of maximizers contains a top item
    (any member of a declared tie group).
    """
    if not dataset.ground_truth:
        raise ValueError(f"dataset {dataset.name!r} has no ground truth")
    if not any(a.kind == "numerical" for a in dataset.schema):
        raise ValueError("concordance needs at least one numerical attribute")
    raw, layout = feature_array(dataset, include_categorical=include_categorical)
    x = minmax_array(raw) if normalized else raw
    rng = np.random.default_rng(rng)
    w = rng.uniform(-1.0, 1.0, size=(num_samples, len(layout)))
    scores = w @ x.T
    best = scores.max(axis=1, keepdims=True)
    # exact comparison: ties only arise from identical feature rows
    is_max = scores >= best
    top = np.array([dataset.index_of(i) for i in dataset.top_group()])
    successes = int(is_max[:, top].any(axis=1).sum())
    p = successes / num_samples
    return ConcordanceResult(p, two_standard_errors(p, num_samples), num_samples, successes,
                             "minmax" if normalized else "raw")


# --------------------------------------------------------------------------- utility fit


class FitConvergenceError(RuntimeError):
    def __init__(self, message: str, partial: FittedUtility) -> None:
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class FittedUtility:
    weights: WeightVector
    intercept: float
    layout: tuple[str, ...]
    iterations: int
    gradient_norm: float
    converged: bool
    normalized: bool = True
    include_categorical: bool = True
    diagnostics: dict = field(default_factory=dict)

    def item_utilities(self, dataset: Dataset) -> np.ndarray:
        raw, layout = feature_array(dataset, include_categorical=self.include_categorical)
        if layout != self.layout:
            raise ValueError(f"fit layout does not match dataset {dataset.name!r}")
        x = minmax_array(raw) if self.normalized else raw
        return x @ self.weights.as_array(layout)

    def to_dict(self) -> dict:
        return {
            "weights": dict(self.weights.weights),
            "intercept": self.intercept,
            "layout": list(self.layout),
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "normalized": self.normalized,
            "include_categorical": self.include_categorical,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FittedUtility:
        return cls(
            weights=WeightVector(d["weights"]),
            intercept=float(d["intercept"]),
            layout=tuple(d["layout"]),
            iterations=int(d["iterations"]),
            gradient_norm=float(d["gradient_norm"]),
            converged=bool(d["converged"]),
            normalized=bool(d.get("normalized", True)),
            include_categorical=bool(d.get("include_categorical", True)),
            diagnostics=dict(d.get("diagnostics", {})),
        )


def simulate_comparisons(
    dataset: Dataset,
    features: np.ndarray,
    num_pairs: int,
    q: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Pairwise training data from the ranking.

    Half the pairs compare two ranked items (drawn independently, better one
    first, label 1 with probability q); half compare a ranked with an unranked
    item (label always 1). Without unranked items all pairs are ranked-vs-ranked.
    """
    ranked = np.array([dataset.index_of(g) for g in dataset.ground_truth])
    ranked_set = set(ranked.tolist())
    unranked = np.array([i for i in range(dataset.n_items) if i not in ranked_set], dtype=int)
    if len(ranked) == 0:
        raise ValueError("utility fit needs ranked items")
    # members of the top tie group all share the same rank value
    rank_value = np.maximum(np.arange(1, len(ranked) + 1), dataset.tie_group_size or 1)

    if len(unranked) == 0:
        logger.warning("dataset %r has no unranked items; drawing %d ranked-vs-ranked pairs",
                       dataset.name, num_pairs)
        n_rr, n_ru = num_pairs, 0
    else:
        n_rr = num_pairs // 2
        n_ru = num_pairs - n_rr

    a = rng.integers(0, len(ranked), size=n_rr)
    b = rng.integers(0, len(ranked), size=n_rr)
    ra, rb = rank_value[a], rank_value[b]
    coin = rng.random(n_rr) < 0.5
    a_better = (ra < rb) | ((ra == rb) & coin)
    better = np.where(a_better, ranked[a], ranked[b])
    worse = np.where(a_better, ranked[b], ranked[a])
    y_rr = (rng.random(n_rr) < q).astype(float)
    x_rr = features[better] - features[worse]

    if n_ru:
        ia = ranked[rng.integers(0, len(ranked), size=n_ru)]
        ib = unranked[rng.integers(0, len(unranked), size=n_ru)]
        x_ru = features[ia] - features[ib]
        y_ru = np.ones(n_ru)
    else:
        x_ru = np.empty((0, features.shape[1]))
        y_ru = np.empty(0)

    info = {"ranked_vs_ranked": int(n_rr), "ranked_vs_unranked": int(n_ru),
            "tied_pairs": int(((ra == rb) & (a != b)).sum())}
    return np.vstack([x_rr, x_ru]), np.concatenate([y_rr, y_ru]), info


def fit_logistic(
    x: np.ndarray,
    y: np.ndarray,
    l2: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 100,
    fit_intercept: bool = True,
) -> tuple[float, np.ndarray, int, float, bool]:
    """Damped Newton on the mean log-loss plus (l2 / 2) * ||w||^2.

    The intercept is unpenalized. When every label is the same its maximum
    likelihood value is infinite, so it is pinned to 0 instead.
    Returns (intercept, weights, iterations, gradient norm, converged).
    """
    n, d = x.shape
    use_intercept = fit_intercept and 0.0 < y.mean() < 1.0
    if fit_intercept and not use_intercept:
        logger.warning("all %d labels are %d; intercept pinned to 0", n, int(y[0]) if n else 0)
    design = np.hstack([np.ones((n, 1)), x]) if use_intercept else x
    theta = np.zeros(design.shape[1])
    penalty = np.full(design.shape[1], l2)
    if use_intercept:
        penalty[0] = 0.0

    def objective(th: np.ndarray) -> float:
        z = design @ th
        # -log sigma(z) for y = 1, -log(1 - sigma(z)) for y = 0
        nll = -(y * log_expit(z) + (1 - y) * log_expit(-z)).mean()
        return float(nll + 0.5 * np.dot(penalty * th, th))

    def gradient(th: np.ndarray) -> np.ndarray:
        return design.T @ (expit(design @ th) - y) / n + penalty * th

    def unpack(th: np.ndarray) -> tuple[float, np.ndarray]:
        return (float(th[0]), th[1:]) if use_intercept else (0.0, th)

    f = objective(theta)
    for it in range(max_iter):
        grad = gradient(theta)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            return (*unpack(theta), it, grad_norm, True)
        p = expit(design @ theta)
        hess = (design * (p * (1 - p))[:, None]).T @ design / n + np.diag(penalty)
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while True:
            cand = theta - t * step
            f_new = objective(cand)
            if f_new <= f - 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        theta, f = cand, f_new
    grad_norm = float(np.linalg.norm(gradient(theta)))
    return (*unpack(theta), max_iter, grad_norm, grad_norm < tol)


def fit_utility(
    dataset: Dataset,
    num_pairs: int = 10_000,
    q: float = 0.95,
    rng: np.random.Generator | int | None = None,
    *,
    l2: float = 1e-4,
    tol: float = 1e-8,
    max_iter: int = 100,
    normalized: bool = True,
    include_categorical: bool = True,
    fit_intercept: bool = True,
) -> FittedUtility:
    """Fit a linear utility to the ground-truth ranking by logistic regression on pairs."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if len(dataset.ground_truth) < 1:
        raise ValueError(f"dataset {dataset.name!r} has no ground truth")
    rng = np.random.default_rng(rng)
    raw, layout = feature_array(dataset, include_categorical=include_categorical)
    features = minmax_array(raw) if normalized else raw
    x, y, info = simulate_comparisons(dataset, features, num_pairs, q, rng)
    alpha, w, iters, gnorm, ok = fit_logistic(x, y, l2=l2, tol=tol, max_iter=max_iter,
                                              fit_intercept=fit_intercept)
    fitted = FittedUtility(
        weights=WeightVector.from_array(w, layout),
        intercept=alpha,
        layout=layout,
        iterations=iters,
        gradient_norm=gnorm,
        converged=ok,
        normalized=normalized,
        include_categorical=include_categorical,
        diagnostics={**info, "l2": l2, "tol": tol, "q": q, "num_pairs": num_pairs,
                     "fit_intercept": fit_intercept},
    )
    if not ok:
        raise FitConvergenceError(f"logistic fit did not reach gradient norm {tol} in {max_iter} steps", fitted)
    return fitted


def utility_trace(record: RunRecord, fitted: FittedUtility, dataset: Dataset) -> list[float]:
    if record.dataset != dataset.name:
        raise ValueError(f"record is for {record.dataset!r}, fit is for {dataset.name!r}")
    u = fitted.item_utilities(dataset)
    return [float(u[dataset.index_of(s)]) for s in record.selections()]


def average_utility_score(records: Sequence[RunRecord], fitted: FittedUtility, dataset: Dataset) -> list[float]:
    """Per-iteration mean over replications of the fitted utility of the selected item."""
    if not records:
        raise ValueError("no records")
    traces = np.array([utility_trace(r, fitted, dataset) for r in records], dtype=float)
    return traces.mean(axis=0).tolist()
