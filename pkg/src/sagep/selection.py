"""Per-generation choice of which candidates get expensive evaluation.

The decision pipeline, generation by generation:

  gen 0   no surrogate exists yet, so every candidate with a usable
          embedding is evaluated expensively.
  gen 1   space-filling warm-up: low-discrepancy points are drawn over the
          bounding box of the evaluated history and each point claims its
          nearest still-unclaimed candidate, spreading the n_init picks
          across embedding space instead of clustering on the incumbent.
  gen 2+  acquisition values (LCB or EI) per objective, discounted by a
          convergence weight that decays near previously diverged
          embeddings, aggregated to one scalar per candidate, then passed
          through the configured thresholds (fixed count, relative value,
          Pareto front membership).

Candidates that are not selected receive the surrogate posterior means as
their objective values; phenotypes whose keys were already expensively
evaluated are never re-selected.  All tie-breaks go to the lower candidate
id so decisions are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm, qmc

from .surrogate import MultiGp, predict_multi_batch
from .symreg import Candidate, fast_nondominated_sort

__all__ = [
    "SelectionConfig",
    "SelectionDecision",
    "SelectionHistory",
    "SelectionContractError",
    "lcb",
    "ei",
    "convergence_weight",
    "convergence_weights",
    "aggregate_multiobjective",
    "apply_thresholds",
    "select_generation",
    "default_selection_config",
]


class SelectionContractError(ValueError):
    """A selection call violates its preconditions."""


@dataclass(frozen=True)
class SelectionConfig:
    """Acquisition metric plus the threshold battery of the selection loop.

    Any of m_fixed / m_rel / m_pareto may be absent (None), but generations
    that rely on thresholding need at least one present.
    """

    metric: str = "lcb"
    beta: float = 5.0
    xi: float = 0.0
    delta: float = 0.75
    n_init: int = 1
    m_init_rel: float | None = None
    m_fixed: int | None = None
    m_rel: float | None = None
    m_pareto: int | None = None

    def __post_init__(self):
        if self.metric not in ("lcb", "ei"):
            raise SelectionContractError(f"unknown metric {self.metric!r}")
        if self.beta < 0 or self.xi < 0:
            raise SelectionContractError("beta and xi must be >= 0")
        if not 0.0 < self.delta <= 1.0:
            raise SelectionContractError("delta must lie in (0, 1]")
        if self.n_init < 1:
            raise SelectionContractError("n_init must be >= 1")
        if self.m_init_rel is not None and not 0.0 <= self.m_init_rel <= 1.0:
            raise SelectionContractError("m_init_rel must lie in [0, 1]")
        if self.m_fixed is not None and self.m_fixed < 1:
            raise SelectionContractError("m_fixed must be >= 1")
        if self.m_rel is not None and not 0.0 <= self.m_rel <= 1.0:
            raise SelectionContractError("m_rel must lie in [0, 1]")
        if self.m_pareto is not None and self.m_pareto < 1:
            raise SelectionContractError("m_pareto must be >= 1")

    def has_threshold(self) -> bool:
        return any(v is not None for v in (self.m_fixed, self.m_rel,
                                           self.m_pareto))


def default_selection_config(population_size: int) -> SelectionConfig:
    """Default selection settings; n_init scales to 40% of the population."""
    return SelectionConfig(metric="lcb", beta=5.0, delta=0.75,
                           n_init=max(1, round(0.4 * population_size)),
                           m_init_rel=0.5, m_fixed=1, m_rel=0.25)


@dataclass
class SelectionHistory:
    """Normalized embeddings and keys of everything evaluated so far."""

    converged_points: np.ndarray
    diverged_points: np.ndarray
    evaluated_keys: frozenset

    @classmethod
    def empty(cls, dim: int) -> "SelectionHistory":
        return cls(converged_points=np.empty((0, dim)),
                   diverged_points=np.empty((0, dim)),
                   evaluated_keys=frozenset())

    def all_points(self) -> np.ndarray:
        return np.vstack([self.converged_points, self.diverged_points])


@dataclass
class SelectionDecision:
    """Outcome of one generation's selection pass.

    Arrays align with the population order; rows without a usable embedding
    hold NaN.  `predicted` maps candidate id to the surrogate's objective
    prediction (back-transformed to raw objective units) for every candidate
    that was predicted, selected or not.
    """

    selected_ids: list[int]
    values: np.ndarray
    scalar: np.ndarray
    weights: np.ndarray
    front_index: np.ndarray
    predicted: dict[int, np.ndarray] = field(default_factory=dict)


def lcb(mean, std, beta: float):
    """Lower-confidence-bound attractiveness: -mu + beta*sigma.

    Larger is more attractive; with beta = 0 this ranks by smallest
    predicted error.
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    out = -mean + beta * std
    return float(out) if out.ndim == 0 else out


def ei(mean, std, f_best: float, xi: float = 0.0):
    """Expected improvement below f_best with exploration margin xi.

    For sigma = 0 the integral collapses to max(0, f_best - mu - xi).
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improve = f_best - mean - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, improve / np.where(std > 0, std, 1.0), 0.0)
        spread = improve * norm.cdf(z) + std * norm.pdf(z)
    out = np.where(std > 0, spread, np.maximum(improve, 0.0))
    return float(out) if out.ndim == 0 else out


def convergence_weight(x: np.ndarray, converged_set: np.ndarray,
                       diverged_set: np.ndarray, delta: float) -> float:
    """Discount in [0, 1] that vanishes on a diverged embedding and grows
    back to 1 at delta times the local converged-diverged separation.

    With no diverged history there is nothing to avoid and the weight is 1.
    Both sets empty is a contract violation: the weight is only defined
    relative to some history.
    """
    if not 0.0 < delta <= 1.0:
        raise SelectionContractError("delta must lie in (0, 1]")
    converged_set = np.atleast_2d(np.asarray(converged_set, dtype=float))
    diverged_set = np.atleast_2d(np.asarray(diverged_set, dtype=float))
    n_conv = 0 if converged_set.size == 0 else converged_set.shape[0]
    n_div = 0 if diverged_set.size == 0 else diverged_set.shape[0]
    if n_conv == 0 and n_div == 0:
        raise SelectionContractError(
            "convergence weight needs at least one historical embedding")
    if n_div == 0:
        return 1.0
    x = np.asarray(x, dtype=float).ravel()
    d_div = np.linalg.norm(diverged_set - x, axis=1)
    nearest_div = diverged_set[int(np.argmin(d_div))]
    dist_div = float(np.min(d_div))
    if n_conv == 0:
        return 0.0 if dist_div == 0.0 else 1.0
    d_conv = np.linalg.norm(converged_set - x, axis=1)
    nearest_conv = converged_set[int(np.argmin(d_conv))]
    denom = delta * float(np.linalg.norm(nearest_conv - nearest_div))
    if denom == 0.0:
        return 0.0 if dist_div == 0.0 else 1.0
    return float(min(1.0, dist_div / denom))


def convergence_weights(X: np.ndarray, converged_set: np.ndarray,
                        diverged_set: np.ndarray, delta: float) -> np.ndarray:
    """Vectorized convergence_weight over rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    diverged_set = np.atleast_2d(np.asarray(diverged_set, dtype=float))
    if diverged_set.size == 0:
        return np.ones(X.shape[0])
    return np.array([convergence_weight(row, converged_set, diverged_set,
                                        delta) for row in X])


def aggregate_multiobjective(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse per-objective selection values to one scalar per candidate.

    Each objective column is min-max normalized over the population; the
    scalar is the max over objectives (a candidate attractive on any single
    objective stays attractive).  The second return is the Pareto front
    index of each candidate in selection-value space, maximizing.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(values)):
        raise SelectionContractError("selection values must be finite")
    lo = values.min(axis=0)
    span = values.max(axis=0) - lo
    normed = np.zeros_like(values)
    nz = span > 0
    normed[:, nz] = (values[:, nz] - lo[nz]) / span[nz]
    scalar = normed.max(axis=1)
    fronts = fast_nondominated_sort(-values)
    front_index = np.empty(values.shape[0], dtype=int)
    for rank, front in enumerate(fronts):
        front_index[front] = rank
    return scalar, front_index


def apply_thresholds(scalar: np.ndarray, front_index: np.ndarray,
                     config: SelectionConfig,
                     ids: Sequence[int] | None = None,
                     eligible: np.ndarray | None = None) -> list[int]:
    """Threshold battery over aggregated scalars.

    A candidate passes when it satisfies every present threshold (relative
    value, Pareto front), then the fixed-count cap keeps the top m_fixed by
    scalar with ties broken by lower id.  Ineligible rows (already-evaluated
    phenotypes) never pass.  Returns selected ids in ascending order.
    """
    scalar = np.asarray(scalar, dtype=float)
    n = scalar.shape[0]
    ids = list(range(n)) if ids is None else list(ids)
    mask = np.ones(n, dtype=bool) if eligible is None else np.asarray(eligible,
                                                                      dtype=bool).copy()
    if config.m_rel is not None:
        mask &= scalar >= config.m_rel
    if config.m_pareto is not None:
        mask &= np.asarray(front_index) < config.m_pareto
    passing = [i for i in range(n) if mask[i]]
    if config.m_fixed is not None:
        passing.sort(key=lambda i: (-scalar[i], ids[i]))
        passing = passing[:config.m_fixed]
    return sorted(ids[i] for i in passing)


def _finite_rows(points: np.ndarray) -> np.ndarray:
    return np.all(np.isfinite(points), axis=1)


def _identity(mean: np.ndarray) -> np.ndarray:
    return np.asarray(mean, dtype=float)


def select_generation(gen_index: int,
                      population: Sequence[Candidate],
                      model: MultiGp | None,
                      history: SelectionHistory,
                      config: SelectionConfig,
                      rng: np.random.Generator,
                      mean_to_objective: Callable[[np.ndarray], np.ndarray] = _identity,
                      ) -> SelectionDecision:
    """Decide expensive evaluations for one generation and fill the rest of
    the population with surrogate predictions.

    mean_to_objective maps a vector of GP-space posterior means back to raw
    objective units (identity unless the run regresses transformed errors).
    Selected candidates are left untouched for the evaluator; every other
    candidate with a usable embedding gets predicted objectives and
    provenance "surrogate".
    """
    if gen_index < 0:
        raise SelectionContractError("generation index must be >= 0")
    n = len(population)
    ids = [c.id for c in population]
    if len(set(ids)) != n:
        raise SelectionContractError("population ids must be unique")
    dim = len(population[0].embedding_norm) if n else 0
    emb = np.full((n, dim), np.nan)
    for i, cand in enumerate(population):
        if cand.embedding_norm is not None:
            emb[i] = np.asarray(cand.embedding_norm, dtype=float)
    finite = _finite_rows(emb)

    if gen_index == 0:
        selected = sorted(ids[i] for i in np.flatnonzero(finite)
                          if population[i].phenotype_keys not in history.evaluated_keys)
        return SelectionDecision(selected_ids=selected,
                                 values=np.empty((n, 0)),
                                 scalar=np.full(n, np.nan),
                                 weights=np.full(n, np.nan),
                                 front_index=np.full(n, -1, dtype=int))

    if model is None:
        raise SelectionContractError(
            f"generation {gen_index} needs a fitted surrogate")
    if config.has_threshold() is False and gen_index >= 2:
        raise SelectionContractError(
            "generations >= 2 need at least one of m_fixed, m_rel, m_pareto")

    p = model.n_objectives
    means = np.full((n, p), np.nan)
    stds = np.full((n, p), np.nan)
    if np.any(finite):
        fin_idx = np.flatnonzero(finite)
        m, v = predict_multi_batch(model, emb[fin_idx])
        means[fin_idx] = m
        stds[fin_idx] = np.sqrt(v)

    # Eligibility: usable embedding, phenotype not already evaluated, first
    # occurrence of its key within this generation.
    eligible = finite.copy()
    seen = set(history.evaluated_keys)
    for i, cand in enumerate(population):
        if not finite[i]:
            continue
        if cand.phenotype_keys in seen:
            eligible[i] = False
        else:
            seen.add(cand.phenotype_keys)

    weights = np.full(n, np.nan)
    values = np.full((n, p), np.nan)
    scalar = np.full(n, np.nan)
    front_index = np.full(n, -1, dtype=int)
    fin_idx = np.flatnonzero(finite)
    if fin_idx.size:
        weights[fin_idx] = convergence_weights(emb[fin_idx],
                                               history.converged_points,
                                               history.diverged_points,
                                               config.delta)
        if config.metric == "lcb":
            raw = lcb(means[fin_idx], stds[fin_idx], config.beta)
        else:
            best = model.best_observed()
            raw = np.column_stack([ei(means[fin_idx, j], stds[fin_idx, j],
                                      float(best[j]), config.xi)
                                   for j in range(p)])
        values[fin_idx] = raw * weights[fin_idx, None]
        sc, fr = aggregate_multiobjective(values[fin_idx])
        scalar[fin_idx] = sc
        front_index[fin_idx] = fr

    if gen_index == 1:
        selected = _initial_sampling(emb, finite, eligible, scalar, ids,
                                     history, config, rng)
    else:
        selected = apply_thresholds(scalar, front_index, config, ids=ids,
                                    eligible=eligible)

    predicted: dict[int, np.ndarray] = {}
    selected_set = set(selected)
    for i in fin_idx:
        pred = mean_to_objective(means[i])
        predicted[ids[i]] = np.asarray(pred, dtype=float)
        if ids[i] not in selected_set:
            cand = population[i]
            cand.objectives = np.asarray(pred, dtype=float).copy()
            cand.provenance = "surrogate"
            cand.converged = True
    return SelectionDecision(selected_ids=selected, values=values,
                             scalar=scalar, weights=weights,
                             front_index=front_index, predicted=predicted)


def _initial_sampling(emb: np.ndarray, finite: np.ndarray,
                      eligible: np.ndarray, scalar: np.ndarray,
                      ids: Sequence[int], history: SelectionHistory,
                      config: SelectionConfig,
                      rng: np.random.Generator) -> list[int]:
    """Generation-1 warm-up: Halton points over the history bounding box,
    each claiming its nearest unclaimed candidate."""
    hist = history.all_points()
    if hist.size == 0:
        raise SelectionContractError(
            "initial sampling needs a non-empty history")
    pool = [i for i in np.flatnonzero(eligible)]
    if not pool:
        return []
    lo = hist.min(axis=0)
    hi = hist.max(axis=0)
    sampler = qmc.Halton(d=emb.shape[1], scramble=True,
                         seed=int(rng.integers(2 ** 31 - 1)))
    points = lo + (hi - lo) * sampler.random(config.n_init)
    picks: list[int] = []
    remaining = list(pool)
    for point in points:
        if not remaining:
            break
        dists = cdist(point[None, :], emb[remaining])[0]
        best_pos = min(range(len(remaining)),
                       key=lambda k: (dists[k], ids[remaining[k]]))
        picks.append(remaining.pop(best_pos))
    if config.m_init_rel is not None:
        picks = [i for i in picks if scalar[i] >= config.m_init_rel]
    return sorted(ids[i] for i in picks)
