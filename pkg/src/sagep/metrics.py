"""Efficiency metrics: Pareto fronts, exact hypervolume, coverage, ratios.

All objective vectors are minimized.  Hypervolume is computed exactly: a
sweep for two objectives, inclusion-exclusion over point subsets for three
or four (desk-scale fronts only; the subset enumeration is exponential in
the front size, so it is capped).  Coverage normalizes hypervolume by the
axis-aligned box between the front's own ideal and reference points, which
makes runs comparable only when they share a reference; compare_coverage
provides that shared-reference variant for cross-run curves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "pareto_front",
    "hypervolume",
    "hypervolume_coverage",
    "compare_coverage",
    "selection_ratio",
    "surrogate_relative_error",
    "RunMetrics",
    "GenerationMetrics",
    "emit_report",
]

_MAX_INCLUSION_EXCLUSION = 20


def pareto_front(points: np.ndarray) -> np.ndarray:
    """Non-dominated subset of the rows, deduplicated and sorted."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return pts.reshape(0, pts.shape[1] if pts.ndim == 2 else 0)
    pts = np.unique(pts, axis=0)
    keep = []
    for i in range(pts.shape[0]):
        dominated = False
        for j in range(pts.shape[0]):
            if i == j:
                continue
            if np.all(pts[j] <= pts[i]) and np.any(pts[j] < pts[i]):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return pts[keep]


def _hv_2d(points: np.ndarray, ref: np.ndarray) -> float:
    pts = points[np.all(points < ref, axis=1)]
    if pts.shape[0] == 0:
        return 0.0
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    area = 0.0
    prev_y = ref[1]
    for x, yv in pts:
        if yv < prev_y:
            area += (ref[0] - x) * (prev_y - yv)
            prev_y = yv
    return float(area)


def _hv_inclusion_exclusion(points: np.ndarray, ref: np.ndarray) -> float:
    pts = points[np.all(points < ref, axis=1)]
    n = pts.shape[0]
    if n == 0:
        return 0.0
    if n > _MAX_INCLUSION_EXCLUSION:
        raise ValueError(
            f"inclusion-exclusion hypervolume capped at "
            f"{_MAX_INCLUSION_EXCLUSION} points, got {n}")
    total = 0.0
    for mask in range(1, 1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        corner = np.max(pts[members], axis=0)
        volume = float(np.prod(ref - corner))
        total += volume if len(members) % 2 == 1 else -volume
    return total


def hypervolume(points: np.ndarray, ref: np.ndarray) -> float:
    """Exact volume (minimization) dominated by the points up to ref."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ref = np.asarray(ref, dtype=float).ravel()
    if pts.shape[0] == 0:
        return 0.0
    if pts.shape[1] != ref.shape[0]:
        raise ValueError("points and reference dimension mismatch")
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(ref))):
        raise ValueError("hypervolume inputs must be finite")
    p = pts.shape[1]
    if p == 1:
        best = float(np.min(pts))
        return max(0.0, float(ref[0]) - best)
    if p == 2:
        return _hv_2d(pareto_front(pts), ref)
    if p <= 4:
        return _hv_inclusion_exclusion(pareto_front(pts), ref)
    raise ValueError(f"exact hypervolume supports up to 4 objectives, got {p}")


def hypervolume_coverage(front: np.ndarray) -> float:
    """Fraction of the front's own ideal-to-reference box it dominates.

    Reference = componentwise max of the non-dominated subset, ideal =
    componentwise min; a degenerate box (any reference component equal to
    the ideal one) gives coverage 0.
    """
    pts = np.atleast_2d(np.asarray(front, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("coverage of an empty front is undefined")
    if not np.all(np.isfinite(pts)):
        raise ValueError("coverage needs finite objective vectors")
    nd = pareto_front(pts)
    ref = nd.max(axis=0)
    ideal = nd.min(axis=0)
    box = float(np.prod(ref - ideal))
    if np.any(ref == ideal) or box <= 0.0:
        return 0.0
    return hypervolume(nd, ref) / box


def compare_coverage(fronts: Sequence[np.ndarray]) -> list[float]:
    """Coverage of several fronts against one shared reference box.

    The reference is the componentwise max over the union of the fronts'
    non-dominated subsets, the ideal the componentwise min, so the returned
    values are directly comparable across runs.
    """
    if not fronts:
        raise ValueError("no fronts to compare")
    nds = [pareto_front(np.atleast_2d(np.asarray(f, dtype=float)))
           for f in fronts]
    union = np.vstack(nds)
    ref = union.max(axis=0)
    ideal = union.min(axis=0)
    box = float(np.prod(ref - ideal))
    if np.any(ref == ideal) or box <= 0.0:
        return [0.0 for _ in nds]
    return [hypervolume(nd, ref) / box for nd in nds]


def selection_ratio(records: Sequence) -> float:
    """Share of candidates that went to expensive evaluation."""
    total = len(records)
    if total == 0:
        raise ValueError("no records")
    expensive = sum(1 for r in records if r.provenance == "expensive")
    return expensive / total


def surrogate_relative_error(truth: dict[int, np.ndarray],
                             predicted: dict[int, np.ndarray]) -> float:
    """Mean relative prediction error |mu - t| / |t| over ids present in
    both maps, averaged across objectives; zero-truth components are
    skipped.  Returns 0.0 when no pair exists (nothing was predicted)."""
    errors: list[float] = []
    for cid, pred in predicted.items():
        if cid not in truth:
            continue
        t = np.asarray(truth[cid], dtype=float)
        mu = np.asarray(pred, dtype=float)
        mask = t != 0.0
        if not np.any(mask):
            continue
        errors.append(float(np.mean(np.abs(mu[mask] - t[mask]) / np.abs(t[mask]))))
    return float(np.mean(errors)) if errors else 0.0


@dataclass
class GenerationMetrics:
    """One reporting row of a run."""

    generation: int
    expensive_cumulative: int
    coverage: float
    selection_ratio: float
    relative_error: float
    best_objectives: tuple[float, ...]


@dataclass
class RunMetrics:
    """Per-generation metric rows plus run-level summary values."""

    rows: list[GenerationMetrics] = field(default_factory=list)
    final_selection_ratio: float = 0.0
    final_relative_error: float = 0.0

    def append(self, row: GenerationMetrics) -> None:
        if self.rows and row.expensive_cumulative < self.rows[-1].expensive_cumulative:
            raise ValueError("cumulative expensive count must not decrease")
        self.rows.append(row)

    @property
    def final_coverage(self) -> float:
        return self.rows[-1].coverage if self.rows else 0.0

    @property
    def total_expensive(self) -> int:
        return self.rows[-1].expensive_cumulative if self.rows else 0


def emit_report(metrics: RunMetrics, out_dir: str | Path) -> tuple[Path, Path]:
    """Write metrics.csv and summary.txt; byte-identical on re-emission."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "metrics.csv"
    p = len(metrics.rows[0].best_objectives) if metrics.rows else 0
    header = (["generation", "expensive_cumulative", "coverage",
               "selection_ratio", "relative_error"]
              + [f"best_objective_{k}" for k in range(p)])
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in metrics.rows:
            writer.writerow([row.generation, row.expensive_cumulative,
                             repr(row.coverage), repr(row.selection_ratio),
                             repr(row.relative_error)]
                            + [repr(v) for v in row.best_objectives])
    summary_path = out_dir / "summary.txt"
    lines = [
        f"generations: {len(metrics.rows)}",
        f"expensive evaluations: {metrics.total_expensive}",
        f"final coverage: {metrics.final_coverage!r}",
        f"final selection ratio: {metrics.final_selection_ratio!r}",
        f"final relative error: {metrics.final_relative_error!r}",
    ]
    summary_path.write_text("\n".join(lines) + "\n")
    return csv_path, summary_path
