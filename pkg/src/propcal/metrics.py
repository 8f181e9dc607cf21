"""Empirical loss functions over category tables.

Three losses are computed on a dataset, a group collection, and a
discretization:

* ``mc_loss``  -- max over qualifying categories of ``|ybar - rbar|``
  (absolute calibration error).
* ``pmc_loss`` -- max over qualifying categories with ``ybar >= rho`` of
  ``|ybar - rbar| / ybar`` (calibration error as a fraction of the
  category's outcome prevalence).
* ``dc_loss``  -- max over pairs of qualifying categories sharing a
  prediction bin of ``|ln(ybar_a / ybar_b)|`` (log outcome-prevalence
  ratio at equal predictions).

A category qualifies when its count reaches ``alpha * lam * N``.  When no
category (or pair) passes the filters the result is an explicit undefined
variant, never a silent zero.  All maxima break ties toward the lowest
(group_id, bin_index), so results do not depend on evaluation order.

The module also provides a tie-corrected rank AUROC and per-group
calibration curves for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import (
    MASS_FILTER_SLACK,
    AuditDataset,
    Category,
    ConfigurationError,
    Discretization,
    GroupCollection,
    category_stats,
)


@dataclass(frozen=True)
class LossResult:
    """Outcome of one loss computation.

    ``value`` is ``None`` for the undefined variant, in which case
    ``reason`` explains which filter emptied the candidate set.  ``witness``
    is the category (or category pair, for the differential loss) attaining
    the maximum.
    """

    value: float | None
    witness: Category | tuple[Category, Category] | None
    n_categories_considered: int
    filter_params: Mapping[str, float] = field(default_factory=dict)
    reason: str | None = None

    @property
    def defined(self) -> bool:
        return self.value is not None


def _undefined(reason: str, considered: int, params: Mapping[str, float]) -> LossResult:
    return LossResult(
        value=None,
        witness=None,
        n_categories_considered=considered,
        filter_params=dict(params),
        reason=reason,
    )


def _count_threshold(alpha: float, lam: float, n_rows: int) -> float:
    return alpha * lam * n_rows - MASS_FILTER_SLACK


def mc_loss(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    alpha: float,
    gamma: float,
    exact_mode: bool = False,
) -> LossResult:
    """Worst absolute calibration error over qualifying categories.

    ``gamma`` is echoed in ``filter_params`` for provenance; the groups are
    expected to have been enumerated with that mass threshold already.
    """
    params = {"alpha": alpha, "lambda": disc.lam, "gamma": gamma}
    table = category_stats(dataset, groups, disc, exact_mode=exact_mode)
    threshold = _count_threshold(alpha, disc.lam, table.n_rows)
    candidates = [c for c in table if c.n >= threshold]
    if not candidates:
        return _undefined("no category reaches the mass filter n >= alpha*lambda*N", 0, params)
    best = candidates[0]
    best_value = abs(best.ybar - best.rbar)
    for cat in candidates[1:]:
        value = abs(cat.ybar - cat.rbar)
        if value > best_value:
            best, best_value = cat, value
    return LossResult(
        value=best_value,
        witness=best,
        n_categories_considered=len(candidates),
        filter_params=params,
    )


def pmc_loss(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    alpha: float,
    gamma: float,
    rho: float,
    exact_mode: bool = False,
) -> LossResult:
    """Worst proportional calibration error over qualifying categories.

    Categories with outcome prevalence below ``rho`` are dropped; the ratio
    ``|ybar - rbar| / ybar`` is undefined there and the boosting cutoff
    treats them separately.
    """
    if rho <= 0:
        raise ConfigurationError(f"rho must be positive, got {rho}")
    params = {"alpha": alpha, "lambda": disc.lam, "gamma": gamma, "rho": rho}
    table = category_stats(dataset, groups, disc, exact_mode=exact_mode)
    threshold = _count_threshold(alpha, disc.lam, table.n_rows)
    candidates = [c for c in table if c.n >= threshold and c.ybar >= rho]
    if not candidates:
        return _undefined(
            "no category reaches both the mass filter n >= alpha*lambda*N and ybar >= rho",
            0,
            params,
        )
    best = candidates[0]
    best_value = abs(best.ybar - best.rbar) / best.ybar
    for cat in candidates[1:]:
        value = abs(cat.ybar - cat.rbar) / cat.ybar
        if value > best_value:
            best, best_value = cat, value
    return LossResult(
        value=best_value,
        witness=best,
        n_categories_considered=len(candidates),
        filter_params=params,
    )


def dc_loss(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    alpha: float,
    gamma: float,
    exact_mode: bool = False,
) -> LossResult:
    """Worst log outcome-prevalence ratio between same-bin category pairs.

    Pairs range over qualifying categories with positive prevalence that
    share a prediction bin (both groups conditioned on the same prediction).
    The diagonal pair contributes zero, so a single-group collection scores
    0 rather than undefined; undefined only occurs when no category
    qualifies at all.
    """
    params = {"alpha": alpha, "lambda": disc.lam, "gamma": gamma}
    table = category_stats(dataset, groups, disc, exact_mode=exact_mode)
    threshold = _count_threshold(alpha, disc.lam, table.n_rows)
    candidates = [c for c in table if c.n >= threshold and c.ybar > 0.0]
    if not candidates:
        return _undefined(
            "no category with positive outcome prevalence reaches the mass filter",
            0,
            params,
        )
    by_bin: dict[int, list[Category]] = {}
    for cat in candidates:
        by_bin.setdefault(cat.bin_index, []).append(cat)
    best_pair = (candidates[0], candidates[0])
    best_value = 0.0
    for bin_index in sorted(by_bin):
        cats = by_bin[bin_index]
        for i in range(len(cats)):
            for j in range(i + 1, len(cats)):
                value = abs(math.log(cats[i].ybar / cats[j].ybar))
                if value > best_value:
                    best_pair, best_value = (cats[i], cats[j]), value
    return LossResult(
        value=best_value,
        witness=best_pair,
        n_categories_considered=len(candidates),
        filter_params=params,
    )


# ---------------------------------------------------------------------------
# Auxiliary evaluation metrics
# ---------------------------------------------------------------------------


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    boundaries = np.flatnonzero(np.r_[True, sorted_values[1:] != sorted_values[:-1], True])
    sizes = np.diff(boundaries)
    average = boundaries[:-1] + (sizes + 1) / 2.0
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = np.repeat(average, sizes)
    return ranks


def auroc(dataset: AuditDataset, scores: np.ndarray | None = None) -> float | None:
    """Rank-based (Mann-Whitney) AUROC with tie correction.

    Tied score pairs contribute one half.  Returns ``None`` on a
    single-class dataset, where the statistic is undefined.  ``scores``
    overrides the dataset's own scores (e.g. to evaluate post-processed
    predictions against the same outcomes).
    """
    y = dataset.y
    s = dataset.scores if scores is None else np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def calibration_curve(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    exact_mode: bool = False,
) -> dict[int, list[tuple[float, float, int]]]:
    """Per-group calibration points (rbar, ybar, n), one per nonempty bin.

    A projection of the category table: empty bins are simply absent, which
    renders as gaps in a reliability plot.
    """
    table = category_stats(dataset, groups, disc, exact_mode=exact_mode)
    curves: dict[int, list[tuple[float, float, int]]] = {g.id: [] for g in groups}
    for cat in table:
        curves[cat.group_id].append((cat.rbar, cat.ybar, cat.n))
    return curves
