"""Closed-form relationships between the calibration criteria, with
randomized empirical verifiers.

Bound functions
---------------
* ``mc_to_dc_bound(alpha, r_min)``: an absolutely calibrated model
  (error <= alpha everywhere) has log outcome-ratio at most
  ``ln((r_min + alpha) / (r_min - alpha))``, where ``r_min`` is the lowest
  mean prediction among the audited categories.  Undefined when
  ``r_min <= alpha``: low-risk categories void the guarantee.
* ``pmc_to_dc_bound(alpha)``: proportional calibration at level alpha
  bounds the log outcome-ratio by ``ln((1 + alpha) / (1 - alpha))``,
  independent of the risk level.
* ``pmc_to_mc_bound(alpha)``: proportional calibration at level alpha
  implies absolute calibration at ``alpha / (1 - alpha)``.
* ``dc_to_mc_bound(epsilon, delta)``: a model with log outcome-ratio at
  most epsilon that is also globally calibrated to within delta is
  absolutely calibrated at ``1 - exp(-epsilon) + delta``.
* ``pmc_discretization_bound_uniform(alpha, lam, rho)``: binned
  proportional calibration at (alpha, lam) implies unbinned proportional
  calibration at ``alpha + lam / rho`` under uniform bins.
* ``pmc_discretization_bound_geometric(alpha, lam, rho)``: the geometric
  analogue, ``alpha * rho**(-lam) + rho**(-lam) - 1``.

Verifiers
---------
``verify_bound`` hunts for counterexamples on randomized small datasets.
Both sides of each bound are computed over one shared qualifying-category
set, and scores are drawn from the bin-center grid so that categories
sharing a bin share their mean prediction exactly -- the conditioning the
theorems assume.  A reported violation (beyond 1e-9 slack) therefore
indicates a real defect, not discretization slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MASS_FILTER_SLACK,
    AuditDataset,
    ConfigurationError,
    Discretization,
    GroupCollection,
    category_stats,
    enumerate_groups,
    make_discretization,
)

VERIFIABLE_BOUNDS = ("mc_to_dc", "pmc_to_dc", "pmc_to_mc", "efficiency")

_SLACK = 1e-9


# ---------------------------------------------------------------------------
# Closed-form bounds
# ---------------------------------------------------------------------------


def mc_to_dc_bound(alpha: float, r_min: float) -> float | None:
    """Log outcome-ratio implied by absolute calibration at ``alpha``.

    Returns ``None`` when ``r_min <= alpha``, where the ratio is unbounded.
    """
    if alpha < 0:
        raise ConfigurationError("alpha must be nonnegative")
    if r_min <= alpha:
        return None
    return math.log((r_min + alpha) / (r_min - alpha))


def pmc_to_dc_bound(alpha: float) -> float | None:
    """Log outcome-ratio implied by proportional calibration at ``alpha``."""
    if alpha < 0:
        raise ConfigurationError("alpha must be nonnegative")
    if alpha >= 1:
        return None
    return math.log((1 + alpha) / (1 - alpha))


def pmc_to_mc_bound(alpha: float) -> float | None:
    """Absolute calibration level implied by proportional calibration."""
    if alpha < 0:
        raise ConfigurationError("alpha must be nonnegative")
    if alpha >= 1:
        return None
    return alpha / (1 - alpha)


def dc_to_mc_bound(epsilon: float, delta: float) -> float:
    """Absolute calibration implied by a log-ratio bound plus global calibration."""
    if epsilon < 0 or delta < 0:
        raise ConfigurationError("epsilon and delta must be nonnegative")
    return 1.0 - math.exp(-epsilon) + delta


def pmc_discretization_bound_uniform(alpha: float, lam: float, rho: float) -> float:
    """Unbinned proportional level implied by uniform-bin proportional level."""
    if alpha < 0 or lam < 0:
        raise ConfigurationError("alpha and lambda must be nonnegative")
    if rho <= 0 and lam > 0:
        raise ConfigurationError("rho must be positive when lambda > 0")
    if lam == 0:
        return alpha
    return alpha + lam / rho


def pmc_discretization_bound_geometric(alpha: float, lam: float, rho: float) -> float:
    """Unbinned proportional level implied by geometric-bin proportional level."""
    if alpha < 0 or lam < 0:
        raise ConfigurationError("alpha and lambda must be nonnegative")
    if lam == 0:
        return alpha
    if not (0 < rho < 1):
        raise ConfigurationError("rho must be in (0, 1) when lambda > 0")
    factor = rho ** (-lam)
    return alpha * factor + factor - 1.0


# ---------------------------------------------------------------------------
# Bound curves (plot data)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundCurve:
    """A bound evaluated on a parameter grid, with a validity mask."""

    name: str
    grid: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 1 or (np.diff(grid) <= 0).any():
            raise ConfigurationError("grid must be strictly increasing")
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != grid.shape or mask.shape != grid.shape:
            raise ConfigurationError("values and mask must match the grid shape")
        if not (np.isfinite(values) == mask).all():
            raise ConfigurationError("values must be finite exactly where mask is true")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)


def bound_curve(
    name: str,
    grid: np.ndarray,
    r_min: float | None = None,
    delta: float | None = None,
    alpha: float | None = None,
    rho: float | None = None,
) -> BoundCurve:
    """Evaluate a named bound over a grid of its leading parameter.

    Grid meaning by curve: ``pmc_to_mc``/``pmc_to_dc`` -- alpha;
    ``mc_to_dc`` -- alpha at fixed ``r_min``; ``dc_to_mc`` -- epsilon at
    fixed ``delta``; ``disc_uniform``/``disc_geometric`` -- lambda at fixed
    ``alpha`` and ``rho``.
    """
    grid = np.asarray(grid, dtype=np.float64)

    def need(value, flag: str):
        if value is None:
            raise ConfigurationError(f"curve {name!r} requires {flag}")
        return value

    if name == "pmc_to_mc":
        points = [pmc_to_mc_bound(x) for x in grid]
    elif name == "pmc_to_dc":
        points = [pmc_to_dc_bound(x) for x in grid]
    elif name == "mc_to_dc":
        fixed = need(r_min, "r_min")
        points = [mc_to_dc_bound(x, fixed) for x in grid]
    elif name == "dc_to_mc":
        fixed = need(delta, "delta")
        points = [dc_to_mc_bound(x, fixed) for x in grid]
    elif name == "disc_uniform":
        a, r = need(alpha, "alpha"), need(rho, "rho")
        points = [pmc_discretization_bound_uniform(a, x, r) for x in grid]
    elif name == "disc_geometric":
        a, r = need(alpha, "alpha"), need(rho, "rho")
        points = [pmc_discretization_bound_geometric(a, x, r) for x in grid]
    else:
        raise ConfigurationError(f"unknown bound curve {name!r}")
    values = np.array([math.nan if v is None else v for v in points])
    mask = np.array([v is not None for v in points])
    return BoundCurve(name=name, grid=grid, values=values, mask=mask)


def constraint_bands(alpha: float, rho: float, grid: np.ndarray) -> dict[str, BoundCurve]:
    """Maximum allowed |score - prevalence| per criterion, over prevalence.

    The absolute criterion permits a constant deviation ``alpha``; the
    proportional criterion permits ``alpha * max(p, rho)``, constant below
    the prevalence floor ``rho``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    ones = np.ones_like(grid, dtype=bool)
    mc = np.full_like(grid, float(alpha))
    pmc = alpha * np.maximum(grid, rho)
    return {
        "mc": BoundCurve(name="mc", grid=grid, values=mc, mask=ones),
        "pmc": BoundCurve(name="pmc", grid=grid, values=pmc, mask=ones),
    }


# ---------------------------------------------------------------------------
# Shared-category empirical losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SharedLosses:
    """The three losses computed over one shared qualifying-category set.

    Qualification: category count >= alpha*lambda*N, plus ``ybar >= rho``
    when a prevalence floor is given.  The differential loss pairs
    categories of the same bin within this set, skipping zero-prevalence
    categories (their log-ratio is undefined).
    """

    mc: float | None
    pmc: float | None
    dc: float | None
    r_min: float | None
    n_categories: int


def shared_losses(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    alpha: float,
    rho: float | None = None,
) -> SharedLosses:
    table = category_stats(dataset, groups, disc)
    threshold = alpha * disc.lam * table.n_rows - MASS_FILTER_SLACK
    cats = [c for c in table if c.n >= threshold]
    if rho is not None:
        cats = [c for c in cats if c.ybar >= rho]
    if not cats:
        return SharedLosses(mc=None, pmc=None, dc=None, r_min=None, n_categories=0)
    mc = max(abs(c.ybar - c.rbar) for c in cats)
    pmc = max((abs(c.ybar - c.rbar) / c.ybar for c in cats if c.ybar > 0), default=None)
    if any(c.ybar <= 0 for c in cats):
        pmc = None
    r_min = min(c.rbar for c in cats)
    by_bin: dict[int, list[float]] = {}
    for c in cats:
        if c.ybar > 0:
            by_bin.setdefault(c.bin_index, []).append(c.ybar)
    dc = 0.0
    for values in by_bin.values():
        if len(values) > 1:
            dc = max(dc, abs(math.log(max(values) / min(values))))
    return SharedLosses(mc=mc, pmc=pmc, dc=dc, r_min=r_min, n_categories=len(cats))


# ---------------------------------------------------------------------------
# Randomized verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundViolation:
    trial: int
    lhs: float
    rhs: float
    detail: str

    @property
    def excess(self) -> float:
        return self.lhs - self.rhs


@dataclass(frozen=True)
class BoundCheckReport:
    bound_id: str
    trials: int
    evaluated: int
    violations: tuple[BoundViolation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


def _random_trial_dataset(
    rng: np.random.Generator,
    n_attrs: int,
    score_low: float,
    calibration_noise: float,
) -> tuple[AuditDataset, Discretization]:
    """Small random dataset with scores snapped to bin centers.

    Outcome rates are per-(intersection, bin) perturbations of the bin
    center, so categories range from near-calibrated to clearly off while
    same-bin categories still share their mean prediction exactly.
    """
    n = int(rng.integers(200, 501))
    lam = float(rng.choice([0.1, 0.2, 0.25]))
    disc = make_discretization("uniform", lam)
    centers = (disc.edges[:-1] + disc.edges[1:]) / 2.0

    attrs = {}
    for a in range(n_attrs):
        n_levels = int(rng.integers(2, 4))
        attrs[f"a{a}"] = rng.choice([f"v{k}" for k in range(n_levels)], size=n)
    combo = np.zeros(n, dtype=np.int64)
    for col in attrs.values():
        _, codes = np.unique(col, return_inverse=True)
        combo = combo * 8 + codes

    raw = rng.uniform(score_low, 1.0, size=n)
    bin_idx = disc.bin_of(raw)
    scores = centers[bin_idx]

    # One outcome rate per (intersection, bin) cell, offset from the center.
    cell = combo * disc.n_bins + bin_idx
    offsets = {c: rng.uniform(-calibration_noise, calibration_noise) for c in np.unique(cell)}
    rate = np.clip(centers[bin_idx] + np.array([offsets[c] for c in cell]), 0.02, 0.98)
    y = (rng.random(n) < rate).astype(np.int8)
    return AuditDataset(y=y, scores=scores, attrs=attrs, p_star=rate), disc


def verify_bound(bound_id: str, trials: int, seed: int) -> BoundCheckReport:
    """Search randomized small datasets for violations of a named bound.

    ``bound_id`` is one of ``mc_to_dc``, ``pmc_to_dc``, ``pmc_to_mc``
    (theorem consistency on shared qualifying categories) or
    ``efficiency`` (worst absolute error over a marginal collection never
    exceeds the intersectional collection that generated it).  Trials where
    a bound's hypothesis fails (e.g. proportional loss >= 1) are skipped
    and not counted as evaluated.
    """
    if bound_id not in VERIFIABLE_BOUNDS:
        raise ConfigurationError(f"unknown bound_id {bound_id!r}; choose from {VERIFIABLE_BOUNDS}")
    if trials < 1:
        raise ConfigurationError("trials must be at least 1")
    children = np.random.SeedSequence(seed).spawn(trials)
    evaluated = 0
    violations: list[BoundViolation] = []

    for trial, child in enumerate(children):
        rng = np.random.default_rng(child)
        if bound_id == "efficiency":
            dataset, disc = _random_trial_dataset(
                rng, n_attrs=int(rng.integers(2, 4)), score_low=0.0, calibration_noise=0.45
            )
            basis = sorted(dataset.attrs)
            inter = enumerate_groups(dataset, basis, include_marginals=False, gamma=0.0)
            marg = enumerate_groups(dataset, basis, include_marginals=True, gamma=0.0)
            # alpha=0 disables the count filter: with filtering, a marginal
            # cell can qualify while the intersectional cells it unions do
            # not, and the subsumption argument no longer applies.
            lhs = shared_losses(dataset, marg, disc, alpha=0.0).mc
            rhs = shared_losses(dataset, inter, disc, alpha=0.0).mc
            evaluated += 1
            if lhs > rhs + _SLACK:
                violations.append(BoundViolation(trial, lhs, rhs, "marginal mc exceeds intersectional mc"))
            continue

        if bound_id == "mc_to_dc":
            dataset, disc = _random_trial_dataset(
                rng, n_attrs=int(rng.integers(1, 3)), score_low=0.4, calibration_noise=0.05
            )
            groups = enumerate_groups(dataset, sorted(dataset.attrs), gamma=0.0)
            losses = shared_losses(dataset, groups, disc, alpha=0.2)
            if losses.n_categories == 0 or losses.r_min is None:
                continue
            bound = mc_to_dc_bound(losses.mc, losses.r_min)
            if bound is None:
                continue
            evaluated += 1
            if losses.dc > bound + _SLACK:
                violations.append(BoundViolation(trial, losses.dc, bound, f"r_min={losses.r_min:.4f} mc={losses.mc:.4f}"))
            continue

        # pmc_to_dc / pmc_to_mc share the trial shape and the rho filter.
        dataset, disc = _random_trial_dataset(
            rng, n_attrs=int(rng.integers(1, 3)), score_low=0.3, calibration_noise=0.08
        )
        groups = enumerate_groups(dataset, sorted(dataset.attrs), gamma=0.0)
        losses = shared_losses(dataset, groups, disc, alpha=0.1, rho=0.1)
        if losses.pmc is None or losses.pmc >= 1.0:
            continue
        if bound_id == "pmc_to_mc":
            bound = pmc_to_mc_bound(losses.pmc)
            lhs = losses.mc
            detail = f"pmc={losses.pmc:.4f}"
        else:
            bound = pmc_to_dc_bound(losses.pmc)
            lhs = losses.dc
            detail = f"pmc={losses.pmc:.4f}"
        evaluated += 1
        if lhs > bound + _SLACK:
            violations.append(BoundViolation(trial, lhs, bound, detail))

    return BoundCheckReport(bound_id=bound_id, trials=trials, evaluated=evaluated, violations=tuple(violations))
