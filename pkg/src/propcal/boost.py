"""Iterative post-processing of risk scores toward category outcome means.

The engine sweeps (group, bin) categories in canonical order and, whenever
a category's mean prediction is far enough from its mean outcome, shifts
every member's score by the residual and clamps to [0, 1].  Sweeps repeat
until a full pass makes no update or ``max_passes`` is reached.

Two cutoff rules are supported:

* proportional mode (``pmc``): update when ``|ybar - rbar| >= alpha*ybar``,
  or ``alpha*rho`` for categories whose prevalence falls below ``rho`` (so
  near-zero-prevalence cells cannot demand unbounded relative precision);
* absolute mode (``mc``): update when ``|ybar - rbar| >= alpha``.

Only categories whose joint mass reaches ``alpha*lam*gamma`` are visited.
Category membership and statistics are recomputed from the current scores
at the start of each visit, so earlier updates within a pass are visible
to later categories; this also makes overlapping (marginal) collections
safe.  The loop is deterministic given (dataset, config): optional per-pass
subsampling is driven by a seeded generator.

In exact mode (``ybar`` taken from the true rates ``p_star``) each
unclamped update provably decreases ``sum((p_star - score)^2)`` by exactly
``n * delta_r^2``; the per-update potential drop is recorded on the trace
so tests can assert the descent directly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import (
    MASS_FILTER_SLACK,
    AuditDataset,
    ConfigurationError,
    Discretization,
    GroupCollection,
)

BOOST_MODES = ("pmc", "mc")


@dataclass(frozen=True)
class BoostConfig:
    """Parameters of one post-processing run."""

    mode: str
    alpha: float
    lam: float
    gamma: float
    rho: float = 0.01
    max_passes: int = 100
    sample_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in BOOST_MODES:
            raise ConfigurationError(f"mode must be one of {BOOST_MODES}, got {self.mode!r}")
        for name in ("alpha", "lam", "gamma", "rho"):
            value = getattr(self, name)
            if not (0 < value < 1):
                raise ConfigurationError(f"{name} must be in (0, 1), got {value}")
        if self.max_passes < 1:
            raise ConfigurationError("max_passes must be at least 1")
        if not (0 < self.sample_fraction <= 1):
            raise ConfigurationError("sample_fraction must be in (0, 1]")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")


@dataclass(frozen=True)
class CategoryUpdate:
    """One applied update: which category moved, by how much, and why."""

    group_id: int
    bin_index: int
    delta_r: float
    cutoff: float
    n: int
    n_clamped: int
    potential_drop: float | None = None


@dataclass(frozen=True)
class PassRecord:
    index: int
    updates: tuple[CategoryUpdate, ...]

    @property
    def converged(self) -> bool:
        return not self.updates


@dataclass(frozen=True)
class UpdateTrace:
    """Per-pass log of all applied updates.

    ``wall_time`` is an in-memory diagnostic only; it is excluded from
    :meth:`to_dict` so serialized artifacts stay byte-deterministic.
    """

    passes: tuple[PassRecord, ...]
    wall_time: float = 0.0

    @property
    def converged(self) -> bool:
        return bool(self.passes) and self.passes[-1].converged

    @property
    def total_passes(self) -> int:
        return len(self.passes)

    @property
    def total_updates(self) -> int:
        return sum(len(p.updates) for p in self.passes)

    def iter_updates(self) -> Iterator[CategoryUpdate]:
        for record in self.passes:
            yield from record.updates

    def to_dict(self) -> dict:
        return {
            "passes": [
                {
                    "index": record.index,
                    "converged": record.converged,
                    "updates": [
                        {
                            "group_id": u.group_id,
                            "bin_index": u.bin_index,
                            "delta_r": u.delta_r,
                            "cutoff": u.cutoff,
                            "n": u.n,
                            "n_clamped": u.n_clamped,
                        }
                        for u in record.updates
                    ],
                }
                for record in self.passes
            ],
            "totals": {
                "passes": self.total_passes,
                "updates": self.total_updates,
                "converged": self.converged,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "UpdateTrace":
        passes = tuple(
            PassRecord(
                index=int(p["index"]),
                updates=tuple(
                    CategoryUpdate(
                        group_id=int(u["group_id"]),
                        bin_index=int(u["bin_index"]),
                        delta_r=float(u["delta_r"]),
                        cutoff=float(u["cutoff"]),
                        n=int(u["n"]),
                        n_clamped=int(u["n_clamped"]),
                    )
                    for u in p["updates"]
                ),
            )
            for p in payload["passes"]
        )
        return cls(passes=passes)


def squash(score):
    """Clamp a score (or array of scores) to [0, 1]."""
    if np.isscalar(score):
        return float(min(1.0, max(0.0, score)))
    return np.clip(score, 0.0, 1.0)


def _run_boost(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    config: BoostConfig,
    exact_mode: bool,
) -> tuple[np.ndarray, UpdateTrace]:
    if exact_mode and dataset.p_star is None:
        raise ConfigurationError("exact_mode requires p_star on every row")
    n = dataset.n
    masses = np.array([g.member_mask(dataset).mean() for g in groups])
    if (masses < config.gamma - MASS_FILTER_SLACK).any():
        bad = int(np.argmin(masses))
        raise ConfigurationError(
            f"group {bad} has mass {masses[bad]:.6f} below gamma={config.gamma}; "
            "enumerate the collection with the same gamma"
        )
    outcome = dataset.p_star if exact_mode else dataset.y.astype(np.float64)
    scores = dataset.scores.copy()
    member_idx = groups.member_indices(dataset)
    rng = np.random.default_rng(config.seed)
    proportional = config.mode == "pmc"
    started = time.perf_counter()

    records: list[PassRecord] = []
    for pass_index in range(1, config.max_passes + 1):
        if config.sample_fraction < 1.0:
            size = max(1, int(round(config.sample_fraction * n)))
            in_sample = np.zeros(n, dtype=bool)
            in_sample[rng.choice(n, size=size, replace=False)] = True
            n_base = size
        else:
            in_sample = None
            n_base = n
        count_floor = config.alpha * config.lam * config.gamma * n_base - MASS_FILTER_SLACK

        updates: list[CategoryUpdate] = []
        for group_id, idx in enumerate(member_idx):
            active = idx if in_sample is None else idx[in_sample[idx]]
            if active.size == 0:
                continue
            # Bins are cached per group visit and rebuilt after own updates;
            # between two bins of the same group only this group's scores
            # can have moved, so this equals a per-visit recomputation.
            active_bins = disc.bin_of(scores[active])
            for bin_index in range(disc.n_bins):
                members = active[active_bins == bin_index]
                count = members.size
                if count == 0 or count < count_floor:
                    continue
                rbar = float(scores[members].mean())
                ybar = float(outcome[members].mean())
                delta = ybar - rbar
                if proportional:
                    cutoff = config.alpha * ybar if ybar >= config.rho else config.alpha * config.rho
                else:
                    cutoff = config.alpha
                if abs(delta) < cutoff:
                    continue
                shifted = scores[members] + delta
                n_clamped = int(((shifted < 0.0) | (shifted > 1.0)).sum())
                if exact_mode:
                    before = float(((dataset.p_star[members] - scores[members]) ** 2).sum())
                scores[members] = np.clip(shifted, 0.0, 1.0)
                drop = None
                if exact_mode:
                    drop = before - float(((dataset.p_star[members] - scores[members]) ** 2).sum())
                updates.append(
                    CategoryUpdate(
                        group_id=group_id,
                        bin_index=bin_index,
                        delta_r=delta,
                        cutoff=cutoff,
                        n=count,
                        n_clamped=n_clamped,
                        potential_drop=drop,
                    )
                )
                active_bins = disc.bin_of(scores[active])
        records.append(PassRecord(index=pass_index, updates=tuple(updates)))
        if not updates:
            break
    trace = UpdateTrace(passes=tuple(records), wall_time=time.perf_counter() - started)
    return scores, trace


def pmc_boost(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    config: BoostConfig,
    exact_mode: bool = False,
) -> tuple[np.ndarray, UpdateTrace]:
    """Proportional-cutoff post-processing; see the module docstring.

    Non-convergence within ``max_passes`` is reported on the trace, not
    raised: clamping can stall progress and the caller must still see the
    partial result.
    """
    if config.mode != "pmc":
        raise ConfigurationError("pmc_boost requires config.mode == 'pmc'")
    return _run_boost(dataset, groups, disc, config, exact_mode)


def mc_boost(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    config: BoostConfig,
    exact_mode: bool = False,
) -> tuple[np.ndarray, UpdateTrace]:
    """Absolute-cutoff baseline: identical loop with constant cutoff alpha."""
    if config.mode != "mc":
        raise ConfigurationError("mc_boost requires config.mode == 'mc'")
    return _run_boost(dataset, groups, disc, config, exact_mode)


def apply_trace(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    trace: UpdateTrace,
) -> np.ndarray:
    """Replay a recorded update program on (possibly unseen) data.

    Each recorded update shifts the current members of its (group, bin)
    category by the recorded residual and clamps.  On the full-batch
    training data this reproduces the boost output bit for bit; on held-out
    data it applies the learned post-processing map.  Rows matching no
    group are left untouched.
    """
    scores = dataset.scores.copy()
    member_idx = groups.member_indices(dataset)
    for update in trace.iter_updates():
        idx = member_idx[update.group_id]
        if idx.size == 0:
            continue
        members = idx[disc.bin_of(scores[idx]) == update.bin_index]
        if members.size == 0:
            continue
        scores[members] = np.clip(scores[members] + update.delta_r, 0.0, 1.0)
    return scores
