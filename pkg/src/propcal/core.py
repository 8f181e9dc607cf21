"""Domain types shared by the auditing, boosting, and simulation layers.

The central objects are:

* :class:`AuditDataset` -- a columnar sample of (binary outcome, risk score,
  categorical attributes), optionally carrying the true Bernoulli rate of
  each row for exact-mode (infinite-sample) evaluation.
* :class:`GroupCollection` -- the audited subgroups, each a conjunction of
  (attribute = level) terms over a fixed attribute basis.  Intersectional
  collections are the Cartesian product of observed levels; marginal
  collections add every product over every nonempty proper subset of the
  basis (wildcards on the rest).
* :class:`Discretization` -- a partition of [0, 1] into prediction bins,
  either uniform (width ``lam``) or geometric (multiplicative spacing above
  ``rho``, with an explicit underflow bin [0, rho)).
* :class:`CategoryTable` -- per (group, bin) statistics: count, mean outcome,
  mean prediction, and mass fractions.

Everything here is immutable after construction; arrays are marked
read-only so concurrent audits can share a dataset safely.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

#: Distinct level assigned to missing attribute values so that rows never
#: silently vanish from every group.
MISSING_LEVEL = "__missing__"

#: Slack used when comparing integer counts against fractional mass
#: thresholds (alpha*lambda*N and friends), so that exact boundary cases are
#: not dropped by float rounding of the threshold product.
MASS_FILTER_SLACK = 1e-9


class PropcalError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(PropcalError, ValueError):
    """Parameters violate a precondition (bad names, ranges, modes)."""


class ValidationError(PropcalError, ValueError):
    """Data rows violate the dataset invariants."""


class EmptyCollectionError(ConfigurationError):
    """Every candidate group was filtered out by the mass threshold."""


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class AuditDataset:
    """Columnar sample of (outcome, risk score, attributes[, true rate]).

    Invariants (enforced at construction): outcomes are 0/1, scores and
    true rates lie in [0, 1], every attribute column has one value per row,
    and there is at least one row.
    """

    y: np.ndarray
    scores: np.ndarray
    attrs: Mapping[str, np.ndarray]
    p_star: np.ndarray | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=np.int8)
        scores = np.asarray(self.scores, dtype=np.float64)
        if y.ndim != 1 or scores.ndim != 1 or y.shape != scores.shape:
            raise ValidationError("y and scores must be 1-D arrays of equal length")
        if y.size < 1:
            raise ValidationError("dataset must contain at least one row")
        if not np.isin(y, (0, 1)).all():
            raise ValidationError("outcomes must be binary (0 or 1)")
        if not np.isfinite(scores).all() or scores.min() < 0.0 or scores.max() > 1.0:
            raise ValidationError("risk scores must lie in [0, 1]")
        attrs = {str(k): _readonly(np.asarray(v, dtype=str)) for k, v in self.attrs.items()}
        for name, col in attrs.items():
            if col.shape != y.shape:
                raise ValidationError(f"attribute column {name!r} has wrong length")
        p_star = self.p_star
        if p_star is not None:
            p_star = np.asarray(p_star, dtype=np.float64)
            if p_star.shape != y.shape:
                raise ValidationError("p_star must have one value per row")
            if not np.isfinite(p_star).all() or p_star.min() < 0.0 or p_star.max() > 1.0:
                raise ValidationError("p_star values must lie in [0, 1]")
            object.__setattr__(self, "p_star", _readonly(p_star))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "scores", _readonly(scores))
        object.__setattr__(self, "attrs", attrs)

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(self.attrs.keys())

    @property
    def prevalence(self) -> float:
        return float(self.y.mean())

    def replace_scores(self, scores: np.ndarray) -> "AuditDataset":
        """New dataset with the same rows but different risk scores."""
        return AuditDataset(y=self.y, scores=scores, attrs=self.attrs, p_star=self.p_star)

    def take(self, indices: np.ndarray) -> "AuditDataset":
        """New dataset restricted to the given row indices (in that order)."""
        idx = np.asarray(indices)
        return AuditDataset(
            y=self.y[idx],
            scores=self.scores[idx],
            attrs={name: col[idx] for name, col in self.attrs.items()},
            p_star=None if self.p_star is None else self.p_star[idx],
        )

    @classmethod
    def from_rows(cls, rows: Sequence[Mapping]) -> "AuditDataset":
        """Build a dataset from row mappings {y, r, attrs[, p_star]}.

        Missing or ``None`` attribute values become :data:`MISSING_LEVEL`.
        """
        if not rows:
            raise ValidationError("dataset must contain at least one row")
        names = sorted({k for row in rows for k in row["attrs"]})
        y = [row["y"] for row in rows]
        r = [row["r"] for row in rows]
        attrs = {
            name: [
                MISSING_LEVEL
                if row["attrs"].get(name) in (None, "")
                else str(row["attrs"].get(name))
                for row in rows
            ]
            for name in names
        }
        p_star = None
        if any(row.get("p_star") is not None for row in rows):
            p_star = [row.get("p_star") for row in rows]
            if any(v is None for v in p_star):
                raise ValidationError("p_star must be present on all rows or none")
        return cls(y=np.array(y), scores=np.array(r, dtype=float), attrs=attrs, p_star=p_star)


# ---------------------------------------------------------------------------
# Groups
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Group:
    """One audited subgroup: a conjunction of (attribute = level) terms.

    Attributes of the basis absent from ``predicate`` are wildcards.
    """

    id: int
    label: str
    predicate: Mapping[str, str]

    def member_mask(self, dataset: AuditDataset) -> np.ndarray:
        mask = np.ones(dataset.n, dtype=bool)
        for name, level in self.predicate.items():
            mask &= dataset.attrs[name] == level
        return mask


@dataclass(frozen=True)
class GroupCollection:
    """Ordered collection of subgroups over a fixed attribute basis."""

    groups: tuple[Group, ...]
    attribute_basis: tuple[str, ...]
    includes_marginals: bool = False

    def __post_init__(self) -> None:
        ids = [g.id for g in self.groups]
        if ids != list(range(len(ids))):
            raise ConfigurationError("group ids must be dense ordinals 0..G-1")
        for g in self.groups:
            unknown = set(g.predicate) - set(self.attribute_basis)
            if unknown:
                raise ConfigurationError(f"group {g.id} references non-basis attributes {sorted(unknown)}")

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self) -> Iterator[Group]:
        return iter(self.groups)

    def member_indices(self, dataset: AuditDataset) -> list[np.ndarray]:
        """Row indices of each group's members, in group-id order."""
        return [np.flatnonzero(g.member_mask(dataset)) for g in self.groups]


def _group_label(basis: Sequence[str], predicate: Mapping[str, str]) -> str:
    return " & ".join(f"{name}={predicate.get(name, '*')}" for name in basis)


def enumerate_groups(
    dataset: AuditDataset,
    attribute_basis: Sequence[str],
    include_marginals: bool = False,
    gamma: float = 0.0,
) -> GroupCollection:
    """Enumerate intersectional (and optionally marginal) subgroups.

    Returns every product of observed levels of ``attribute_basis`` whose
    empirical mass is at least ``gamma``; marginal mode adds the products
    over every nonempty proper subset of the basis.  Ordering is
    lexicographic by attribute name, then by level, so two calls on the
    same dataset yield identical collections.

    Raises :class:`ConfigurationError` for unknown attribute names and
    :class:`EmptyCollectionError` when the mass threshold removes every
    candidate group.
    """
    if not attribute_basis:
        raise ConfigurationError("attribute_basis must be nonempty")
    if gamma < 0:
        raise ConfigurationError("gamma must be nonnegative")
    basis = tuple(sorted(dict.fromkeys(str(a) for a in attribute_basis)))
    for name in basis:
        if name not in dataset.attrs:
            raise ConfigurationError(f"unknown attribute {name!r}; dataset has {sorted(dataset.attrs)}")
    levels = {name: sorted(set(dataset.attrs[name].tolist())) for name in basis}

    subsets: list[tuple[str, ...]] = [basis]
    if include_marginals and len(basis) > 1:
        proper: list[tuple[str, ...]] = []
        for size in range(len(basis) - 1, 0, -1):
            proper.extend(itertools.combinations(basis, size))
        subsets.extend(proper)

    n = dataset.n
    groups: list[Group] = []
    for subset in subsets:
        for combo in itertools.product(*(levels[name] for name in subset)):
            predicate = dict(zip(subset, combo))
            mask = np.ones(n, dtype=bool)
            for name, level in predicate.items():
                mask &= dataset.attrs[name] == level
            if mask.sum() / n >= gamma:
                groups.append(Group(id=len(groups), label=_group_label(basis, predicate), predicate=predicate))
    if not groups:
        raise EmptyCollectionError(f"no subgroup reaches the mass threshold gamma={gamma}")
    return GroupCollection(groups=tuple(groups), attribute_basis=basis, includes_marginals=include_marginals)


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Discretization:
    """Partition of [0, 1] into prediction bins.

    ``edges`` has ``n_bins + 1`` entries with ``edges[0] == 0.0`` and
    ``edges[-1] == 1.0``.  Bin ``j`` is ``[edges[j], edges[j+1])`` except the
    final bin, which is closed at 1.0 so that every score in [0, 1] maps to
    exactly one bin.
    """

    kind: str
    lam: float
    rho: float | None
    edges: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2:
            raise ConfigurationError("edges must contain at least two values")
        if edges[0] != 0.0 or edges[-1] != 1.0 or not (np.diff(edges) > 0).all():
            raise ConfigurationError("edges must increase strictly from 0.0 to 1.0")
        object.__setattr__(self, "edges", _readonly(edges))

    @property
    def n_bins(self) -> int:
        return int(self.edges.size - 1)

    def intervals(self) -> list[tuple[float, float]]:
        return [(float(self.edges[j]), float(self.edges[j + 1])) for j in range(self.n_bins)]

    def bin_of(self, scores: np.ndarray) -> np.ndarray:
        """Bin index of each score; scores of exactly 1.0 land in the last bin."""
        idx = np.searchsorted(self.edges, np.asarray(scores, dtype=np.float64), side="right") - 1
        return np.clip(idx, 0, self.n_bins - 1)


def make_discretization(kind: str, lam: float, rho: float | None = None) -> Discretization:
    """Build a uniform or geometric discretization of [0, 1].

    Uniform: ``ceil(1/lam)`` bins of width ``lam`` with the last bin
    truncated at (and closed at) 1.0.  Geometric: bins
    ``[rho**(1 - j*lam), rho**(1 - (j+1)*lam))`` with an explicit underflow
    bin [0, rho) prepended, again closing at 1.0.
    """
    if not (0 < lam <= 1):
        raise ConfigurationError(f"lambda must be in (0, 1], got {lam}")
    if kind == "uniform":
        count = int(math.ceil(1.0 / lam - 1e-9))
        edges = [j * lam for j in range(count)] + [1.0]
        return Discretization(kind=kind, lam=float(lam), rho=None, edges=np.array(edges))
    if kind == "geometric":
        if rho is None:
            raise ConfigurationError("geometric discretization requires rho")
        if not (0 < rho < 1):
            raise ConfigurationError(f"rho must be in (0, 1), got {rho}")
        edges = [0.0, float(rho)]
        j = 0
        while True:
            exponent = 1.0 - (j + 1) * lam
            if exponent <= 1e-12:
                edges.append(1.0)
                break
            upper = rho**exponent
            if upper >= 1.0:
                edges.append(1.0)
                break
            edges.append(float(upper))
            j += 1
        return Discretization(kind=kind, lam=float(lam), rho=float(rho), edges=np.array(edges))
    raise ConfigurationError(f"unknown discretization kind {kind!r}")


# ---------------------------------------------------------------------------
# Category statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Category:
    """Statistics of one (subgroup, prediction bin) cell."""

    group_id: int
    bin_index: int
    n: int
    ybar: float
    rbar: float
    joint_mass: float
    cond_mass: float


@dataclass(frozen=True)
class CategoryTable:
    """All nonempty categories in canonical (group_id, bin_index) order."""

    entries: tuple[Category, ...]
    n_rows: int

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Category]:
        return iter(self.entries)


def category_stats(
    dataset: AuditDataset,
    groups: GroupCollection,
    disc: Discretization,
    exact_mode: bool = False,
) -> CategoryTable:
    """Per-(group, bin) counts and means, one entry per nonempty cell.

    ``ybar`` is the mean observed outcome, or the mean true Bernoulli rate
    when ``exact_mode`` is set (the infinite-sample oracle); ``rbar`` is the
    mean risk score.  Entries are emitted in (group_id, bin_index) order and
    the counts of a group's categories sum to the group size.
    """
    if exact_mode:
        if dataset.p_star is None:
            raise ConfigurationError("exact_mode requires p_star on every row")
        outcome = dataset.p_star
    else:
        outcome = dataset.y.astype(np.float64)
    bins = disc.bin_of(dataset.scores)
    n_bins = disc.n_bins
    total = dataset.n
    entries: list[Category] = []
    for group in groups:
        mask = group.member_mask(dataset)
        size = int(mask.sum())
        if size == 0:
            continue
        member_bins = bins[mask]
        counts = np.bincount(member_bins, minlength=n_bins)
        ysum = np.bincount(member_bins, weights=outcome[mask], minlength=n_bins)
        rsum = np.bincount(member_bins, weights=dataset.scores[mask], minlength=n_bins)
        for j in np.flatnonzero(counts):
            n = int(counts[j])
            entries.append(
                Category(
                    group_id=group.id,
                    bin_index=int(j),
                    n=n,
                    ybar=float(ysum[j] / n),
                    rbar=float(rsum[j] / n),
                    joint_mass=n / total,
                    cond_mass=n / size,
                )
            )
    return CategoryTable(entries=tuple(entries), n_rows=total)
