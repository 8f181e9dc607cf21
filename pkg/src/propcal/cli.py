"""Command-line surface: CSV ingestion, report serialization, plot data.

Commands
--------
* ``audit``       -- compute the three losses plus AUROC on an ingested CSV
  and write a structured JSON report.
* ``postprocess`` -- run the boosting engine (absolute or proportional
  cutoff), write updated scores, the update trace, and a before/after
  report pair; with ``--split`` the engine fits on the training fold and
  both reports are evaluated on the held-out fold.
* ``simulate``    -- emit synthetic populations and per-group scenario
  tables.
* ``bounds``      -- evaluate bound curves and constraint bands on user
  grids as plot-data CSV (columns x, series, value).

Every command is deterministic given flags plus seed, and artifacts are
byte-stable across repeated runs.  Exit codes: 0 success (including
non-converged post-processing, which is reported in the trace), 1
validation or configuration error, 2 I/O error.

Wire formats: CSV in with a header row, outcomes as 0/1, scores as
decimals, attributes as strings, optional true-rate column; reports out as
JSON with fixed field names {n, prevalence, mc_loss, pmc_loss, dc_loss,
auroc, witnesses[], trace{passes, updates, converged}}; plot data as CSV
with columns (x, series, value).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .boost import BoostConfig, UpdateTrace, apply_trace, mc_boost, pmc_boost
from .core import (
    MISSING_LEVEL,
    AuditDataset,
    Category,
    ConfigurationError,
    Discretization,
    EmptyCollectionError,
    GroupCollection,
    ValidationError,
    category_stats,
    enumerate_groups,
    make_discretization,
)
from .metrics import LossResult, auroc, dc_loss, mc_loss, pmc_loss
from .sim import SimConfig, run_scenarios, simulate
from .theory import bound_curve, constraint_bands

#: Major.minor version of the report schema; readers reject unknown majors.
SCHEMA_VERSION = "1.0"

LOSS_FIELDS = ("mc_loss", "pmc_loss", "dc_loss")


class IngestError(ValidationError):
    """A CSV row or column violates the input contract."""


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsvSchema:
    """Column names binding a CSV file to the dataset fields."""

    outcome_col: str
    score_col: str
    attr_cols: tuple[str, ...]
    p_star_col: str | None = None

    def columns(self) -> list[str]:
        cols = [self.outcome_col, self.score_col, *self.attr_cols]
        if self.p_star_col:
            cols.append(self.p_star_col)
        return cols


def ingest_csv(path: str | Path, schema: CsvSchema) -> AuditDataset:
    """Read and validate a CSV file into an :class:`AuditDataset`.

    Errors carry the 1-based data-row index and the offending column.
    Empty attribute cells become the distinct level ``__missing__``.
    """
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: file is empty (no header row)")
        missing = [c for c in schema.columns() if c not in reader.fieldnames]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}; header has {reader.fieldnames}")
        y: list[int] = []
        scores: list[float] = []
        attrs: dict[str, list[str]] = {name: [] for name in schema.attr_cols}
        p_star: list[float] = []
        for row_index, row in enumerate(reader, start=1):
            raw = (row[schema.outcome_col] or "").strip()
            if raw not in ("0", "1"):
                raise IngestError(
                    f"row {row_index}, column {schema.outcome_col!r}: non-binary outcome {raw!r}"
                )
            y.append(int(raw))
            scores.append(
                _parse_unit_float(row[schema.score_col], row_index, schema.score_col, "score")
            )
            for name in schema.attr_cols:
                value = (row[name] or "").strip()
                attrs[name].append(value if value else MISSING_LEVEL)
            if schema.p_star_col:
                p_star.append(
                    _parse_unit_float(row[schema.p_star_col], row_index, schema.p_star_col, "p_star")
                )
    if not y:
        raise IngestError(f"{path}: no data rows")
    return AuditDataset(
        y=np.array(y),
        scores=np.array(scores),
        attrs={name: np.array(col) for name, col in attrs.items()},
        p_star=np.array(p_star) if schema.p_star_col else None,
    )


def _parse_unit_float(raw: str | None, row_index: int, column: str, what: str) -> float:
    text = (raw or "").strip()
    try:
        value = float(text)
    except ValueError:
        raise IngestError(f"row {row_index}, column {column!r}: {what} {text!r} is not a number")
    if not (0.0 <= value <= 1.0):
        raise IngestError(f"row {row_index}, column {column!r}: {what} {value} outside [0,1]")
    return value


def write_dataset_csv(
    path: str | Path,
    dataset: AuditDataset,
    schema: CsvSchema,
    scores: np.ndarray | None = None,
    fold: Sequence[str] | None = None,
) -> None:
    """Write a dataset (optionally with replacement scores and fold tags)."""
    out_scores = dataset.scores if scores is None else np.asarray(scores, dtype=np.float64)
    header = schema.columns() + (["fold"] if fold is not None else [])
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.n):
            row: list = [int(dataset.y[i]), repr(float(out_scores[i]))]
            row.extend(str(dataset.attrs[name][i]) for name in schema.attr_cols)
            if schema.p_star_col:
                row.append(repr(float(dataset.p_star[i])))
            if fold is not None:
                row.append(fold[i])
            writer.writerow(row)


def write_plot_csv(path: str | Path, rows: Sequence[tuple[float, str, float]]) -> None:
    """Plot-data CSV with columns (x, series, value)."""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["x", "series", "value"])
        for x, series, value in rows:
            writer.writerow([repr(float(x)), series, repr(float(value))])


# ---------------------------------------------------------------------------
# Audit report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    """Serializable audit result; all fields are JSON-ready primitives."""

    schema_version: str
    tool_version: str
    n: int
    prevalence: float
    groups: list[dict]
    mc_loss: float | None
    pmc_loss: float | None
    dc_loss: float | None
    auroc: float | None
    witnesses: list[dict]
    undefined: dict[str, str]
    categories: list[dict]
    params: dict
    trace: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Mapping) -> "AuditReport":
        version = str(payload.get("schema_version", ""))
        major = version.split(".", 1)[0]
        if major != SCHEMA_VERSION.split(".", 1)[0]:
            raise ValidationError(f"unsupported report schema version {version!r}")
        return cls(**{k: payload[k] for k in cls.__dataclass_fields__})


def load_report(path: str | Path) -> AuditReport:
    with Path(path).open() as handle:
        return AuditReport.from_dict(json.load(handle))


def _category_dict(cat: Category, labels: Mapping[int, str]) -> dict:
    return {
        "group_id": cat.group_id,
        "label": labels[cat.group_id],
        "bin_index": cat.bin_index,
        "n": cat.n,
        "ybar": cat.ybar,
        "rbar": cat.rbar,
        "joint_mass": cat.joint_mass,
        "cond_mass": cat.cond_mass,
    }


def _witness_dict(metric: str, result: LossResult, labels: Mapping[int, str]) -> dict:
    if isinstance(result.witness, tuple):
        body = {"pair": [_category_dict(c, labels) for c in result.witness]}
    else:
        body = {"category": _category_dict(result.witness, labels)}
    return {
        "metric": metric,
        "value": result.value,
        "n_categories_considered": result.n_categories_considered,
        **body,
    }


def build_audit_report(
    dataset: AuditDataset,
    groups: GroupCollection | None,
    disc: Discretization,
    alpha: float,
    gamma: float,
    rho: float,
    params: Mapping,
    scores: np.ndarray | None = None,
    exact_mode: bool = False,
    trace: UpdateTrace | None = None,
    empty_reason: str | None = None,
) -> AuditReport:
    """Assemble the audit report for a dataset under the given filters.

    ``groups=None`` (with ``empty_reason``) produces a report whose losses
    are all explicit undefined entries -- the shape emitted when the group
    mass threshold filters out every subgroup.
    """
    eval_ds = dataset if scores is None else dataset.replace_scores(scores)
    roc = auroc(eval_ds)
    report_losses: dict[str, float | None] = {}
    witnesses: list[dict] = []
    undefined: dict[str, str] = {}
    categories: list[dict] = []
    group_rows: list[dict] = []

    if groups is None:
        for name in LOSS_FIELDS:
            report_losses[name] = None
            undefined[name] = empty_reason or "no groups to audit"
    else:
        labels = {g.id: g.label for g in groups}
        results = {
            "mc_loss": mc_loss(eval_ds, groups, disc, alpha, gamma, exact_mode=exact_mode),
            "pmc_loss": pmc_loss(eval_ds, groups, disc, alpha, gamma, rho, exact_mode=exact_mode),
            "dc_loss": dc_loss(eval_ds, groups, disc, alpha, gamma, exact_mode=exact_mode),
        }
        for name, result in results.items():
            report_losses[name] = result.value
            if result.defined:
                witnesses.append(_witness_dict(name, result, labels))
            else:
                undefined[name] = result.reason or "undefined"
        table = category_stats(eval_ds, groups, disc, exact_mode=exact_mode)
        categories = [_category_dict(c, labels) for c in table]
        for g in groups:
            mask = g.member_mask(eval_ds)
            size = int(mask.sum())
            group_rows.append(
                {
                    "id": g.id,
                    "label": g.label,
                    "n": size,
                    "prevalence": float(eval_ds.y[mask].mean()) if size else None,
                }
            )
    if roc is None:
        undefined["auroc"] = "dataset contains a single outcome class"

    trace_summary = None
    if trace is not None:
        trace_summary = {
            "passes": trace.total_passes,
            "updates": trace.total_updates,
            "converged": trace.converged,
        }
    return AuditReport(
        schema_version=SCHEMA_VERSION,
        tool_version=__version__,
        n=eval_ds.n,
        prevalence=eval_ds.prevalence,
        groups=group_rows,
        mc_loss=report_losses["mc_loss"],
        pmc_loss=report_losses["pmc_loss"],
        dc_loss=report_losses["dc_loss"],
        auroc=roc,
        witnesses=witnesses,
        undefined=undefined,
        categories=categories,
        params=dict(params),
        trace=trace_summary,
    )


def write_report(path: str | Path, report: AuditReport) -> None:
    with Path(path).open("w") as handle:
        json.dump(report.to_dict(), handle, indent=2)
        handle.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _schema_from_args(args: argparse.Namespace) -> CsvSchema:
    return CsvSchema(
        outcome_col=args.outcome_col,
        score_col=args.score_col,
        attr_cols=tuple(args.groups.split(",")),
        p_star_col=args.p_star_col,
    )


def _disc_from_args(args: argparse.Namespace) -> Discretization:
    return make_discretization(args.bins, args.lam, args.rho if args.bins == "geometric" else None)


def _params_echo(args: argparse.Namespace, extra: Mapping | None = None) -> dict:
    params = {
        "alpha": args.alpha,
        "lambda": args.lam,
        "gamma": args.gamma,
        "rho": args.rho,
        "bins": args.bins,
        "marginals": args.marginals,
        "groups": args.groups.split(","),
        "exact": getattr(args, "exact", False),
        "seed": args.seed,
    }
    if extra:
        params.update(extra)
    return params


def _audit_or_undefined(
    dataset: AuditDataset,
    disc: Discretization,
    args: argparse.Namespace,
    params: Mapping,
    scores: np.ndarray | None = None,
    trace: UpdateTrace | None = None,
) -> AuditReport:
    try:
        groups = enumerate_groups(
            dataset, args.groups.split(","), include_marginals=args.marginals, gamma=args.gamma
        )
    except EmptyCollectionError as exc:
        return build_audit_report(
            dataset, None, disc, args.alpha, args.gamma, args.rho,
            params, scores=scores, trace=trace, empty_reason=str(exc),
        )
    return build_audit_report(
        dataset, groups, disc, args.alpha, args.gamma, args.rho,
        params, scores=scores, exact_mode=getattr(args, "exact", False), trace=trace,
    )


def cmd_audit(args: argparse.Namespace) -> int:
    dataset = ingest_csv(args.input, _schema_from_args(args))
    if getattr(args, "exact", False) and dataset.p_star is None:
        raise ConfigurationError("--exact requires --p-star-col")
    disc = _disc_from_args(args)
    report = _audit_or_undefined(dataset, disc, args, _params_echo(args, {"command": "audit"}))
    write_report(args.out, report)
    return 0


def cmd_postprocess(args: argparse.Namespace) -> int:
    schema = _schema_from_args(args)
    dataset = ingest_csv(args.input, schema)
    disc = _disc_from_args(args)
    config = BoostConfig(
        mode=args.mode,
        alpha=args.alpha,
        lam=args.lam,
        gamma=args.gamma,
        rho=args.rho,
        max_passes=args.max_passes,
        sample_fraction=args.sample_fraction,
        seed=args.seed,
    )
    params = _params_echo(
        args,
        {
            "command": "postprocess",
            "mode": args.mode,
            "max_passes": args.max_passes,
            "split": args.split,
            "sample_fraction": args.sample_fraction,
        },
    )

    if args.split is not None:
        if not (0 < args.split < 1):
            raise ConfigurationError("--split must be in (0, 1)")
        rng = np.random.default_rng(args.seed)
        perm = rng.permutation(dataset.n)
        n_train = int(round(args.split * dataset.n))
        if n_train < 1 or n_train >= dataset.n:
            raise ConfigurationError("--split leaves an empty fold")
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
        train = dataset.take(train_idx)
        test = dataset.take(test_idx)
        groups = enumerate_groups(train, schema.attr_cols, include_marginals=args.marginals, gamma=args.gamma)
        boost = pmc_boost if args.mode == "pmc" else mc_boost
        train_scores, trace = boost(train, groups, disc, config)
        test_scores = apply_trace(test, groups, disc, trace)
        full_scores = dataset.scores.copy()
        full_scores[train_idx] = train_scores
        full_scores[test_idx] = test_scores
        fold = np.full(dataset.n, "train", dtype=object)
        fold[test_idx] = "test"
        report_before = _audit_or_undefined(test, disc, args, params)
        report_after = _audit_or_undefined(test, disc, args, params, scores=test_scores, trace=trace)
        write_dataset_csv(_out(args, "scores.csv"), dataset, schema, scores=full_scores, fold=fold)
    else:
        groups = enumerate_groups(dataset, schema.attr_cols, include_marginals=args.marginals, gamma=args.gamma)
        boost = pmc_boost if args.mode == "pmc" else mc_boost
        new_scores, trace = boost(dataset, groups, disc, config)
        report_before = _audit_or_undefined(dataset, disc, args, params)
        report_after = _audit_or_undefined(dataset, disc, args, params, scores=new_scores, trace=trace)
        write_dataset_csv(_out(args, "scores.csv"), dataset, schema, scores=new_scores)

    with Path(_out(args, "trace.json")).open("w") as handle:
        json.dump(trace.to_dict(), handle, indent=2)
        handle.write("\n")
    write_report(_out(args, "report_before.json"), report_before)
    write_report(_out(args, "report_after.json"), report_after)
    if not trace.converged:
        print(
            f"warning: not converged after {trace.total_passes} passes "
            f"({trace.total_updates} updates)",
            file=sys.stderr,
        )
    return 0


def _out(args: argparse.Namespace, suffix: str) -> str:
    return f"{args.out_prefix}_{suffix}"


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.out is None and args.ratios_out is None:
        raise ConfigurationError("simulate requires --out and/or --ratios-out")
    config = SimConfig(
        scenario=args.scenario,
        n_groups=args.n_groups,
        alpha=args.alpha,
        n_per_group=args.n_per_group,
        n_sims=args.n_sims,
        seed=args.seed,
    )
    if args.out is not None:
        dataset = simulate(config)
        schema = CsvSchema(outcome_col="y", score_col="r", attr_cols=("group",), p_star_col="p_star")
        write_dataset_csv(args.out, dataset, schema)
    if args.ratios_out is not None:
        table = run_scenarios(config)
        rows = [
            (float(p), table.scenario, float(ratio))
            for p, ratio in zip(table.p_star, table.mean_ratio)
        ]
        write_plot_csv(args.ratios_out, rows)
    return 0


def cmd_bounds(args: argparse.Namespace) -> int:
    grid = _parse_grid(args.grid)
    if args.curve == "constraints":
        if args.alpha is None or args.rho is None:
            raise ConfigurationError("constraints curve requires --alpha and --rho")
        bands = constraint_bands(args.alpha, args.rho, grid)
        rows = [
            (float(x), name, float(v))
            for name, curve in bands.items()
            for x, v in zip(curve.grid, curve.values)
        ]
    else:
        curve = bound_curve(args.curve, grid, r_min=args.r_min, delta=args.delta, alpha=args.alpha, rho=args.rho)
        rows = [
            (float(x), curve.name, float(v))
            for x, v, ok in zip(curve.grid, curve.values, curve.mask)
            if ok
        ]
    write_plot_csv(args.out, rows)
    return 0


def _parse_grid(spec: str) -> np.ndarray:
    try:
        start, stop, step = (float(part) for part in spec.split(":"))
    except ValueError:
        raise ConfigurationError(f"grid must be start:stop:step, got {spec!r}")
    if step <= 0 or stop < start:
        raise ConfigurationError(f"grid must increase, got {spec!r}")
    return np.arange(start, stop + step / 2, step)


# ---------------------------------------------------------------------------
# Parser / entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # Usage problems are validation errors: exit 1, not argparse's default 2.
    def error(self, message: str) -> None:  # pragma: no cover - thin wrapper
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="input CSV path")
    parser.add_argument("--outcome-col", default="y")
    parser.add_argument("--score-col", default="r")
    parser.add_argument("--groups", required=True, help="comma-separated attribute columns forming the group basis")
    parser.add_argument("--p-star-col", default=None, help="optional true-rate column (enables --exact)")


def _add_filter_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=0.1)
    parser.add_argument("--lambda", dest="lam", type=float, default=0.1)
    parser.add_argument("--gamma", type=float, default=0.0)
    parser.add_argument("--rho", type=float, default=0.01)
    parser.add_argument("--bins", choices=("uniform", "geometric"), default="uniform")
    parser.add_argument("--marginals", action="store_true", help="add marginal subgroups to the collection")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="propcal", description=__doc__.split("\n", 1)[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    audit = sub.add_parser("audit", help="compute calibration-fairness losses on a CSV")
    _add_data_flags(audit)
    _add_filter_flags(audit)
    audit.add_argument("--exact", action="store_true", help="evaluate against true rates instead of outcomes")
    audit.add_argument("--out", required=True, help="report JSON path")
    audit.set_defaults(func=cmd_audit)

    post = sub.add_parser("postprocess", help="boost scores toward category outcome means")
    _add_data_flags(post)
    _add_filter_flags(post)
    post.add_argument("--mode", choices=("pmc", "mc"), default="pmc")
    post.add_argument("--max-passes", type=int, default=100)
    post.add_argument("--split", type=float, default=None, help="train fraction; reports evaluate the held-out fold")
    post.add_argument("--sample-fraction", type=float, default=1.0)
    post.add_argument("--out-prefix", required=True, help="prefix for scores/trace/report artifacts")
    post.set_defaults(func=cmd_postprocess)

    simc = sub.add_parser("simulate", help="generate synthetic populations and scenario tables")
    simc.add_argument("--scenario", choices=("random", "fixed", "increasing", "decreasing"), default="random")
    simc.add_argument("--n-groups", type=int, default=61)
    simc.add_argument("--alpha", type=float, default=0.1)
    simc.add_argument("--n-per-group", type=int, default=1000)
    simc.add_argument("--n-sims", type=int, default=1)
    simc.add_argument("--seed", type=int, default=0)
    simc.add_argument("--out", default=None, help="dataset CSV path (single replicate)")
    simc.add_argument("--ratios-out", default=None, help="per-group mean error-ratio table (plot CSV)")
    simc.set_defaults(func=cmd_simulate)

    bounds = sub.add_parser("bounds", help="evaluate bound curves as plot CSV")
    bounds.add_argument(
        "--curve",
        required=True,
        choices=("pmc_to_mc", "pmc_to_dc", "mc_to_dc", "dc_to_mc", "disc_uniform", "disc_geometric", "constraints"),
    )
    bounds.add_argument("--grid", default="0:1:0.01", help="start:stop:step for the x axis")
    bounds.add_argument("--alpha", type=float, default=None)
    bounds.add_argument("--rho", type=float, default=None)
    bounds.add_argument("--delta", type=float, default=None)
    bounds.add_argument("--r-min", type=float, default=None)
    bounds.add_argument("--out", required=True)
    bounds.set_defaults(func=cmd_bounds)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (ConfigurationError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
