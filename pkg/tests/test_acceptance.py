"""Acceptance suite: one test per release criterion, at pinned tolerances.

Run with ``pytest -v -s tests/test_acceptance.py`` to get one explicit
PASS/FAIL line per criterion in addition to pytest's own verdicts.
"""

import json
import time

import numpy as np
import pytest

import propcal as pc
from propcal.cli import CsvSchema, load_report, main, write_dataset_csv

UNIFORM_TENTHS = pc.make_discretization("uniform", 0.1)

# 40-digit mpmath evaluations of the closed forms, frozen as the
# independent high-precision oracle for criterion 1.
ORACLE = {
    "mc_to_dc(0.05, 0.9)": 0.1112256351102243797594928140147270016492,
    "pmc_to_dc(0.1)": 0.2006706954621511612714531041200778905267,
    "pmc_to_mc(0.1)": 0.1111111111111111111111111111111111111111,
    "dc_to_mc(0.2, 0.05)": 0.2312692469220181413300644913809605756414,
    "geometric(0.1, 0.1, 0.1)": 0.3848179529735839314663495170353806667030,
}


def announce(name: str, ok: bool, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"{name} failed{suffix}"


def split_holdout(dataset: pc.AuditDataset, fraction: float, seed: int):
    # Mirrors the CLI's --split fold construction exactly.
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n)
    n_train = int(round(fraction * dataset.n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return dataset.take(train_idx), dataset.take(test_idx)


def test_c1_bound_functions_match_high_precision_oracle():
    started = time.perf_counter()
    computed = {
        "mc_to_dc(0.05, 0.9)": pc.mc_to_dc_bound(0.05, 0.9),
        "pmc_to_dc(0.1)": pc.pmc_to_dc_bound(0.1),
        "pmc_to_mc(0.1)": pc.pmc_to_mc_bound(0.1),
        "dc_to_mc(0.2, 0.05)": pc.dc_to_mc_bound(0.2, 0.05),
        "geometric(0.1, 0.1, 0.1)": pc.pmc_discretization_bound_geometric(0.1, 0.1, 0.1),
    }
    elapsed = time.perf_counter() - started
    worst = max(abs(computed[k] - ORACLE[k]) for k in ORACLE)
    announce(
        "C1 bound-functions",
        worst < 1e-9 and elapsed < 1.0,
        f"worst |error| {worst:.2e}, {elapsed * 1e3:.1f} ms",
    )


def test_c2_theorem_verifiers_find_no_violations():
    started = time.perf_counter()
    reports = {
        bound_id: pc.verify_bound(bound_id, trials=200, seed=2026)
        for bound_id in ("mc_to_dc", "pmc_to_dc", "pmc_to_mc", "efficiency")
    }
    elapsed = time.perf_counter() - started
    violations = sum(len(r.violations) for r in reports.values())
    min_evaluated = min(r.evaluated for r in reports.values())
    announce(
        "C2 theorem-verifiers",
        violations == 0 and min_evaluated >= 40 and elapsed < 30.0,
        f"0 violations expected, got {violations}; evaluated >= {min_evaluated}/200 per bound; {elapsed:.1f} s",
    )


def test_c3_simulation_reproduces_scenario_profiles():
    started = time.perf_counter()
    tables = {
        scenario: pc.run_scenarios(
            pc.SimConfig(scenario=scenario, n_groups=61, alpha=0.1, n_per_group=1000, n_sims=100, seed=2026)
        )
        for scenario in ("fixed", "increasing", "decreasing")
    }
    elapsed = time.perf_counter() - started

    fixed = tables["fixed"]
    analytic = fixed.alpha / fixed.p_star
    fixed_dev = float(np.abs(fixed.mean_ratio - analytic).max())

    spread = lambda t: float(t.mean_ratio.max() - t.mean_ratio.min())
    decline = lambda t: float(t.mean_ratio[0] - t.mean_ratio[-1])
    near_flat = spread(tables["increasing"]) < 0.15
    steeper = decline(tables["decreasing"]) > decline(fixed) > 0

    announce(
        "C3 simulation-reproduction",
        fixed_dev <= 0.05 and near_flat and steeper and elapsed < 60.0,
        f"fixed max|ratio - alpha/p*| {fixed_dev:.4f}; increasing spread {spread(tables['increasing']):.3f}; "
        f"declines decreasing {decline(tables['decreasing']):.3f} > fixed {decline(fixed):.3f}; {elapsed:.1f} s",
    )


def test_c4_boost_fixed_point_on_every_scenario():
    alpha, lam, gamma, rho = 0.1, 0.1, 0.05, 0.01
    started = time.perf_counter()
    details = []
    ok = True
    for scenario in pc.SCENARIOS:
        # 16 groups keep every group's mass (1/16) above gamma = 0.05.
        ds = pc.simulate(pc.SimConfig(scenario=scenario, n_groups=16, n_per_group=1000, seed=7))
        groups = pc.enumerate_groups(ds, ["group"], gamma=gamma)
        config = pc.BoostConfig(mode="pmc", alpha=alpha, lam=lam, gamma=gamma, rho=rho, max_passes=100, seed=7)
        scores, trace = pc.pmc_boost(ds, groups, UNIFORM_TENTHS, config)
        loss = pc.pmc_loss(ds.replace_scores(scores), groups, UNIFORM_TENTHS, alpha=alpha, gamma=gamma, rho=rho)
        cap = ds.n / (alpha**3 * rho**2 * lam * gamma)
        ok &= trace.converged and loss.defined and loss.value < alpha and trace.total_updates <= cap
        details.append(f"{scenario}: loss {loss.value:.3f}, {trace.total_updates} updates")
    elapsed = time.perf_counter() - started
    announce("C4 boost-fixed-point", ok and elapsed < 120.0, "; ".join(details) + f"; {elapsed:.1f} s")


def test_c5_potential_descent_identity():
    checked = 0
    ok = True
    for scenario in ("fixed", "random"):
        ds = pc.simulate(pc.SimConfig(scenario=scenario, n_groups=16, n_per_group=500, seed=11))
        groups = pc.enumerate_groups(ds, ["group"], gamma=0.05)
        config = pc.BoostConfig(mode="pmc", alpha=0.1, lam=0.1, gamma=0.05, rho=0.01, max_passes=100, seed=11)
        _, trace = pc.pmc_boost(ds, groups, UNIFORM_TENTHS, config, exact_mode=True)
        for update in trace.iter_updates():
            if update.n_clamped:
                continue
            checked += 1
            expected = update.n * update.delta_r**2
            ok &= abs(update.potential_drop - expected) <= 1e-9 * max(abs(expected), 1e-300)
    announce("C5 potential-descent", ok and checked >= 10, f"{checked} unclamped updates verified at 1e-9 rel")


def test_c6_absolute_mode_needs_more_updates_for_proportional_target():
    alpha_p, rho = 0.1, 0.1
    ds = pc.simulate(pc.SimConfig(scenario="random", n_groups=61, n_per_group=1000, seed=5))
    groups = pc.enumerate_groups(ds, ["group"], gamma=0.01)
    pmc_cfg = pc.BoostConfig(mode="pmc", alpha=alpha_p, lam=0.1, gamma=0.01, rho=rho, max_passes=100, seed=5)
    mc_cfg = pc.BoostConfig(mode="mc", alpha=alpha_p * rho, lam=0.1, gamma=0.01, rho=rho, max_passes=100, seed=5)
    _, pmc_trace = pc.pmc_boost(ds, groups, UNIFORM_TENTHS, pmc_cfg)
    _, mc_trace = pc.mc_boost(ds, groups, UNIFORM_TENTHS, mc_cfg)
    ratio = mc_trace.total_updates / max(pmc_trace.total_updates, 1)
    announce(
        "C6 cost-comparison",
        pmc_trace.converged and mc_trace.converged and ratio > 1.0,
        f"absolute-mode updates {mc_trace.total_updates} vs proportional {pmc_trace.total_updates} (ratio {ratio:.2f})",
    )


def _holdout_replicate(seed: int):
    """One seeded replicate of the held-out post-processing comparison."""
    alpha, lam, gamma, rho = 0.05, 0.1, 0.01, 0.01
    ds = pc.simulate(pc.SimConfig(scenario="random", n_groups=61, alpha=alpha, n_per_group=6000, seed=seed))
    train, test = split_holdout(ds, 0.75, seed)
    groups = pc.enumerate_groups(train, ["group"], gamma=gamma)
    config = pc.BoostConfig(mode="pmc", alpha=alpha, lam=lam, gamma=gamma, rho=rho, max_passes=100, seed=seed)
    _, trace = pc.pmc_boost(train, groups, UNIFORM_TENTHS, config)
    test_scores = pc.apply_trace(test, groups, UNIFORM_TENTHS, trace)
    test_groups = pc.enumerate_groups(test, ["group"], gamma=gamma)
    before = pc.pmc_loss(test, test_groups, UNIFORM_TENTHS, alpha=alpha, gamma=gamma, rho=rho).value
    after = pc.pmc_loss(
        test.replace_scores(test_scores), test_groups, UNIFORM_TENTHS, alpha=alpha, gamma=gamma, rho=rho
    ).value
    auroc_shift = abs(pc.auroc(test, test_scores) - pc.auroc(test))
    return before, after, auroc_shift


def test_c7_holdout_improvement_without_ranking_cost(tmp_path):
    # The real-data table from the source study is out of scope (data and
    # base models are not shipped); the substituted property runs the same
    # pipeline on seeded synthetic replicates.
    wins = 0
    max_shift = 0.0
    for seed in range(50):
        before, after, shift = _holdout_replicate(seed)
        wins += after < before
        max_shift = max(max_shift, shift)

    # The same replicate routed through the CSV + CLI surface must agree.
    ds = pc.simulate(pc.SimConfig(scenario="random", n_groups=61, alpha=0.05, n_per_group=6000, seed=0))
    csv_path = tmp_path / "replicate0.csv"
    schema = CsvSchema(outcome_col="y", score_col="r", attr_cols=("group",), p_star_col="p_star")
    write_dataset_csv(csv_path, ds, schema)
    prefix = tmp_path / "cli"
    code = main([
        "postprocess", "--input", str(csv_path), "--groups", "group", "--p-star-col", "p_star",
        "--mode", "pmc", "--alpha", "0.05", "--lambda", "0.1", "--gamma", "0.01", "--rho", "0.01",
        "--split", "0.75", "--seed", "0", "--out-prefix", str(prefix),
    ])
    before0, after0, _ = _holdout_replicate(0)
    cli_before = load_report(f"{prefix}_report_before.json").pmc_loss
    cli_after = load_report(f"{prefix}_report_after.json").pmc_loss
    cli_matches = code == 0 and cli_before == before0 and cli_after == after0

    announce(
        "C7 holdout-improvement",
        wins >= 40 and max_shift < 0.01 and cli_matches,
        f"{wins}/50 replicates improved (need >= 40); max |AUROC shift| {max_shift:.4f} (< 0.01); "
        f"CSV/CLI path agrees bit-for-bit: {cli_matches}",
    )


def test_c8_commands_are_byte_deterministic(tmp_path):
    data = tmp_path / "data.csv"
    assert main([
        "simulate", "--scenario", "random", "--n-groups", "8", "--n-per-group", "300",
        "--seed", "13", "--out", str(data),
    ]) == 0

    def run_all(tag: str) -> dict[str, bytes]:
        outdir = tmp_path / tag
        outdir.mkdir()
        assert main([
            "audit", "--input", str(data), "--groups", "group", "--p-star-col", "p_star",
            "--alpha", "0.1", "--lambda", "0.1", "--gamma", "0.01", "--rho", "0.01",
            "--seed", "13", "--out", str(outdir / "report.json"),
        ]) == 0
        assert main([
            "postprocess", "--input", str(data), "--groups", "group", "--p-star-col", "p_star",
            "--mode", "pmc", "--alpha", "0.1", "--lambda", "0.1", "--gamma", "0.01", "--rho", "0.01",
            "--split", "0.75", "--sample-fraction", "0.9", "--seed", "13",
            "--out-prefix", str(outdir / "post"),
        ]) == 0
        assert main([
            "simulate", "--scenario", "decreasing", "--n-groups", "8", "--n-per-group", "50",
            "--n-sims", "5", "--seed", "13", "--out", str(outdir / "sim.csv"),
            "--ratios-out", str(outdir / "ratios.csv"),
        ]) == 0
        assert main([
            "bounds", "--curve", "disc_geometric", "--grid", "0:0.5:0.05",
            "--alpha", "0.1", "--rho", "0.1", "--out", str(outdir / "curve.csv"),
        ]) == 0
        return {p.name: p.read_bytes() for p in sorted(outdir.iterdir())}

    first = run_all("first")
    second = run_all("second")
    announce(
        "C8 determinism",
        first == second and len(first) == 8,
        f"{len(first)} artifacts byte-identical across repeated runs",
    )
