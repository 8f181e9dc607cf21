import math

import numpy as np
import pytest

import propcal as pc

# Frozen against 40-digit evaluations of the closed forms (mpmath); the
# implementation must agree to well under 1e-9.
HIGH_PRECISION = {
    ("mc_to_dc", 0.05, 0.9): 0.11122563511022438,
    ("mc_to_dc", 0.05, 0.3): 0.33647223662121293,
    ("pmc_to_dc", 0.1): 0.20067069546215116,
    ("pmc_to_dc", 0.5): 1.0986122886681098,
    ("pmc_to_mc", 0.1): 0.1111111111111111,
    ("dc_to_mc", 0.2, 0.05): 0.23126924692201814,
    ("geom", 0.1, 0.1, 0.1): 0.3848179529735839,
}


class TestBoundValues:
    def test_absolute_to_differential(self):
        assert pc.mc_to_dc_bound(0.05, 0.9) == pytest.approx(HIGH_PRECISION[("mc_to_dc", 0.05, 0.9)], abs=1e-12)
        assert pc.mc_to_dc_bound(0.05, 0.3) == pytest.approx(HIGH_PRECISION[("mc_to_dc", 0.05, 0.3)], abs=1e-12)
        assert pc.mc_to_dc_bound(0.0, 0.5) == 0.0
        assert pc.mc_to_dc_bound(0.05, 0.05) is None
        assert pc.mc_to_dc_bound(0.05, 0.01) is None

    def test_proportional_to_differential(self):
        assert pc.pmc_to_dc_bound(0.0) == 0.0
        assert pc.pmc_to_dc_bound(0.1) == pytest.approx(HIGH_PRECISION[("pmc_to_dc", 0.1)], abs=1e-12)
        assert pc.pmc_to_dc_bound(0.5) == pytest.approx(math.log(3.0), abs=1e-12)
        assert pc.pmc_to_dc_bound(1.0) is None

    def test_proportional_to_absolute(self):
        assert pc.pmc_to_mc_bound(0.0) == 0.0
        assert pc.pmc_to_mc_bound(0.1) == pytest.approx(1.0 / 9.0, abs=1e-12)
        assert pc.pmc_to_mc_bound(1.0) is None
        for alpha in np.linspace(0.01, 0.9, 25):
            assert pc.pmc_to_mc_bound(float(alpha)) > alpha

    def test_differential_to_absolute(self):
        assert pc.dc_to_mc_bound(0.0, 0.0) == 0.0
        assert pc.dc_to_mc_bound(0.2, 0.05) == pytest.approx(HIGH_PRECISION[("dc_to_mc", 0.2, 0.05)], abs=1e-12)
        assert pc.dc_to_mc_bound(50.0, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_uniform_discretization_bound(self):
        assert pc.pmc_discretization_bound_uniform(0.1, 0.1, 0.1) == pytest.approx(1.1, abs=1e-12)
        assert pc.pmc_discretization_bound_uniform(0.1, 0.0, 0.5) == pytest.approx(0.1)
        assert pc.pmc_discretization_bound_uniform(0.0, 0.05, 0.5) == pytest.approx(0.1, abs=1e-12)

    def test_geometric_discretization_bound(self):
        assert pc.pmc_discretization_bound_geometric(0.1, 0.0, 0.5) == pytest.approx(0.1)
        assert pc.pmc_discretization_bound_geometric(0.1, 0.1, 0.1) == pytest.approx(
            HIGH_PRECISION[("geom", 0.1, 0.1, 0.1)], abs=1e-12
        )

    def test_domain_errors(self):
        with pytest.raises(pc.ConfigurationError):
            pc.mc_to_dc_bound(-0.1, 0.5)
        with pytest.raises(pc.ConfigurationError):
            pc.dc_to_mc_bound(-1.0, 0.0)
        with pytest.raises(pc.ConfigurationError):
            pc.pmc_discretization_bound_geometric(0.1, 0.1, 1.5)


class TestBoundShapes:
    def test_monotone_nondecreasing_in_alpha(self):
        grid = np.linspace(0.0, 0.4, 41)
        for fn in (
            lambda a: pc.mc_to_dc_bound(a, 0.5),
            pc.pmc_to_dc_bound,
            pc.pmc_to_mc_bound,
            lambda a: pc.dc_to_mc_bound(a, 0.0),
            lambda a: pc.pmc_discretization_bound_uniform(a, 0.1, 0.2),
            lambda a: pc.pmc_discretization_bound_geometric(a, 0.1, 0.2),
        ):
            values = [fn(float(a)) for a in grid]
            values = [v for v in values if v is not None]
            assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_proportional_gives_stronger_differential_guarantee(self):
        for r_min in (0.2, 0.5, 0.9, 1.0):
            for alpha in np.linspace(0.01, 0.19, 10):
                if r_min <= alpha:
                    continue
                assert pc.pmc_to_dc_bound(float(alpha)) <= pc.mc_to_dc_bound(float(alpha), r_min) + 1e-12

    def test_curve_masks_track_validity(self):
        grid = np.linspace(0.0, 2.0, 21)
        curve = pc.bound_curve("pmc_to_mc", grid)
        assert curve.mask.tolist() == [x < 1 for x in grid]
        assert np.isfinite(curve.values[curve.mask]).all()
        assert np.isnan(curve.values[~curve.mask]).all()

    def test_curve_requires_fixed_parameters(self):
        with pytest.raises(pc.ConfigurationError):
            pc.bound_curve("mc_to_dc", np.linspace(0, 0.1, 3))

    def test_curve_grid_must_increase(self):
        with pytest.raises(pc.ConfigurationError):
            pc.bound_curve("pmc_to_mc", np.array([0.2, 0.1]))

    def test_constraint_bands(self):
        grid = np.linspace(0.0, 1.0, 101)
        bands = pc.constraint_bands(0.1, 0.2, grid)
        mc, pmc = bands["mc"], bands["pmc"]
        assert np.allclose(mc.values, 0.1)
        below = grid <= 0.2
        assert np.allclose(pmc.values[below], 0.1 * 0.2)
        assert np.allclose(pmc.values[~below], 0.1 * grid[~below])


class TestVerifiers:
    @pytest.mark.parametrize("bound_id", ["mc_to_dc", "pmc_to_dc", "pmc_to_mc", "efficiency"])
    def test_no_violations_on_random_datasets(self, bound_id):
        report = pc.verify_bound(bound_id, trials=60, seed=123)
        assert report.ok, report.violations
        assert report.evaluated >= 15

    def test_unknown_bound_id(self):
        with pytest.raises(pc.ConfigurationError):
            pc.verify_bound("not_a_bound", trials=5, seed=0)

    def test_trials_must_be_positive(self):
        with pytest.raises(pc.ConfigurationError):
            pc.verify_bound("pmc_to_mc", trials=0, seed=0)

    def test_deterministic_given_seed(self):
        a = pc.verify_bound("pmc_to_dc", trials=25, seed=9)
        b = pc.verify_bound("pmc_to_dc", trials=25, seed=9)
        assert a == b
