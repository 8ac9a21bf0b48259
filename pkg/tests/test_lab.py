"""The variance lab: closed-form error moments, Monte-Carlo checks, and the
probability-optimality oracle."""

import numpy as np
import pytest

from mvsboost.errors import MVSBoostError
from mvsboost.lab import (
    LabScenario,
    SCENARIO_DEFAULTS,
    build_scenario_inputs,
    compare_strategies,
    empirical_delta2,
    load_scenario,
    optimality_oracle,
    sampling_objective,
    strategy_probabilities,
    theoretical_delta2,
)
from mvsboost.lab import _budget_projection

from oracles import enumerate_delta2, enumerate_keep_moments


def scenario_of(g, h, leaf_ids, probs, **kwargs):
    return LabScenario(g=np.asarray(g, dtype=np.float64),
                       h=np.asarray(h, dtype=np.float64),
                       leaf_ids=np.asarray(leaf_ids),
                       probs=np.asarray(probs, dtype=np.float64), **kwargs)


class TestScenarioValidation:
    def good(self, **overrides):
        fields = dict(g=[1.0, -2.0], h=[1.0, 1.0], leaf_ids=[0, 1],
                      probs=[0.5, 0.5])
        fields.update(overrides)
        return scenario_of(**fields)

    def test_valid_scenario_passes(self):
        self.good().validate()

    @pytest.mark.parametrize("overrides, message", [
        (dict(g=[], h=[], leaf_ids=[], probs=[]), "at least one"),
        (dict(h=[1.0]), "share one length"),
        (dict(g=[np.inf, 1.0]), "finite"),
        (dict(h=[-1.0, 1.0]), "non-negative"),
        (dict(probs=[0.0, 0.5]), r"\(0, 1\]"),
        (dict(probs=[0.5, 1.5]), r"\(0, 1\]"),
        (dict(leaf_ids=[-1, 0]), "non-negative"),
        (dict(leaf_ids=[0, 2]), "cover"),
    ])
    def test_bad_fields_rejected(self, overrides, message):
        with pytest.raises(MVSBoostError, match=message):
            self.good(**overrides).validate()

    def test_too_few_draws_rejected(self):
        with pytest.raises(MVSBoostError, match="n_draws"):
            self.good(n_draws=10).validate()


class TestClosedForm:
    def test_single_row_identity(self):
        """One row, p = 1/2, g = h = 1: every moment equals one, and the
        combined term collapses to exactly 1."""
        scenario = scenario_of([1.0], [1.0], [0], [0.5], eps_reg=0.0)
        total, parts = theoretical_delta2(scenario)
        assert total == pytest.approx(1.0, rel=1e-14)
        assert parts[0].var_x == pytest.approx(1.0, rel=1e-14)
        assert parts[0].var_y == pytest.approx(1.0, rel=1e-14)
        assert parts[0].cov_xy == pytest.approx(1.0, rel=1e-14)
        assert parts[0].ratio == pytest.approx(1.0, rel=1e-14)

    def test_moments_match_exhaustive_enumeration(self):
        """Per-leaf Var/Cov formulas equal brute-force expectation over all
        2^n keep patterns."""
        gen = np.random.default_rng(3)
        for _ in range(10):
            n = int(gen.integers(2, 9))
            g = gen.normal(size=n)
            h = gen.uniform(0.2, 1.0, size=n)
            probs = gen.uniform(0.2, 1.0, size=n)
            scenario = scenario_of(g, h, np.zeros(n, dtype=int), probs)
            _, parts = theoretical_delta2(scenario)

            pairs = list(zip(g.tolist(), h.tolist()))
            mean_x, var_x, cov_xy = enumerate_keep_moments(pairs, probs.tolist())
            pairs_swapped = [(b, a) for a, b in pairs]
            _, var_y, _ = enumerate_keep_moments(pairs_swapped, probs.tolist())

            assert mean_x == pytest.approx(g.sum(), rel=1e-9, abs=1e-12)
            assert parts[0].var_x == pytest.approx(var_x, rel=1e-9, abs=1e-12)
            assert parts[0].var_y == pytest.approx(var_y, rel=1e-9, abs=1e-12)
            assert parts[0].cov_xy == pytest.approx(cov_xy, rel=1e-9, abs=1e-12)

    def test_sure_rows_contribute_nothing(self):
        scenario = scenario_of([2.0, 3.0], [1.0, 1.0], [0, 0], [1.0, 1.0])
        total, parts = theoretical_delta2(scenario)
        assert total == 0.0
        assert parts[0].var_x == 0.0

    def test_zero_hessian_leaf_rejected(self):
        scenario = scenario_of([1.0, 1.0], [0.0, 1.0], [0, 1], [0.5, 0.5])
        with pytest.raises(MVSBoostError, match="hessian"):
            theoretical_delta2(scenario)


class TestMonteCarlo:
    def test_matches_exhaustive_enumeration(self):
        """The sampled second moment converges on the exact 2^n expectation."""
        gen = np.random.default_rng(8)
        n = 8
        g = np.abs(gen.normal(size=n)) + 0.5
        h = np.ones(n)
        probs = gen.uniform(0.4, 0.9, size=n)
        leaf_ids = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        exact = enumerate_delta2(g, h, leaf_ids, probs, eps_reg=1e-12)

        scenario = scenario_of(g, h, leaf_ids, probs, n_draws=60000, seed=5)
        result = empirical_delta2(scenario)
        assert result.n_draws == 60000
        assert abs(result.mean - exact) <= 5 * result.stderr
        assert result.stderr < 0.05 * exact

    def test_deterministic_given_seed(self):
        scenario = scenario_of([1.0, 2.0, -1.0], [1.0, 1.0, 1.0], [0, 0, 0],
                               [0.5, 0.8, 0.6], n_draws=5000, seed=9)
        a = empirical_delta2(scenario)
        b = empirical_delta2(scenario)
        assert a.mean == b.mean and a.stderr == b.stderr
        assert a.empty_leaf_draws == b.empty_leaf_draws

    def test_empty_leaf_draws_counted(self):
        """A single-row leaf at p = 1/2 goes empty on half the draws."""
        scenario = scenario_of([1.0], [1.0], [0], [0.5], n_draws=20000, seed=2)
        result = empirical_delta2(scenario)
        rate = result.empty_leaf_draws / result.n_draws
        assert rate == pytest.approx(0.5, abs=0.02)

    def test_certain_probabilities_have_zero_error(self):
        scenario = scenario_of([1.0, 2.0], [1.0, 1.0], [0, 1], [1.0, 1.0],
                               n_draws=1000)
        result = empirical_delta2(scenario)
        assert result.mean == 0.0 and result.stderr == 0.0

    def test_agrees_with_closed_form_when_coherent(self):
        """With aligned per-leaf gradients and moderate keep rates the
        linearized moment formula tracks the Monte-Carlo estimate."""
        gen = np.random.default_rng(1000)
        n = 100
        g = gen.uniform(1.2, 2.2, size=n) * np.where(np.arange(n) % 2, 1, -1)
        h = gen.uniform(0.6, 1.0, size=n)
        leaf_ids = np.arange(n) % 2
        probs = strategy_probabilities(g, h, "mvs", 0.6, lam=0.1)
        scenario = scenario_of(g, h, leaf_ids, probs, n_draws=40000, seed=4)
        theory, _ = theoretical_delta2(scenario)
        estimate = empirical_delta2(scenario)
        band = max(4 * estimate.stderr, 0.15 * estimate.mean)
        assert abs(theory - estimate.mean) <= band


class TestObjectiveAndStrategies:
    def test_objective_frozen_value(self):
        value = sampling_objective(np.array([1.0, 2.0]), np.array([1.0, 1.0]),
                                   1.0, np.array([0.5, 1.0]))
        assert value == pytest.approx((1 + 1) / 0.5 + (4 + 1) / 1.0, rel=1e-15)

    def test_uniform_probabilities(self):
        probs = strategy_probabilities(np.ones(4), np.ones(4), "uniform", 0.3)
        np.testing.assert_allclose(probs, 0.3)

    def test_importance_equals_lambda_zero(self):
        gen = np.random.default_rng(2)
        g = gen.normal(size=50)
        h = gen.uniform(0.1, 1.0, size=50)
        importance = strategy_probabilities(g, h, "importance", 0.4, lam=0.7)
        mvs_zero = strategy_probabilities(g, h, "mvs", 0.4, lam=0.0)
        np.testing.assert_allclose(importance, mvs_zero, rtol=1e-12)

    def test_unknown_strategy_rejected(self):
        with pytest.raises(MVSBoostError, match="unknown lab strategy"):
            strategy_probabilities(np.ones(3), np.ones(3), "halton", 0.5)

    def test_budgets_shared_across_strategies(self):
        gen = np.random.default_rng(6)
        g = gen.normal(size=80)
        h = gen.uniform(0.1, 1.0, size=80)
        for name, lam in (("uniform", 0.0), ("importance", 0.0), ("mvs", 0.3)):
            probs = strategy_probabilities(g, h, name, 0.45, lam)
            assert probs.sum() == pytest.approx(80 * 0.45, rel=1e-9)

    def test_compare_strategies_report(self):
        gen = np.random.default_rng(12)
        n = 60
        g = gen.normal(size=n) * np.exp(gen.normal(size=n))
        h = np.ones(n)
        reports = compare_strategies(g, h, np.arange(n) % 2, sample_rate=0.4,
                                     lambdas=[0.0, 0.1], n_draws=4000, seed=0)
        assert [r.name for r in reports] == ["uniform", "importance", "mvs",
                                             "mvs"]
        assert [r.lam for r in reports] == [None, None, 0.0, 0.1]
        for report in reports:
            assert set(report.objectives) == {0.0, 0.1}
            assert report.empirical >= 0
            assert report.stderr >= 0

        # the mvs plan at lambda L minimizes the lambda-L objective
        for lam_index, lam in ((2, 0.0), (3, 0.1)):
            best = reports[lam_index].objectives[lam]
            for other in reports:
                assert best <= other.objectives[lam] * (1 + 1e-9)


class TestOptimality:
    def test_hand_instance(self):
        """|g| = [1,2,3,4] at half budget: optimum keeps p proportional,
        objective (1+4+9+16)/(phat) with mu=5 giving exactly 50."""
        g = np.array([1.0, 2.0, 3.0, 4.0])
        h = np.zeros(4)
        result = optimality_oracle(g, h, lam=0.0, sample_rate=0.5, seed=3)
        assert result.mvs_objective == pytest.approx(50.0, rel=1e-12)
        assert result.oracle_objective == pytest.approx(50.0, rel=1e-9)
        assert result.n_candidates > 1000

    def test_never_beaten_on_random_instances(self):
        gen = np.random.default_rng(17)
        for trial in range(10):
            n = int(gen.integers(2, 9))
            g = gen.normal(size=n)
            h = gen.uniform(0.0, 1.0, size=n)
            lam = float(gen.choice([0.0, 0.1, 1.0]))
            rate = float(gen.uniform(0.2, 0.9))
            result = optimality_oracle(g, h, lam, rate, n_random=2000,
                                       seed=trial)
            assert result.mvs_objective <= result.oracle_objective + 1e-9

    def test_budget_projection_lands_on_budget(self):
        gen = np.random.default_rng(4)
        raw = gen.uniform(1e-6, 1.0, size=(200, 7))
        projected = _budget_projection(raw, 3.5)
        np.testing.assert_allclose(projected.sum(axis=1), 3.5, rtol=1e-9)
        assert (projected > 0).all() and (projected <= 1.0).all()


class TestScenarioFiles:
    def test_defaults_and_overrides(self, tmp_path):
        path = tmp_path / "scenario.txt"
        path.write_text("n = 50\ng_dist = lognormal  # heavy tail\n\n"
                        "# a comment line\nlambdas = 0.0, 0.5\n")
        config = load_scenario(path)
        assert config["n"] == "50"
        assert config["g_dist"] == "lognormal"
        assert config["lambdas"] == "0.0, 0.5"
        assert config["h_dist"] == SCENARIO_DEFAULTS["h_dist"]

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "scenario.txt"
        path.write_text("rows = 50\n")
        with pytest.raises(MVSBoostError, match="unknown scenario key"):
            load_scenario(path)

    def test_non_assignment_line_rejected(self, tmp_path):
        path = tmp_path / "scenario.txt"
        path.write_text("n 50\n")
        with pytest.raises(MVSBoostError, match="key = value"):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MVSBoostError, match="cannot read"):
            load_scenario(tmp_path / "absent.txt")

    def test_build_inputs_shapes_and_balance(self):
        config = dict(SCENARIO_DEFAULTS, n="90", n_leaves="3", h_dist="uniform")
        g, h, leaf_ids, settings = build_scenario_inputs(config)
        assert g.shape == h.shape == leaf_ids.shape == (90,)
        np.testing.assert_array_equal(np.bincount(leaf_ids), [30, 30, 30])
        assert (h > 0).all()
        assert settings["sample_rate"] == 0.5

    def test_build_inputs_distributions(self):
        base = dict(SCENARIO_DEFAULTS, n="500")
        ones = build_scenario_inputs(dict(base, h_dist="ones"))[1]
        np.testing.assert_allclose(ones, 1.0)
        positive = build_scenario_inputs(
            dict(base, g_dist="lognormal", g_signs="positive"))[0]
        assert (positive > 0).all()
        signed = build_scenario_inputs(
            dict(base, g_dist="lognormal", g_signs="random"))[0]
        assert (signed < 0).any() and (signed > 0).any()

    @pytest.mark.parametrize("overrides, message", [
        (dict(n="abc"), "bad scenario value"),
        (dict(n="0"), "n_leaves"),
        (dict(n_leaves="99", n="5"), "n_leaves"),
        (dict(g_dist="cauchy"), "unknown g_dist"),
        (dict(g_signs="flip"), "unknown g_signs"),
        (dict(h_dist="gamma"), "unknown h_dist"),
    ])
    def test_bad_configs_rejected(self, overrides, message):
        config = dict(SCENARIO_DEFAULTS, **overrides)
        with pytest.raises(MVSBoostError, match=message):
            build_scenario_inputs(config)
