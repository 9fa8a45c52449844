"""Targeting step: fluctuation, influence values, variance, and interval."""

import numpy as np
import pytest

from nof1trial import (
    PositivityError,
    TmleInput,
    ValidationError,
    clever_covariate,
    cond_var_path,
    eic_value,
    expit,
    fluctuate,
    solve_epsilon,
    tmle_estimate,
)

Z975 = 1.959963984540054


def make_input(y, a, d, g1, q_obs, q_rule, **kwargs):
    return TmleInput(
        y=np.asarray(y, dtype=float),
        a=np.asarray(a, dtype=float),
        d=np.asarray(d, dtype=float),
        g1=np.asarray(g1, dtype=float),
        q_obs=np.asarray(q_obs, dtype=float),
        q_rule=np.asarray(q_rule, dtype=float),
        **kwargs,
    )


class TestCleverCovariate:
    def test_on_rule_arm(self):
        assert clever_covariate(1, 1, 0.5) == 2.0
        assert clever_covariate(1, 1, 0.9) == pytest.approx(1.0 / 0.9, rel=1e-15)

    def test_off_rule_arm_is_zero(self):
        assert clever_covariate(0, 1, 0.5) == 0.0

    def test_positivity_guard(self):
        with pytest.raises(PositivityError):
            clever_covariate(1, 1, 0.001)

    def test_vector_form(self):
        h = clever_covariate(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([0.25, 0.5]))
        assert h.tolist() == [4.0, 0.0]


class TestSolveEpsilon:
    def test_zero_when_score_already_solved(self):
        y = np.array([1.0, 0.0])
        q = np.array([0.8, 0.2])
        h = np.ones(2)
        eps, clamped, degenerate = solve_epsilon(y, q, h)
        assert eps == pytest.approx(0.0, abs=1e-10)
        assert not clamped and not degenerate

    def test_moves_toward_underfit_outcomes(self):
        y = np.ones(4)
        q = np.full(4, 0.4)
        eps, clamped, _ = solve_epsilon(y, q, np.ones(4))
        assert clamped or eps > 0.0

    def test_solves_the_score_equation(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = int(rng.integers(5, 40))
            y = rng.integers(0, 2, n).astype(float)
            q = rng.uniform(0.1, 0.9, n)
            h = rng.choice([0.0, 2.0, 4.0], size=n)
            if not (h * (1 - y)).any() or not (h * y).any():
                continue  # one-sided cases diverge by design
            eps, clamped, degenerate = solve_epsilon(y, q, h)
            if clamped or degenerate:
                continue
            score = np.sum(h * (y - expit(np.log(q / (1 - q)) + eps * h)))
            assert abs(score) <= 1e-8 * max(1.0, n)

    def test_divergent_case_clamps_with_flag(self):
        eps, clamped, degenerate = solve_epsilon(
            np.array([1.0]), np.array([0.5]), np.array([1.0])
        )
        assert eps == 10.0
        assert clamped and not degenerate

    def test_all_zero_direction_is_degenerate(self):
        eps, clamped, degenerate = solve_epsilon(
            np.array([1.0, 0.0]), np.array([0.5, 0.5]), np.zeros(2)
        )
        assert eps == 0.0
        assert degenerate and not clamped


class TestFluctuate:
    def test_zero_epsilon_is_identity(self):
        q = np.array([0.2, 0.5, 0.9])
        assert np.array_equal(fluctuate(q, np.ones(3), 0.0), q)

    def test_frozen_value(self):
        assert fluctuate(0.5, 2.0, 0.1) == pytest.approx(
            0.54983399731247791, rel=1e-15
        )

    def test_zero_direction_is_identity(self):
        assert fluctuate(0.3, 0.0, 5.0) == pytest.approx(0.3, rel=1e-15)

    def test_strictly_increasing_in_epsilon_for_positive_direction(self):
        values = [fluctuate(0.4, 1.5, eps) for eps in (-1.0, -0.5, 0.0, 0.5, 1.0)]
        assert all(b > a for a, b in zip(values, values[1:]))


class TestEicValue:
    def test_zero_residual(self):
        assert eic_value(0.75, 0.75, 1, 1, 0.5) == 0.0

    def test_frozen_value(self):
        assert eic_value(1.0, 0.75, 1, 1, 0.5) == pytest.approx(0.5, rel=1e-15)

    def test_off_rule_rows_contribute_nothing(self):
        assert eic_value(1.0, 0.2, 0, 1, 0.5) == 0.0


class TestTmleInput:
    def test_positivity_enforced(self):
        with pytest.raises(PositivityError):
            make_input([1.0], [1.0], [1.0], [0.001], [0.5], [0.5])

    def test_prediction_bounds_enforced(self):
        with pytest.raises(ValidationError):
            make_input([1.0], [1.0], [1.0], [0.5], [0.9999], [0.5])

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            make_input([], [], [], [], [], [])

    def test_arm_probabilities(self):
        inp = make_input([1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.7, 0.7], [0.5, 0.5], [0.5, 0.5])
        assert inp.g_obs.tolist() == [0.7, pytest.approx(0.3)]
        assert inp.g_rule.tolist() == [0.7, 0.7]


class TestTmleEstimate:
    def _alternating_input(self, n=100):
        # observed rows sit on the rule arm with g=0.25, so H=4 and the
        # influence values alternate exactly +/-2 around a solved score
        y = np.array([1.0, 0.0] * (n // 2))
        return make_input(
            y=y,
            a=np.ones(n),
            d=np.ones(n),
            g1=np.full(n, 0.25),
            q_obs=np.full(n, 0.5),
            q_rule=np.full(n, 0.5),
        )

    def test_solved_score_keeps_initial_fit(self):
        report = tmle_estimate(self._alternating_input())
        assert report.epsilon == pytest.approx(0.0, abs=1e-12)
        assert report.psi_hat == pytest.approx(0.5, rel=1e-15)

    def test_frozen_variance_and_interval(self):
        report = tmle_estimate(self._alternating_input(100), alpha=0.05)
        assert report.sigma2_hat == pytest.approx(4.0, rel=1e-12)
        half = Z975 * np.sqrt(4.0 / 100)
        assert half == pytest.approx(0.3919927969080108, rel=1e-14)
        assert report.ci[0] == pytest.approx(report.psi_hat - half, rel=1e-12)
        assert report.ci[1] == pytest.approx(report.psi_hat + half, rel=1e-12)

    def test_interval_symmetry_is_exact(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            n = int(rng.integers(10, 60)) * 2
            y = rng.integers(0, 2, n).astype(float)
            a = rng.integers(0, 2, n).astype(float)
            d = rng.integers(0, 2, n).astype(float)
            g1 = rng.uniform(0.1, 0.9, n)
            q = rng.uniform(0.1, 0.9, n)
            report = tmle_estimate(make_input(y, a, d, g1, q, q))
            lo, hi = report.ci
            assert hi - report.psi_hat == pytest.approx(report.psi_hat - lo, rel=1e-9)
            width = 2.0 * Z975 * np.sqrt(report.sigma2_hat / n)
            assert hi - lo == pytest.approx(width, rel=1e-12)

    def test_score_residual_bounded_when_interior(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = 40
            y = rng.integers(0, 2, n).astype(float)
            a = rng.integers(0, 2, n).astype(float)
            d = rng.integers(0, 2, n).astype(float)
            g1 = rng.uniform(0.2, 0.8, n)
            q = rng.uniform(0.2, 0.8, n)
            report = tmle_estimate(make_input(y, a, d, g1, q, q))
            if "epsilon_clamped" not in report.flags:
                bound = 1e-8 * max(1.0, np.sqrt(report.sigma2_hat))
                assert abs(report.score_residual) <= bound

    def test_degenerate_direction_flagged(self):
        # every observed arm disagrees with the rule: nothing to fluctuate
        report = tmle_estimate(
            make_input([1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.4, 0.4], [0.6, 0.6])
        )
        assert "epsilon_degenerate" in report.flags
        assert report.epsilon == 0.0
        assert report.psi_hat == pytest.approx(0.6, rel=1e-15)

    def test_alpha_validated(self):
        with pytest.raises(ValidationError):
            tmle_estimate(self._alternating_input(), alpha=1.5)

    def test_report_serializes(self):
        report = tmle_estimate(self._alternating_input())
        blob = report.to_json_dict()
        assert blob["n"] == 100
        assert blob["ci"][0] < blob["psi_hat"] < blob["ci"][1]


class TestCondVarPath:
    def test_constant_inputs_give_constant_path(self):
        n = 400
        inp = make_input(
            y=np.zeros(n),
            a=np.ones(n),
            d=np.ones(n),
            g1=np.full(n, 0.5),
            q_obs=np.full(n, 0.5),
            q_rule=np.full(n, 0.5),
        )
        path = cond_var_path(inp, np.full(n, 0.5), (100, 200, 300, 400))
        assert [p[0] for p in path] == [100, 200, 300, 400]
        for _, avg in path:
            assert avg == pytest.approx(0.5, rel=1e-15)

    def test_degenerate_predictions_give_zero(self):
        n = 10
        inp = make_input(
            y=np.zeros(n),
            a=np.ones(n),
            d=np.ones(n),
            g1=np.full(n, 0.5),
            q_obs=np.full(n, 0.5),
            q_rule=np.full(n, 0.5),
        )
        q_star = np.array([0.0, 1.0] * 5)
        path = cond_var_path(inp, q_star, (10,))
        assert path[0][1] == 0.0

    def test_grid_bounds_validated(self):
        inp = make_input([1.0], [1.0], [1.0], [0.5], [0.5], [0.5])
        with pytest.raises(ValidationError):
            cond_var_path(inp, np.array([0.5]), (2,))

    def test_default_grid_is_final_row(self):
        report = tmle_estimate(
            make_input(
                [1.0, 0.0, 1.0, 0.0],
                [1.0, 1.0, 0.0, 0.0],
                [1.0, 1.0, 1.0, 1.0],
                [0.5, 0.5, 0.5, 0.5],
                [0.5, 0.5, 0.5, 0.5],
                [0.5, 0.5, 0.5, 0.5],
            )
        )
        assert len(report.cond_var_path) == 1
        assert report.cond_var_path[0][0] == 4
