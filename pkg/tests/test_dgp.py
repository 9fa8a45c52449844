"""Structural-equation simulator and its exact oracles."""

import numpy as np
import pytest

from nof1trial import (
    ContextSpec,
    DGP_PRESETS,
    SpecificationError,
    ValidationError,
    expit,
    logit,
    oracle_mean_matrix,
    resolve_dgp,
    sim1a,
    sim1b,
    simulate_burn_in,
    step,
    true_blip,
    true_conditional_mean,
)
from nof1trial.core import Block, ContextSummary, TrialHistory
from nof1trial.dgp import CovariateEquation, DgpSpec, EquationTerm, OutcomeEquation

LAG1_SPEC = ContextSpec.from_map({"Y": [1], "W1": [1]})


def _ctx(y_prev, w1_prev):
    return ContextSummary(np.array([y_prev, w1_prev], dtype=float), 5, LAG1_SPEC)


class TestExpitLogit:
    def test_expit_at_zero(self):
        assert expit(0.0) == 0.5

    def test_expit_frozen_value(self):
        assert expit(1.5) == pytest.approx(0.81757447619364366, rel=1e-15)

    def test_expit_saturates_without_error(self):
        assert expit(-745.0) >= 0.0
        assert expit(745.0) <= 1.0

    def test_logit_frozen_value(self):
        assert logit(0.75) == pytest.approx(1.0986122886681098, rel=1e-15)

    def test_logit_inverts_expit(self):
        for x in (-3.0, -0.4, 0.0, 0.7, 2.5):
            assert logit(expit(x)) == pytest.approx(x, abs=1e-12)


class TestPresets:
    def test_presets_resolve(self):
        assert set(DGP_PRESETS) == {"sim1a", "sim1b"}
        assert resolve_dgp("sim1a").w_names == ("W1", "W2")

    def test_unknown_id_rejected(self):
        with pytest.raises(ValidationError):
            resolve_dgp("sim9z")

    def test_lag_structure_differs_between_presets(self):
        a = {(t.source, t.lag) for t in sim1a().y_equation.terms}
        b = {(t.source, t.lag) for t in sim1b().y_equation.terms}
        assert a == {("Y", 1), ("W1", 1)}
        assert b == {("Y", 3), ("W1", 4)}

    def test_shared_coefficients(self):
        for spec in (sim1a(), sim1b()):
            assert spec.y_equation.treat_coef == 1.5
            coefs = sorted(t.coef for t in spec.y_equation.terms)
            assert coefs == [-1.1, 0.5]

    def test_equation_validation(self):
        with pytest.raises(ValidationError):
            DgpSpec(
                y_equation=OutcomeEquation(1.0, (EquationTerm("Y", 0, 0.5),)),
                w_equations=(),
            )
        with pytest.raises(ValidationError):
            DgpSpec(
                y_equation=OutcomeEquation(1.0, (EquationTerm("Q", 1, 0.5),)),
                w_equations=(),
            )
        with pytest.raises(ValidationError):
            CovariateEquation("W1", "exotic", ())


class TestBurnIn:
    def test_four_blocks_with_binary_nodes_in_range(self):
        blocks = simulate_burn_in(sim1a(), np.random.default_rng(3))
        assert len(blocks) == 4
        for b in blocks:
            assert b.a in (0, 1)
            assert b.y in (0.0, 1.0)
            assert b.w[0] in (0.0, 1.0)  # W1 binary
            assert np.isfinite(b.w[1])  # W2 continuous

    def test_same_seed_same_blocks(self):
        one = simulate_burn_in(sim1a(), np.random.default_rng(11))
        two = simulate_burn_in(sim1a(), np.random.default_rng(11))
        assert one == two

    def test_marginal_mean_of_treatment(self):
        rng = np.random.default_rng(0)
        total = 100_000
        draws = total // 4
        mean_a = np.mean(
            [b.a for _ in range(draws) for b in simulate_burn_in(sim1a(), rng)]
        )
        assert abs(mean_a - 0.5) < 0.01


class TestStep:
    def _history(self, y_prev, w1_prev):
        spec = sim1a()
        blocks = tuple(
            Block(0, float(y_prev), (float(w1_prev), 0.0)) for _ in range(4)
        )
        return TrialHistory(blocks, spec.w_names)

    def test_deterministic_given_seed(self):
        h = self._history(1, 0)
        b1 = step(sim1a(), h, 1, np.random.default_rng(5))
        b2 = step(sim1a(), h, 1, np.random.default_rng(5))
        assert b1 == b2
        assert b1.a == 1

    def test_outcome_rate_matches_oracle(self):
        # zero linear predictor arm and a strongly treated arm
        spec = sim1a()
        rng = np.random.default_rng(7)
        for a, y_prev, w1_prev in ((0, 0, 0), (1, 0, 0), (1, 1, 1)):
            h = self._history(y_prev, w1_prev)
            truth = true_conditional_mean(spec, _ctx(y_prev, w1_prev), a)
            n = 100_000
            hits = sum(step(spec, h, a, rng).y for _ in range(n))
            se = np.sqrt(truth * (1.0 - truth) / n)
            assert abs(hits / n - truth) < 3.0 * se

    def test_longer_lags_consumed_by_second_preset(self):
        spec = sim1b()
        blocks = tuple(Block(0, 0.0, (0.0, 0.0)) for _ in range(4))
        h = TrialHistory(blocks, spec.w_names)
        # with an all-zero history the outcome rate under a=1 is expit(1.5)
        rng = np.random.default_rng(2)
        n = 50_000
        hits = sum(step(spec, h, 1, rng).y for _ in range(n))
        truth = expit(1.5)
        assert abs(hits / n - truth) < 3.0 * np.sqrt(truth * (1 - truth) / n)


class TestOracles:
    def test_conditional_mean_frozen_values(self):
        spec = sim1a()
        assert true_conditional_mean(spec, _ctx(0, 0), 1) == pytest.approx(
            0.81757447619364366, rel=1e-15
        )
        assert true_conditional_mean(spec, _ctx(0, 0), 0) == 0.5
        assert true_conditional_mean(spec, _ctx(1, 1), 1) == pytest.approx(
            0.71094950262500397, rel=1e-15
        )
        assert true_conditional_mean(spec, _ctx(1, 1), 0) == pytest.approx(
            0.35434369377420455, rel=1e-15
        )

    def test_blip_frozen_values(self):
        spec = sim1a()
        expected = {
            (0, 0): 0.31757447619364366,
            (1, 0): 0.25833774677602788,
            (0, 1): 0.34894776570756963,
            (1, 1): 0.35660580885079942,
        }
        for (yp, wp), value in expected.items():
            assert true_blip(spec, _ctx(yp, wp)) == pytest.approx(value, rel=1e-12)

    def test_blip_is_mean_difference(self):
        spec = sim1a()
        rng = np.random.default_rng(1)
        for _ in range(50):
            ctx = _ctx(rng.random(), rng.random())
            diff = true_conditional_mean(spec, ctx, 1) - true_conditional_mean(
                spec, ctx, 0
            )
            assert true_blip(spec, ctx) == diff

    def test_zero_treatment_coefficient_means_zero_blip(self):
        spec = DgpSpec(
            y_equation=OutcomeEquation(0.0, (EquationTerm("Y", 1, 0.5),)),
            w_equations=(),
        )
        ctx_spec = ContextSpec.from_map({"Y": [1]})
        for y_prev in (0.0, 0.3, 1.0):
            ctx = ContextSummary(np.array([y_prev]), 5, ctx_spec)
            assert true_blip(spec, ctx) == 0.0

    def test_missing_feature_raises(self):
        ctx_spec = ContextSpec.from_map({"Y": [1]})
        ctx = ContextSummary(np.array([0.0]), 5, ctx_spec)
        with pytest.raises(SpecificationError):
            true_conditional_mean(sim1a(), ctx, 1)


class TestOracleMeanMatrix:
    def test_matches_scalar_oracle_rowwise(self):
        spec = sim1a()
        rng = np.random.default_rng(9)
        contexts = rng.random((40, 2))
        a = rng.integers(0, 2, size=40).astype(float)
        vec = oracle_mean_matrix(spec, LAG1_SPEC, contexts, a)
        for i in range(40):
            assert vec[i] == true_conditional_mean(spec, _ctx(*contexts[i]), a[i])

    def test_scalar_treatment_broadcasts(self):
        spec = sim1a()
        contexts = np.array([[0.0, 0.0], [1.0, 1.0]])
        ones = oracle_mean_matrix(spec, LAG1_SPEC, contexts, 1.0)
        each = oracle_mean_matrix(spec, LAG1_SPEC, contexts, np.ones(2))
        assert np.array_equal(ones, each)
