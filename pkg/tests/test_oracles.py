import numpy as np
import pytest

from audiocert import CertBudget, Direction, chi_square_lower_quantile, error_probability
from audiocert import oracles


class TestReferenceRoutes:
    def test_error_probability_routes_agree(self):
        for n, k, delta, c in [(1000, 20, 0.9, 1.0), (500, 40, 0.75, 2.5), (20000, 1, 0.9, 0.3)]:
            assert error_probability(n, k, delta, c) == pytest.approx(
                oracles.mp_error_probability(n, k, delta, c), rel=1e-12)

    def test_chi_square_routes_agree(self):
        for df in (1, 10, 100, 2000):
            for p in (1e-7, 0.05, 0.5):
                assert chi_square_lower_quantile(df, p) == pytest.approx(
                    oracles.mp_chi_square_quantile(df, p), rel=1e-9)

    def test_chi_square_bisection_round_trip(self):
        x = oracles.mp_chi_square_quantile(10, 0.05)
        assert oracles.mp_chi_square_cdf(x, 10) == pytest.approx(0.05, rel=1e-9)


class TestScoreModels:
    def test_beta_tail_exact_rational(self):
        # I_{1/2}(8, 2) = 10/2^9 by expanding the binomial tail sum
        assert oracles.BetaScores(8, 2).tail(Direction.BONA_FIDE) == pytest.approx(
            10 / 512, abs=1e-15)
        assert oracles.BetaScores(2, 8).tail(Direction.SPOOF) == pytest.approx(
            10 / 512, abs=1e-15)

    def test_beta_mgf_normalized_at_zero(self):
        assert oracles.BetaScores(8, 2).mgf_shifted(0.0) == pytest.approx(1.0, rel=1e-12)

    def test_beta_chernoff_value_bounds_tail(self):
        model = oracles.BetaScores(8, 2)
        inf_val = model.chernoff_value((-50.0, -1e-4))
        assert model.tail(Direction.BONA_FIDE) <= inf_val <= 0.5
        assert inf_val == pytest.approx(0.11587561780015727, rel=1e-6)

    def test_two_point_closed_forms(self):
        model = oracles.TwoPointScores(0.4, 0.9, 0.03)
        assert model.tail(Direction.BONA_FIDE) == 0.03
        assert model.tail(Direction.SPOOF) == 0.97
        # stationary tilt solves e^{t/2} = 0.1 w / (0.4 (1-w))
        t_star = 2.0 * np.log(0.1 * 0.03 / (0.4 * 0.97))
        assert model.mgf_shifted(t_star) == pytest.approx(0.0991684126946, rel=1e-9)
        assert model.mgf_shifted(t_star) <= model.mgf_shifted(t_star * 0.8)
        assert model.mgf_shifted(t_star) <= model.mgf_shifted(t_star * 1.2)

    def test_samplers_match_tails_empirically(self):
        rng = np.random.default_rng(0)
        for model in (oracles.BetaScores(8, 2), oracles.TwoPointScores(0.4, 0.9, 0.03)):
            z = model.sample(rng, 200_000)
            frac = float((z < 0.5).mean())
            assert frac == pytest.approx(model.tail(Direction.BONA_FIDE), abs=3e-3)

    def test_constant_model(self):
        model = oracles.ConstantScores(0.9)
        assert model.tail(Direction.BONA_FIDE) == 0.0
        assert model.tail(Direction.SPOOF) == 1.0
        assert (model.sample(np.random.default_rng(1), 7) == 0.9).all()


class TestMonteCarloHarnesses:
    def test_soundness_smoke(self):
        bud = CertBudget(200, 5, 0.9, 1e-3)
        out = oracles.run_soundness(oracles.TwoPointScores(0.4, 0.9, 0.03), bud, 1e-3, 40, seed=0)
        assert out["trials"] == 40
        assert out["violation_rate"] <= 0.05
        # the certified bound can never undercut the true Chernoff value by
        # more than the delta slack, on average it sits well above the tail
        assert out["mean_bound"] >= out["tail"]

    def test_cv_coverage_smoke(self):
        sampler, cv = oracles.normal_sampler(10.0, 2.0)
        out = oracles.cv_coverage(sampler, cv, 2000, 0.05, 200, seed=3)
        assert out["methods"] == {"mckay": 200}
        assert out["coverage"] >= 0.95

    def test_soundness_trial_reports_context(self):
        bud = CertBudget(100, 4, 0.9, 1e-3)
        r = oracles.soundness_trial(oracles.BetaScores(8, 2), bud, 1e-3, trial_seed=(1, 2))
        assert set(r) >= {"violation", "bound", "error_prob", "tail"}
        assert r["tail"] == pytest.approx(10 / 512)
