import math

import numpy as np
import pytest

from compatkit.errors import InvalidInputError
from compatkit.hypotest import HypothesisRegion
from compatkit.simlab import (
    BLOCK_SIZE,
    SimConfig,
    calibrate_alternative,
    draw_estimates,
    exact_rejection_probability,
    ks_uniform_distance,
    mc_se,
    power_comparison,
    sample_p_distribution,
    simulate_pvalues,
    size_power,
)

HALF = HypothesisRegion.at_most(0.0)
UNIT = HypothesisRegion.interval(-1.0, 1.0)


class TestConfig:
    def test_method_aliases(self):
        assert SimConfig(0.0, 1.0, 1, UNIT, "hl").method == "HL-UMPU"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"sigma": 0.0},
            {"n": 0},
            {"reps": 0},
            {"seed": -1},
            {"seed": 2**64},
            {"method": "bayes"},
            {"method": "TOST"},
        ],
    )
    def test_validation(self, kwargs):
        base = dict(mu_true=0.0, sigma=1.0, n=1, hypothesis=UNIT, method="divergence", reps=10, seed=0)
        base.update(kwargs)
        with pytest.raises(InvalidInputError):
            SimConfig(**base)

    def test_hl_needs_bounded(self):
        with pytest.raises(InvalidInputError):
            SimConfig(0.0, 1.0, 1, HALF, "HL-UMPU")

    def test_dict_round_trip(self):
        cfg = SimConfig(0.5, 2.0, 9, UNIT, "HL-UMPU", 123, 7)
        assert SimConfig.from_dict(cfg.to_dict()) == cfg
        assert SimConfig.from_dict(cfg.to_dict(), seed=8).seed == 8

    def test_missing_key(self):
        with pytest.raises(InvalidInputError, match="hypothesis"):
            SimConfig.from_dict({"mu_true": 0.0})


class TestGenerator:
    def test_deterministic(self):
        a = draw_estimates(0.0, 1.0, 20_000, 42)
        b = draw_estimates(0.0, 1.0, 20_000, 42)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, draw_estimates(0.0, 1.0, 20_000, 43))

    def test_parallel_matches_serial(self):
        serial = draw_estimates(1.0, 0.5, 5 * BLOCK_SIZE + 17, 9, workers=1)
        parallel = draw_estimates(1.0, 0.5, 5 * BLOCK_SIZE + 17, 9, workers=4)
        assert np.array_equal(serial, parallel)

    def test_prefix_stable(self):
        # replication i depends only on (seed, i), not on the total count
        long = draw_estimates(0.0, 1.0, 3 * BLOCK_SIZE, 5)
        short = draw_estimates(0.0, 1.0, BLOCK_SIZE + 100, 5)
        assert np.array_equal(long[: short.shape[0]], short)

    def test_moments(self):
        x = draw_estimates(2.0, 3.0, 200_000, 1)
        assert abs(x.mean() - 2.0) < 4 * 3.0 / math.sqrt(200_000)
        assert abs(x.std() / 3.0 - 1.0) < 0.01

    def test_report_bit_identical_across_workers(self):
        cfg = SimConfig(0.0, 1.0, 4, UNIT, "divergence", 30_000, 11)
        r1 = sample_p_distribution(cfg, workers=1, keep_pvalues=True)
        r4 = sample_p_distribution(cfg, workers=4, keep_pvalues=True)
        assert r1.to_dict() == r4.to_dict()
        assert np.array_equal(r1.pvalues, r4.pvalues)


class TestReport:
    def test_mass_and_rates(self):
        cfg = SimConfig(0.0, 1.0, 1, HALF, "divergence", 20_000, 3)
        r = sample_p_distribution(cfg, thresholds=(0.2, 0.01, 0.05))
        assert r.mass_at_one + r.conditional_count / r.reps == pytest.approx(1.0, abs=1e-15)
        rates = list(r.rejection_rates.values())
        assert list(r.rejection_rates) == [0.01, 0.05, 0.2]
        assert rates == sorted(rates)
        assert r.mc_se[0.05] == mc_se(r.rejection_rates[0.05], r.reps)

    def test_ks_distance(self):
        assert ks_uniform_distance([0.5]) == 0.5
        assert ks_uniform_distance(np.arange(1, 101) / 100 - 0.005) == pytest.approx(0.005)
        assert ks_uniform_distance([]) == 0.0

    def test_exterior_converges_to_zero(self):
        cfg = SimConfig(2.0, 1.0, 400, UNIT, "divergence", 10_000, 5)
        r = sample_p_distribution(cfg)
        assert r.mass_at_one <= 0.01
        assert r.median_p <= 1e-6

    def test_interior_size_decreases_with_n(self):
        rates = []
        for n in (4, 8, 16, 32):
            cfg = SimConfig(0.5, 1.0, n, UNIT, "divergence", 40_000, 6)
            rates.append(size_power([cfg], [0.10])[0]["rejection_rates"][0.10])
        assert all(a > b for a, b in zip(rates, rates[1:]))
        assert rates[-1] < 0.01

    def test_validity_on_half_line_boundary(self):
        cfg = SimConfig(0.0, 1.0, 1, HALF, "divergence", 50_000, 12)
        p = simulate_pvalues(cfg)
        for u in np.linspace(0.01, 0.99, 99):
            r = float(np.mean(p <= u))
            assert r <= u / 2 + 3 * mc_se(u / 2, p.shape[0])
            assert r <= u + 3 * mc_se(u, p.shape[0])

    @pytest.mark.parametrize(
        "mu, region, method",
        [
            (0.0, HALF, "divergence"),
            (1.0, UNIT, "divergence"),
            (1.0, UNIT, "HL-UMPU"),
            (1.3, UNIT, "HL-UMPU"),
            (0.0, HypothesisRegion.nonequivalence(-1.0, 1.0), "TOST"),
            (0.0, HypothesisRegion.nonequivalence(-1.0, 1.0), "divergence"),
        ],
    )
    def test_matches_exact_rejection_probability(self, mu, region, method):
        cfg = SimConfig(mu, 1.0, 9, region, method, 50_000, 13)
        for alpha in (0.01, 0.05, 0.10):
            exact = exact_rejection_probability(cfg, alpha)
            sim = float(np.mean(simulate_pvalues(cfg) <= alpha))
            assert abs(sim - exact) <= 4 * mc_se(exact, cfg.reps) + 1e-12


class TestPower:
    def test_calibration(self):
        alt = calibrate_alternative(HypothesisRegion.interval(-10.0, 0.0), 1.0, 1)
        assert alt == pytest.approx(1.6448536269514722 + 0.8416212335729143, rel=1e-12)
        cfg = SimConfig(alt, 1.0, 1, HypothesisRegion.interval(-10.0, 0.0), "HL-UMPU", 1)
        assert exact_rejection_probability(cfg, 0.05) == pytest.approx(0.80, abs=1e-6)

    def test_dominance(self):
        for alt in (0.0, 0.5, 1.0, 2.0, 3.0):
            r = power_comparison(alt, UNIT, 4, 20_000, 17)
            assert r.power_hl >= r.power_divergence

    def test_deep_interior(self):
        r = power_comparison(0.0, HypothesisRegion.interval(-5.0, 5.0), 4, 20_000, 18)
        assert r.power_hl <= 0.05 and r.power_divergence <= 0.05

    def test_rejects_half_line(self):
        with pytest.raises(InvalidInputError):
            power_comparison(1.0, HALF, 1, 100, 0)
