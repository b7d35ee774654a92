"""Price-path oracles: schedule constants, deterministic streams, GBM moments."""
from __future__ import annotations

import math

import numpy as np
import pytest

from poolgov.market import (
    TOKENS,
    EpisodeRandomness,
    PricePaths,
    drift,
    schedule_attacks,
    step_price,
    volatility,
)


class TestSchedules:
    def test_drift_constants(self):
        assert drift("WETH", 0) == 0.0
        assert drift("USDC", 123) == 1e-4
        assert drift("TKN", 7) == 1e-5

    def test_weth_volatility_zero(self):
        assert all(volatility("WETH", t) == 0.0 for t in (0, 200, 449))

    def test_usdc_volatility_flat(self):
        assert all(volatility("USDC", t) == 0.05 for t in (0, 200, 449))

    def test_tkn_volatility_frozen_points(self):
        assert volatility("TKN", 200) == 0.05
        assert volatility("TKN", 0) == pytest.approx(0.13, rel=1e-12)
        assert volatility("TKN", 400) == pytest.approx(0.13, rel=1e-12)
        assert volatility("TKN", 100) == pytest.approx(0.07, rel=1e-12)

    def test_tkn_volatility_minimum_at_midpoint(self):
        values = [volatility("TKN", t) for t in range(450)]
        assert min(values) == values[200] == 0.05


class TestStepPrice:
    def test_zero_vol_is_exponential(self):
        assert step_price(2.0, 1e-4, 0.0, 1.234) == pytest.approx(
            2.0002000100003334, rel=1e-12
        )

    def test_zero_vol_compounds_exactly(self):
        price = 1.0
        for _ in range(10):
            price = step_price(price, 1e-4, 0.0, -5.0)
        assert price == pytest.approx(math.exp(10 * 1e-4), rel=1e-12)

    def test_vol_drag_applied(self):
        # z = 0 leaves only mu - sigma^2 / 2 in the exponent
        got = step_price(1.0, 1e-4, 0.05, 0.0)
        assert got == pytest.approx(math.exp(1e-4 - 0.00125), rel=1e-12)


class TestPaths:
    def test_weth_pinned_at_one(self):
        paths = PricePaths(EpisodeRandomness(5, 0, 0))
        for _ in range(450):
            paths.advance()
        assert paths.path["WETH"] == 1.0

    def test_identical_seeds_identical_paths(self):
        a = PricePaths(EpisodeRandomness(9, 1, 4))
        b = PricePaths(EpisodeRandomness(9, 1, 4))
        for _ in range(300):
            a.advance()
            b.advance()
            assert a.path == b.path

    def test_attack_scheduling_does_not_perturb_prices(self):
        ra = EpisodeRandomness(21, 0, 3)
        rb = EpisodeRandomness(21, 0, 3)
        schedule_attacks(ra.attack_rng, 450, 1, 3)
        a, b = PricePaths(ra), PricePaths(rb)
        for _ in range(200):
            a.advance()
            b.advance()
        assert a.path == b.path

    def test_distinct_episodes_differ(self):
        a = PricePaths(EpisodeRandomness(9, 0, 4))
        b = PricePaths(EpisodeRandomness(9, 0, 5))
        for _ in range(50):
            a.advance()
            b.advance()
        assert a.path["TKN"] != b.path["TKN"]

    def test_volatility_scale_zero_is_deterministic(self):
        paths = PricePaths(EpisodeRandomness(2, 0, 0), volatility_scale=0.0)
        for _ in range(100):
            paths.advance()
        assert paths.path["USDC"] == pytest.approx(math.exp(100 * 1e-4), rel=1e-12)
        assert paths.path["TKN"] == pytest.approx(math.exp(100 * 1e-5), rel=1e-12)

    def test_mc_mean_log_increment(self):
        # sample mean of USDC log returns must sit within 4 standard errors
        # of mu - sigma^2 / 2 = -0.00115; 250 seeded paths of 400 steps
        total = 0.0
        n = 0
        for idx in range(250):
            paths = PricePaths(EpisodeRandomness(123, 0, idx))
            last = 1.0
            for _ in range(400):
                paths.advance()
                new = paths.path["USDC"]
                total += math.log(new / last)
                last = new
                n += 1
        mean = total / n
        se = 0.05 / math.sqrt(n)
        assert abs(mean - (1e-4 - 0.00125)) < 4 * se


class TestVolEstimate:
    def test_seeded_before_two_returns(self):
        paths = PricePaths(EpisodeRandomness(0, 0, 0))
        assert paths.vol_estimate("TKN") == pytest.approx(0.13, rel=1e-12)
        paths.advance()
        assert paths.vol_estimate("TKN") == pytest.approx(
            volatility("TKN", 1), rel=1e-12
        )

    def test_alternating_returns_population_std(self):
        paths = PricePaths(EpisodeRandomness(0, 0, 0))
        returns = [0.02 if i % 2 == 0 else -0.02 for i in range(30)]
        paths.returns["USDC"].extend(returns)
        assert paths.vol_estimate("USDC") == pytest.approx(0.02, rel=1e-12)

    def test_constant_price_zero_estimate(self):
        paths = PricePaths(EpisodeRandomness(0, 0, 0), volatility_scale=0.0)
        for _ in range(40):
            paths.advance()
        assert paths.vol_estimate("WETH") == 0.0

    def test_window_limits_history(self):
        paths = PricePaths(EpisodeRandomness(0, 0, 0), window=30)
        paths.returns["USDC"].extend([5.0] * 10)
        paths.returns["USDC"].extend([0.01, -0.01] * 15)
        assert paths.vol_estimate("USDC") == pytest.approx(0.01, rel=1e-12)


class TestAttackSchedule:
    def test_counts_and_bounds(self):
        for idx in range(300):
            rng = EpisodeRandomness(4, 0, idx).attack_rng
            steps = schedule_attacks(rng, 450, 1, 3)
            assert 1 <= len(steps) <= 3
            assert len(set(steps)) == len(steps)
            assert list(steps) == sorted(steps)
            assert all(0 <= s < 450 for s in steps)

    def test_disabled_is_empty(self):
        rng = EpisodeRandomness(4, 0, 0).attack_rng
        assert schedule_attacks(rng, 450, 1, 3, enabled=False) == ()

    def test_count_range_exercised(self):
        sizes = {
            len(schedule_attacks(EpisodeRandomness(4, 0, i).attack_rng, 450, 1, 3))
            for i in range(200)
        }
        assert sizes == {1, 2, 3}

    def test_deterministic(self):
        a = schedule_attacks(EpisodeRandomness(7, 0, 9).attack_rng, 450, 1, 3)
        b = schedule_attacks(EpisodeRandomness(7, 0, 9).attack_rng, 450, 1, 3)
        assert a == b
