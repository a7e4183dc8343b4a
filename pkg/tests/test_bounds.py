"""Bound evaluator tests: frozen spot value, mpmath oracle, monotonicity."""

import math

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st

from nashkit.bounds import BoundInputs, evaluate_bound
from nashkit.errors import ConfigError
from nashkit.games import GameShape

# Frozen reference for the spot check: 2 players, 2 actions each, L = 1,
# m = 10^6, delta = 0.05, single radius 0.25. Recomputed independently by
# the mpmath oracle below.
SPOT_VALUE_6SF = 717.226


def spot_inputs():
    return BoundInputs(
        m=10**6,
        delta=0.05,
        lipschitz=1.0,
        shape=GameShape(2, (2, 2)),
        r_grid=(0.25,),
    )


def mpmath_bound(m, delta, lipschitz, counts, r):
    """Direct high-precision evaluation of the closed-form expression,
    sharing no code with the package implementation."""
    mp.mp.dps = 50
    n = len(counts)
    A = 1
    for k in counts:
        A *= k
    c = mp.ceil(4 * mp.mpf(lipschitz) / r)
    s = sum(
        (k - 1) * mp.log((mp.e * 40 * n * k / mp.mpf(r) + mp.e * k) / (k - 1))
        for k in counts
        if k > 1
    )
    ln_n = c ** (n * A) * s
    delta_m = mp.sqrt(2 * ln_n / m) + 2 * mp.mpf(r)
    conf = 4 * mp.sqrt(2 * mp.log(4 / mp.mpf(delta)) / m)
    return 2 * delta_m + conf


class TestSpotValue:
    def test_frozen_literal_matches_oracle(self):
        oracle = mpmath_bound(10**6, 0.05, 1.0, (2, 2), 0.25)
        assert float(mp.nstr(oracle, 6)) == SPOT_VALUE_6SF

    def test_implementation_matches_to_six_figures(self):
        result = evaluate_bound(spot_inputs())
        assert result.bound == pytest.approx(SPOT_VALUE_6SF, rel=5e-6)
        assert not result.overflow
        assert result.best_radius == 0.25

    def test_pieces(self):
        result = evaluate_bound(spot_inputs())
        # lnN = 16^8 * 2*(ln 642 + 1)
        expected_ln_n = 16**8 * 2 * (math.log(642.0) + 1.0)
        assert result.per_radius[0].log_cover == pytest.approx(expected_ln_n, rel=1e-12)
        assert result.confidence_term == pytest.approx(
            4 * math.sqrt(2 * math.log(80.0) / 1e6), rel=1e-12
        )


class TestAgainstOracle:
    @pytest.mark.parametrize(
        "m,delta,lip,counts,r",
        [
            (100, 0.1, 0.5, (2, 3), 0.5),
            (10**4, 0.01, 2.0, (2, 2, 2), 1.0),
            (10**8, 0.5, 1.0, (3, 3), 0.125),
            (50, 0.2, 0.0, (4, 2), 0.3),  # L = 0: cover collapses
            (10**6, 0.05, 0.1, (2, 2), 1.0),  # ceil(4L/r) = 1 branch
        ],
    )
    def test_matches_high_precision(self, m, delta, lip, counts, r):
        shape = GameShape(len(counts), counts)
        result = evaluate_bound(
            BoundInputs(m=m, delta=delta, lipschitz=lip, shape=shape, r_grid=(r,))
        )
        oracle = float(mpmath_bound(m, delta, lip, counts, r))
        assert result.bound == pytest.approx(oracle, rel=1e-10)


class TestMonotonicity:
    def test_decreasing_in_m(self):
        shape = GameShape(2, (2, 2))
        grid = (0.05, 0.1, 0.25, 0.5, 1.0)
        values = [
            evaluate_bound(
                BoundInputs(m=m, delta=0.05, lipschitz=1.0, shape=shape, r_grid=grid)
            ).bound
            for m in (10**2, 10**4, 10**6, 10**8, 10**10)
        ]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_increasing_as_delta_shrinks(self):
        shape = GameShape(2, (2, 2))
        values = [
            evaluate_bound(
                BoundInputs(m=10**6, delta=d, lipschitz=1.0, shape=shape, r_grid=(0.25,))
            ).bound
            for d in (0.5, 0.1, 0.01, 1e-6)
        ]
        assert all(b > a for a, b in zip(values, values[1:]))

    @given(
        m=st.integers(10, 10**9),
        delta=st.floats(1e-6, 0.99),
        lip=st.floats(0.0, 100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_m_monotone_property(self, m, delta, lip):
        shape = GameShape(2, (3, 2))
        grid = (0.01, 0.1, 1.0)
        small = evaluate_bound(
            BoundInputs(m=m, delta=delta, lipschitz=lip, shape=shape, r_grid=grid)
        ).bound
        large = evaluate_bound(
            BoundInputs(m=m * 10, delta=delta, lipschitz=lip, shape=shape, r_grid=grid)
        ).bound
        if math.isinf(small):
            assert large <= small or math.isinf(large)
        else:
            assert large <= small + 1e-12


class TestOverflow:
    def test_large_shape_overflows_to_inf(self):
        shape = GameShape(3, (30, 30, 30))
        result = evaluate_bound(
            BoundInputs(m=10**6, delta=0.05, lipschitz=10.0, shape=shape,
                        r_grid=(0.01,))
        )
        assert result.overflow and math.isinf(result.bound)
        assert result.per_radius[0].overflow

    def test_large_radius_rescues_overflow(self):
        # A radius >= 4L makes the ceil factor 1; the bound becomes finite
        # even for big shapes.
        shape = GameShape(3, (30, 30, 30))
        result = evaluate_bound(
            BoundInputs(m=10**6, delta=0.05, lipschitz=1.0, shape=shape,
                        r_grid=(0.01, 8.0))
        )
        assert not result.overflow
        assert result.best_radius == 8.0

    def test_grid_minimum_wins(self):
        shape = GameShape(2, (2, 2))
        grid = (0.01, 0.05, 0.25, 1.0, 4.0)
        result = evaluate_bound(
            BoundInputs(m=10**6, delta=0.05, lipschitz=1.0, shape=shape, r_grid=grid)
        )
        assert result.delta_m == min(t.value for t in result.per_radius)


class TestValidation:
    def test_bad_inputs(self):
        shape = GameShape(2, (2, 2))
        with pytest.raises(ConfigError):
            BoundInputs(m=0, delta=0.05, lipschitz=1.0, shape=shape, r_grid=(0.1,))
        with pytest.raises(ConfigError):
            BoundInputs(m=10, delta=1.5, lipschitz=1.0, shape=shape, r_grid=(0.1,))
        with pytest.raises(ConfigError):
            BoundInputs(m=10, delta=0.5, lipschitz=-1.0, shape=shape, r_grid=(0.1,))
        with pytest.raises(ConfigError):
            BoundInputs(m=10, delta=0.5, lipschitz=1.0, shape=shape, r_grid=())
        with pytest.raises(ConfigError):
            BoundInputs(m=10, delta=0.5, lipschitz=1.0, shape=shape, r_grid=(0.0,))
