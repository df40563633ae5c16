import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficast import metrics
from trafficast.errors import EmptyInput, ShapeError, ZeroActual, ZeroBaseline

finite_floats = st.floats(min_value=-1e9, max_value=1e9, allow_nan=False)


class TestRmse:
    def test_identical_is_zero(self):
        assert metrics.rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_hand_value(self):
        # sqrt((9 + 16) / 2) = sqrt(12.5)
        assert metrics.rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))

    def test_permutation_invariant(self):
        actual = [1.0, 5.0, 9.0]
        predicted = [2.0, 4.0, 10.0]
        shuffled = metrics.rmse([9.0, 1.0, 5.0], [10.0, 2.0, 4.0])
        assert metrics.rmse(actual, predicted) == pytest.approx(shuffled)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            metrics.rmse([1.0], [1.0, 2.0])

    def test_empty(self):
        with pytest.raises(EmptyInput):
            metrics.rmse([], [])


class TestMae:
    def test_identical_is_zero(self):
        assert metrics.mae([7.0], [7.0]) == 0.0

    def test_hand_value(self):
        assert metrics.mae([0.0, 0.0], [3.0, 4.0]) == pytest.approx(3.5)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(finite_floats, finite_floats), min_size=1, max_size=50))
    def test_mae_at_most_rmse(self, pairs):
        actual = [a for a, _ in pairs]
        predicted = [p for _, p in pairs]
        assert metrics.mae(actual, predicted) <= metrics.rmse(actual, predicted) + 1e-9


class TestMape:
    def test_single_term(self):
        assert metrics.mape([100.0], [90.0]) == pytest.approx(10.0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        actual = rng.uniform(1, 100, 40)
        predicted = actual * rng.uniform(0.8, 1.2, 40)
        base = metrics.mape(actual, predicted)
        for c in (1e-6, 3.0, 1e9):
            assert metrics.mape(c * actual, c * predicted) == pytest.approx(base)

    def test_zero_actual_rejected(self):
        with pytest.raises(ZeroActual):
            metrics.mape([1.0, 0.0], [1.0, 1.0])


class TestErrorReduction:
    def test_hand_checked_reduction(self):
        # 7.51% -> 4.27% is a ~43% reduction
        assert metrics.error_reduction(7.51, 4.27) == pytest.approx(43.1, abs=0.1)

    def test_equal_is_zero(self):
        assert metrics.error_reduction(5.0, 5.0) == 0.0

    def test_regression_goes_negative(self):
        assert metrics.error_reduction(4.0, 5.0) == pytest.approx(-25.0)

    def test_zero_baseline(self):
        with pytest.raises(ZeroBaseline):
            metrics.error_reduction(0.0, 1.0)


class TestReport:
    def test_all_zero_iff_exact(self):
        rep = metrics.report([4.0, 5.0], [4.0, 5.0])
        assert rep.rmse == rep.mae == rep.mape == 0.0
        assert rep.accuracy == 100.0
        rep2 = metrics.report([4.0, 5.0], [4.0, 5.1])
        assert rep2.rmse > 0 and rep2.mae > 0 and rep2.mape > 0

    def test_accuracy_complement(self):
        rep = metrics.report([100.0, 200.0], [90.0, 210.0])
        assert rep.accuracy == pytest.approx(100.0 - rep.mape)
        assert rep.n == 2

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=1.0, max_value=1e9),
                st.floats(min_value=-1e9, max_value=1e9, allow_nan=False),
            ),
            min_size=1,
            max_size=30,
        )
    )
    def test_invariants_property(self, pairs):
        actual = [a for a, _ in pairs]
        predicted = [p for _, p in pairs]
        rep = metrics.report(actual, predicted)
        assert rep.rmse + 1e-9 >= rep.mae >= 0.0
        assert rep.mape >= 0.0
