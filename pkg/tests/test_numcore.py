import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kernplan.errors import DegenerateWeightsError, NumericError, ParameterError
from kernplan.numcore import (NoiseSchedule, RngStream, draw_gaussian,
                              make_schedule, normalize_log_weights,
                              reward_softmax, softmax_select)

finite_logs = hnp.arrays(
    np.float64, st.integers(1, 50),
    elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False))


class TestNormalizeLogWeights:
    def test_uniform(self):
        w = normalize_log_weights(np.zeros(4))
        np.testing.assert_allclose(w.normalized, 0.25)

    def test_hand_computed_pair(self):
        w = normalize_log_weights([0.0, np.log(3.0)])
        np.testing.assert_allclose(w.normalized, [0.25, 0.75])

    def test_sums_to_one(self):
        w = normalize_log_weights([-1000.0, -1001.0, -999.5])
        assert w.normalized.sum() == pytest.approx(1.0)
        assert np.all(w.normalized > 0)

    def test_minus_inf_maps_to_zero(self):
        w = normalize_log_weights([0.0, -np.inf])
        np.testing.assert_allclose(w.normalized, [1.0, 0.0])

    def test_all_minus_inf_raises(self):
        with pytest.raises(DegenerateWeightsError):
            normalize_log_weights([-np.inf, -np.inf])

    def test_nan_raises(self):
        with pytest.raises(NumericError):
            normalize_log_weights([0.0, np.nan])

    @given(finite_logs, st.floats(-1e6, 1e6, allow_nan=False))
    def test_shift_invariance(self, lw, shift):
        a = normalize_log_weights(lw).normalized
        b = normalize_log_weights(lw + shift).normalized
        np.testing.assert_allclose(a, b, atol=1e-12)

    @given(finite_logs)
    def test_valid_distribution(self, lw):
        w = normalize_log_weights(lw).normalized
        assert w.sum() == pytest.approx(1.0)
        assert np.all(w >= 0)


class TestSoftmaxSelect:
    def test_temperature_scaling(self):
        v = np.array([1.0, 2.0, 3.0])
        hot = softmax_select(v, 10.0).normalized
        cold = softmax_select(v, 0.01).normalized
        assert hot.max() < cold.max()
        assert np.argmax(cold) == 2

    @given(hnp.arrays(np.float64, st.integers(2, 30),
                      elements=st.integers(-1000, 1000).map(lambda k: k / 10.0)))
    def test_argmax_limit(self, v):
        # unique max (gap >= 0.1) concentrates all mass as temperature -> 0
        if np.sum(v == v.max()) != 1:
            v[0] = v.max() + 0.1
        w = softmax_select(v, 1e-4).normalized
        assert np.argmax(w) == np.argmax(v)
        assert w.max() > 1.0 - 1e-9

    def test_bad_temperature(self):
        with pytest.raises(ParameterError):
            softmax_select([1.0], 0.0)
        with pytest.raises(ParameterError):
            softmax_select([1.0], -1.0)

    def test_empty(self):
        with pytest.raises(ParameterError):
            softmax_select([], 1.0)


class TestRewardSoftmax:
    def test_zero_spread_uniform(self):
        w = reward_softmax(np.full(5, 3.7), 0.1).normalized
        np.testing.assert_allclose(w, 0.2)

    def test_scale_invariance(self):
        # tiny absolute spread gets the same weights as a large one
        r = np.array([0.0, 0.5, 1.0])
        a = reward_softmax(r, 0.1).normalized
        b = reward_softmax(1e-3 * r + 42.0, 0.1).normalized
        np.testing.assert_allclose(a, b, atol=1e-12)

    @given(hnp.arrays(np.float64, st.integers(2, 30),
                      elements=st.integers(-1000, 1000).map(lambda k: k / 10.0)))
    def test_argmax_preserved(self, r):
        # gaps of at least 0.1 relative to a span <= 200: resolvable at tau=1e-4
        if r.max() == r.min():
            return
        if np.sum(r == r.max()) != 1:
            r[0] = r.max() + 0.1
        w = reward_softmax(r, 1e-4).normalized
        assert np.argmax(w) == np.argmax(r)


class TestSchedule:
    def test_endpoints_exact(self):
        for shape in ("linear_log", "cosine"):
            s = make_schedule(10, 1.0, 0.02, shape)
            assert s.sigmas[0] == pytest.approx(1.0)
            assert s.sigmas[-1] == pytest.approx(0.02)

    def test_non_increasing(self):
        for shape in ("linear_log", "cosine"):
            s = make_schedule(25, 2.0, 0.01, shape)
            assert np.all(np.diff(s.sigmas) <= 0)
            assert np.all(s.sigmas > 0)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            make_schedule(1)
        with pytest.raises(ParameterError):
            make_schedule(10, 0.02, 1.0)  # increasing
        with pytest.raises(ParameterError):
            NoiseSchedule(np.array([1.0, -0.5]))
        with pytest.raises(ParameterError):
            make_schedule(10, shape="banana")


class TestRngStream:
    def test_reproducible(self):
        a = draw_gaussian((5, 3), RngStream(7).child("x"))
        b = draw_gaussian((5, 3), RngStream(7).child("x"))
        np.testing.assert_array_equal(a, b)

    def test_children_independent_of_order(self):
        root = RngStream(11)
        first = draw_gaussian(4, root.child("a"))
        _ = draw_gaussian(1000, root.child("b"))
        again = draw_gaussian(4, root.child("a"))
        np.testing.assert_array_equal(first, again)

    def test_distinct_children_differ(self):
        root = RngStream(3)
        a = draw_gaussian(8, root.child("a"))
        b = draw_gaussian(8, root.child("b"))
        c = draw_gaussian(8, root.child("a", 1))
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_base_seed_matters(self):
        a = draw_gaussian(8, RngStream(1).child("x"))
        b = draw_gaussian(8, RngStream(2).child("x"))
        assert not np.array_equal(a, b)

    def test_child_is_pure(self):
        r = RngStream(5)
        assert r.child("a", 1) == r.child("a", 1)
        assert r.child("a", 1) != r.child("a", 2)
