import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from varchart.errors import CausalityError, DomainError
from varchart.process import (
    ChangeSpec,
    InnovationsState,
    PathGenerator,
    ProcessSpec,
    autocovariance,
    causality_check,
    innovations_step,
    next_observation,
    rep_seeds,
    stationary_variance,
)


def yule_walker_ar2(phi1, phi2, sigma2=1.0):
    """gamma_0..gamma_2 of a causal AR(2) from the 3x3 Yule-Walker system."""
    a = np.array([[1.0, -phi1, -phi2],
                  [-phi1, 1.0 - phi2, 0.0],
                  [-phi2, -phi1, 1.0]])
    return np.linalg.solve(a, np.array([sigma2, 0.0, 0.0]))


def best_linear_prediction(gamma, past):
    """Projection of X_t on X_1..X_{t-1} by solving the normal equations."""
    k = len(past)
    if k == 0:
        return 0.0, gamma[0]
    g = np.array([[gamma[abs(i - j)] for j in range(k)] for i in range(k)])
    rhs = np.array([gamma[k - j] for j in range(k)])
    w = np.linalg.solve(g, rhs)
    return float(w @ np.asarray(past)), float(gamma[0] - w @ rhs)


causal_ar2 = st.tuples(st.floats(-1.9, 1.9), st.floats(-0.95, 0.95)).filter(
    lambda p: p[0] + p[1] < 0.97 and p[1] - p[0] < 0.97)


class TestStationaryVariance:
    def test_white_noise(self):
        assert stationary_variance(ProcessSpec.ar1(0.0)) == 1.0

    def test_ar1(self):
        assert stationary_variance(ProcessSpec.ar1(0.5)) == pytest.approx(4.0 / 3.0, rel=1e-15)

    def test_ar2_closed_form(self):
        got = stationary_variance(ProcessSpec(phi=(0.5, -0.3)))
        assert got == pytest.approx(1.289683, abs=5e-7)
        assert got == pytest.approx(yule_walker_ar2(0.5, -0.3)[0], rel=1e-12)

    def test_noncausal_rejected(self):
        with pytest.raises(CausalityError):
            stationary_variance(ProcessSpec.ar1(1.0))

    @given(causal_ar2, st.floats(0.1, 5.0))
    def test_ar2_matches_yule_walker(self, phi, sigma2):
        spec = ProcessSpec(phi=phi, sigma2=sigma2)
        yw = yule_walker_ar2(*phi, sigma2)
        np.testing.assert_allclose(autocovariance(spec, 2), yw, rtol=1e-8)

    def test_arma11_against_formula(self):
        phi, theta = 0.6, 0.3
        g0 = (1 + 2 * phi * theta + theta ** 2) / (1 - phi ** 2)
        g1 = (1 + phi * theta) * (phi + theta) / (1 - phi ** 2)
        acvf = autocovariance(ProcessSpec(phi=(phi,), theta=(theta,)), 3)
        np.testing.assert_allclose(acvf, [g0, g1, phi * g1, phi * phi * g1], rtol=1e-10)


class TestCausality:
    @pytest.mark.parametrize("phi, ok", [
        ((0.9,), True),
        ((1.0,), False),
        ((-1.0,), False),
        ((0.5, 0.6), False),
        ((0.5, -0.3), True),
        ((0.2, -1.0), False),
        ((0.5, 0.2, 0.1), True),
        ((0.5, 0.4, 0.3), False),
    ])
    def test_examples(self, phi, ok):
        assert causality_check(ProcessSpec(phi=phi)) is ok

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_ar2_triangle_agrees_with_roots(self, a, b):
        # reciprocal roots of 1 - a z - b z^2 must lie inside the unit circle
        lam = np.abs(np.roots([1.0, -a, -b]))
        if np.all(np.abs(lam - 1.0) > 1e-6):
            assert causality_check(ProcessSpec(phi=(a, b))) is bool(np.all(lam < 1.0))


class TestInnovations:
    def test_ar1_first_steps(self):
        state = InnovationsState(ProcessSpec.ar1(0.5))
        assert innovations_step(state) == (0.0, pytest.approx(4.0 / 3.0))
        x_hat, v = innovations_step(state, 2.0)
        assert x_hat == pytest.approx(1.0) and v == pytest.approx(1.0)

    def test_ar2_second_step(self):
        spec = ProcessSpec(phi=(0.5, -0.3))
        state = InnovationsState(spec)
        state.step()
        x_hat, v = state.step(1.0)
        g0 = yule_walker_ar2(0.5, -0.3)[0]
        assert x_hat == pytest.approx(0.5 / 1.3, rel=1e-12)
        assert v == pytest.approx(g0 * (1 - 0.25 / 1.69), rel=1e-12)
        x_hat, v = state.step(-0.4)
        assert x_hat == pytest.approx(0.5 * -0.4 - 0.3 * 1.0) and v == 1.0

    def test_missing_previous_value(self):
        state = InnovationsState(ProcessSpec.ar1(0.5))
        state.step()
        with pytest.raises(DomainError):
            state.step()

    @given(causal_ar2, st.integers(0, 2**31 - 1))
    def test_generic_matches_closed_forms(self, phi, seed):
        spec = ProcessSpec(phi=phi)
        xs = np.random.default_rng(seed).normal(size=100)
        fast, slow = InnovationsState(spec), InnovationsState(spec, generic=True)
        prev = None
        for x in xs:
            a, b = fast.step(prev), slow.step(prev)
            assert a[0] == pytest.approx(b[0], abs=1e-10, rel=1e-10)
            assert a[1] == pytest.approx(b[1], abs=1e-10, rel=1e-10)
            prev = x

    @pytest.mark.parametrize("phi, theta", [((0.6,), (0.3,)), ((0.5, -0.3), (0.4, 0.2)), ((), (0.7,)),
                                            ((0.3, 0.2, -0.1), ())])
    def test_generic_is_the_best_linear_predictor(self, phi, theta):
        spec = ProcessSpec(phi=phi, theta=theta, sigma2=1.7)
        xs = np.random.default_rng(3).normal(size=25)
        gamma = autocovariance(spec, 30)
        state = InnovationsState(spec)
        prev = None
        for t in range(len(xs)):
            x_hat, v = state.step(prev)
            ref_hat, ref_v = best_linear_prediction(gamma, xs[:t])
            assert x_hat == pytest.approx(ref_hat, abs=1e-9)
            assert v == pytest.approx(ref_v, rel=1e-9)
            prev = xs[t]

    @given(causal_ar2)
    def test_msev_positive_and_nonincreasing(self, phi):
        state = InnovationsState(ProcessSpec(phi=phi), generic=True)
        prev, vs = None, []
        for _ in range(20):
            vs.append(state.step(prev)[1])
            prev = 0.3
        assert all(v > 0 for v in vs)
        assert all(b <= a * (1 + 1e-12) for a, b in zip(vs, vs[1:]))
        assert vs[-1] == pytest.approx(1.0, rel=1e-9)


class TestChangeSpec:
    def test_defaults_in_control(self):
        c = ChangeSpec()
        assert c.in_control and c.tau_int == 0

    @pytest.mark.parametrize("tau, delta", [(0, 2.0), (1, 0.9), (2.5, 2.0), (1, math.nan)])
    def test_invalid(self, tau, delta):
        with pytest.raises(DomainError):
            ChangeSpec(tau=tau, delta=delta)


class TestPathGenerator:
    def test_reproducible(self):
        spec = ProcessSpec.ar1(0.7)
        a = PathGenerator(spec, seed=11, rep=4).take(1000)
        b = PathGenerator(spec, seed=11, rep=4).take(1000)
        assert a.tobytes() == b.tobytes()
        c = PathGenerator(spec, seed=11, rep=5).take(1000)
        assert not np.array_equal(a, c)

    def test_scale_change(self):
        spec = ProcessSpec(phi=(0.5, -0.3), mu=3.0)
        y = PathGenerator(spec, seed=2, rep=0).take(40)
        x = PathGenerator(spec, ChangeSpec(tau=10, delta=1.7), seed=2, rep=0).take(40)
        np.testing.assert_array_equal(x[:9], y[:9])
        np.testing.assert_allclose(x[9:], 3.0 + 1.7 * (y[9:] - 3.0), rtol=1e-14)

    def test_next_observation_alias(self):
        spec = ProcessSpec.ar1(0.2)
        g1, g2 = PathGenerator(spec, seed=1), PathGenerator(spec, seed=1)
        assert next_observation(g1) == g2.next_observation()

    def test_moments(self):
        # variance and lag-one covariance across replications, before and after the change
        spec = ProcessSpec.ar1(0.5)
        reps = 20000
        paths = np.array([PathGenerator(spec, ChangeSpec(tau=10, delta=2.0), seed=9, rep=r).take(16)
                          for r in range(reps)])
        g0, g1 = 4.0 / 3.0, 2.0 / 3.0
        for t, scale in ((4, 1.0), (14, 4.0)):
            prod = paths[:, t] * paths[:, t + 1]
            assert abs(prod.mean() - scale * g1) < 4 * prod.std() / math.sqrt(reps)
            sq = paths[:, t] ** 2
            assert abs(sq.mean() - scale * g0) < 4 * sq.std() / math.sqrt(reps)


def test_rep_seeds_distinct_and_stable():
    s = rep_seeds(0, 200000)
    assert len(np.unique(s)) == len(s)
    np.testing.assert_array_equal(rep_seeds(0, 10, start=5), s[5:15])
    assert not np.array_equal(rep_seeds(1, 10), s[:10])
