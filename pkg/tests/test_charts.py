import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from varchart.charts import (
    SCHEMES,
    ChartConfig,
    glr_delta_star,
    glr_objective,
    gsr_delta_tilde,
    gsr_objective,
    h_clamped,
    k_ref,
    make_chart,
    run_statistic,
    update_cusum_iid,
    update_glr,
    update_gsprt,
    update_gsr,
    update_lr,
    update_sprt,
    update_sr,
)
from varchart.errors import ConfigError, DomainError, UnsupportedScheme
from varchart.oracles import direct_statistic
from varchart.process import ChangeSpec, PathGenerator, ProcessSpec

PHIS = [round(-0.9 + 0.1 * k, 1) for k in range(19)]
NONNEG = ("cusum_iid", "lr", "sprt", "glr", "gsprt", "gsr_iid", "gsr")


def config(scheme, delta_star=1.5, **kw):
    if scheme in ("glr", "gsprt", "gsr_iid", "gsr"):
        return ChartConfig(scheme, **kw)
    return ChartConfig(scheme, delta_star, **kw)


def random_path(spec, seed, n=50, delta=1.0, tau=20):
    change = ChangeSpec(tau=tau, delta=delta) if delta > 1 else ChangeSpec()
    return PathGenerator(spec, change, seed=seed).take(n)


class TestScalarFunctions:
    def test_k_ref_values(self):
        assert k_ref(1.5) == pytest.approx(1.459674, abs=5e-7)
        assert k_ref(1.1) == pytest.approx(math.log(1.21) / (1 - 1 / 1.21), rel=1e-15)
        assert k_ref(1.1) == pytest.approx(1.098342, abs=1e-5)
        assert k_ref(1 + 1e-7) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("d", [1.0, 0.5, -2.0])
    def test_k_ref_domain(self, d):
        with pytest.raises(DomainError):
            k_ref(d)

    @given(st.floats(1.001, 50.0), st.floats(1.001, 50.0))
    def test_k_ref_increasing(self, a, b):
        if a < b:
            assert k_ref(a) <= k_ref(b)

    def test_h_clamped(self):
        assert h_clamped(1, 1.0) == 0.0
        assert h_clamped(2, 4.0) == pytest.approx(4 - 1 - math.log(4), rel=1e-15)
        assert h_clamped(2, 4.0) == pytest.approx(1.613706, abs=5e-7)
        assert h_clamped(7, 0.5) == 0.0
        with pytest.raises(DomainError):
            h_clamped(1, -0.1)

    @pytest.mark.parametrize("s_dot, s_ddot, m, expect", [(3.0, 3.0, 3, 1.0), (4.0, 4.0, 1, 2.0),
                                                          (0.25, 0.25, 1, 1.0)])
    def test_glr_delta_star(self, s_dot, s_ddot, m, expect):
        assert glr_delta_star(s_dot, s_ddot, m) == pytest.approx(expect, rel=1e-15)

    @given(st.floats(-50, 200), st.floats(0.0, 200), st.integers(1, 200))
    def test_glr_maximizer_is_local_optimum(self, s_dot, s_ddot, m):
        d = glr_delta_star(s_dot, s_ddot, m)
        if d > 1.0:
            best = glr_objective(d, s_dot, s_ddot, m)
            for step in (-1e-3, 1e-3):
                if d + step >= 1.0:
                    assert glr_objective(d + step, s_dot, s_ddot, m) <= best + 1e-8

    @given(st.integers(0, 10**6), st.sampled_from(PHIS), st.sampled_from([1.0, 1.5, 3.0]))
    def test_gsr_objective_unimodal_on_grid(self, seed, phi, delta):
        spec = ProcessSpec.ar1(phi)
        chart = make_chart(ChartConfig("gsr"), spec)
        n = 1 + seed % 60
        chart.run(random_path(spec, seed, n=n, delta=delta, tau=1))
        u_dot, u_ddot = chart.u_dot, chart.u_ddot
        grid = np.linspace(1.0, 6.0, 501)
        vals = np.array([gsr_objective(g, u_dot, u_ddot, n) for g in grid])
        top = int(np.argmax(vals))
        assert np.all(np.diff(vals[:top + 1]) >= -1e-9 * (1 + abs(vals).max()))
        assert np.all(np.diff(vals[top:]) <= 1e-9 * (1 + abs(vals).max()))
        d = gsr_delta_tilde(u_dot, u_ddot, n)
        if 1.0 < d < 6.0:
            assert abs(grid[top] - d) <= grid[1] - grid[0]


class TestConfig:
    def test_reference_schemes_need_delta_star(self):
        with pytest.raises(ConfigError):
            ChartConfig("lr")

    def test_generalized_schemes_refuse_delta_star(self):
        with pytest.raises(ConfigError):
            ChartConfig("gsr", 1.5)

    @pytest.mark.parametrize("kw", [dict(scheme="nope"), dict(scheme="sprt", delta_star=1.0),
                                    dict(scheme="sprt", delta_star=1.5, limit=-1.0),
                                    dict(scheme="sprt", delta_star=1.5, window=5),
                                    dict(scheme="glr", window=0),
                                    dict(scheme="glr", gsr_paper_half=True)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ChartConfig(**kw)

    def test_log_scale_limit_may_be_negative(self):
        assert ChartConfig("sr", 1.5, limit=-2.0).limit == -2.0


class TestHandValues:
    white = ProcessSpec.ar1(0.0)

    def test_cusum_iid_first_steps(self):
        st_ = make_chart(ChartConfig("cusum_iid", 1.5), self.white)
        assert update_cusum_iid(st_, 0.0) == 0.0
        st_ = make_chart(ChartConfig("cusum_iid", 1.5), self.white)
        assert update_cusum_iid(st_, 2.0) == pytest.approx(2.540326, abs=5e-7)

    def test_cusum_constant_at_mean(self):
        spec = ProcessSpec(phi=(0.3,), mu=5.0)
        assert np.all(run_statistic(ChartConfig("cusum_iid", 1.2), spec, np.full(30, 5.0)) == 0.0)

    def test_lr_and_sprt_start_at_zero(self):
        for scheme in ("lr", "sprt"):
            assert make_chart(ChartConfig(scheme, 1.5), self.white).statistic == 0.0

    def test_sr_iid_first_step(self):
        chart = make_chart(ChartConfig("sr_iid", 2.0), self.white)
        assert chart.statistic == -math.inf
        assert update_sr(chart, 0.0) == pytest.approx(-math.log(2.0), rel=1e-15)

    def test_glr_first_step(self):
        assert update_glr(make_chart(ChartConfig("glr"), self.white), 2.0) == pytest.approx(1.613706, abs=5e-7)

    def test_gsprt_first_step(self):
        assert update_gsprt(make_chart(ChartConfig("gsprt"), self.white), 2.0) == pytest.approx(0.806853, abs=5e-7)
        assert update_gsprt(make_chart(ChartConfig("gsprt"), self.white), 0.5) == 0.0

    def test_gsr_iid_first_step(self):
        assert update_gsr(make_chart(ChartConfig("gsr_iid"), self.white), 2.0) == pytest.approx(1.613706, abs=5e-7)

    def test_small_observations_give_zero(self):
        path = np.full(20, 0.1)
        for scheme in ("glr", "gsprt", "gsr", "gsr_iid"):
            assert np.all(run_statistic(ChartConfig(scheme), ProcessSpec.ar1(0.5), path) == 0.0)
        for scheme in ("glr", "gsprt", "gsr"):
            assert np.all(run_statistic(ChartConfig(scheme), self.white, np.zeros(10)) == 0.0)

    def test_lr_needs_ar1_or_ar2(self):
        with pytest.raises(UnsupportedScheme):
            make_chart(ChartConfig("lr", 1.5), ProcessSpec(phi=(0.5,), theta=(0.3,)))

    def test_update_aliases(self):
        path = random_path(ProcessSpec.ar1(0.4), 1, n=10)
        for scheme, fn in (("lr", update_lr), ("sprt", update_sprt)):
            a, b = make_chart(ChartConfig(scheme, 1.5), ProcessSpec.ar1(0.4)), run_statistic(
                ChartConfig(scheme, 1.5), ProcessSpec.ar1(0.4), path)
            assert [fn(a, x) for x in path] == list(b)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_recursion_matches_oracle(scheme):
    rng = np.random.default_rng(2024)
    for k in range(100):
        phi = PHIS[k % len(PHIS)]
        spec = ProcessSpec.ar1(phi)
        cfg = config(scheme, delta_star=float(rng.choice([1.1, 1.5, 2.0, 3.0])))
        path = random_path(spec, int(rng.integers(1 << 30)), delta=float(rng.choice([1.0, 1.5, 2.5])))
        got = run_statistic(cfg, spec, path)[-1]
        want = direct_statistic(path, cfg, spec)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_recursion_matches_oracle_on_every_prefix(scheme):
    spec = ProcessSpec(phi=(0.6,), mu=-1.5, sigma2=2.0)
    cfg = config(scheme, delta_star=1.3)
    path = random_path(spec, 77, n=25, delta=1.8, tau=8)
    seq = run_statistic(cfg, spec, path)
    for n in range(1, len(path) + 1):
        assert seq[n - 1] == pytest.approx(direct_statistic(path[:n], cfg, spec), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("scheme", ["lr", "sprt", "sr", "glr", "gsprt", "gsr", "cusum_iid"])
def test_ar2_matches_oracle(scheme):
    for seed, phi in enumerate([(0.5, -0.3), (1.2, -0.5), (-0.4, 0.4), (0.0, 0.8)]):
        spec = ProcessSpec(phi=phi)
        cfg = config(scheme, delta_star=1.7)
        path = random_path(spec, seed, n=30, delta=2.0, tau=12)
        seq = run_statistic(cfg, spec, path)
        for n in (1, 2, 3, 15, 30):
            assert seq[n - 1] == pytest.approx(direct_statistic(path[:n], cfg, spec), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("scheme", ["sprt", "sr", "glr", "gsprt", "gsr"])
def test_arma_matches_oracle(scheme):
    spec = ProcessSpec(phi=(0.5,), theta=(0.4,))
    cfg = config(scheme, delta_star=1.5)
    path = random_path(spec, 5, n=30, delta=1.6, tau=10)
    seq = run_statistic(cfg, spec, path)
    for n in (1, 2, 10, 30):
        assert seq[n - 1] == pytest.approx(direct_statistic(path[:n], cfg, spec), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("scheme", ["sr", "glr", "gsr"])
def test_generic_variant_agrees_with_ar1_recursion(scheme):
    spec = ProcessSpec.ar1(-0.7)
    cfg = config(scheme, delta_star=2.0)
    path = random_path(spec, 8, n=60, delta=1.5, tau=30)
    np.testing.assert_allclose(run_statistic(cfg, spec, path, "generic"), run_statistic(cfg, spec, path, "ar1"),
                               rtol=1e-9, atol=1e-9)


@given(st.integers(0, 2**31 - 1), st.sampled_from([1.1, 1.5, 2.5]), st.sampled_from([1.0, 2.0]))
def test_iid_reductions_at_phi_zero(seed, ds, delta):
    spec = ProcessSpec.ar1(0.0)
    path = random_path(spec, seed, n=80, delta=delta)
    base = run_statistic(ChartConfig("cusum_iid", ds), spec, path)
    np.testing.assert_allclose(run_statistic(ChartConfig("lr", ds), spec, path), base, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(run_statistic(ChartConfig("sprt", ds), spec, path), base, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(run_statistic(ChartConfig("gsr"), spec, path),
                               run_statistic(ChartConfig("gsr_iid"), spec, path), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(run_statistic(ChartConfig("sr", ds), spec, path),
                               run_statistic(ChartConfig("sr_iid", ds), spec, path), rtol=1e-12, atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.sampled_from(PHIS), st.sampled_from(NONNEG),
       st.floats(1.0, 4.0))
def test_statistics_nonnegative(seed, phi, scheme, delta):
    spec = ProcessSpec.ar1(phi)
    path = random_path(spec, seed, n=60, delta=delta, tau=1 + seed % 40)
    assert np.all(run_statistic(config(scheme), spec, path) >= 0.0)


@given(st.integers(0, 2**31 - 1), st.sampled_from(PHIS), st.sampled_from(["cusum_iid", "sprt", "glr", "gsprt", "gsr"]),
       st.floats(1.0, 3.0), st.floats(0.0, 2.0))
def test_statistic_monotone_in_global_scale(seed, phi, scheme, k, extra):
    spec = ProcessSpec.ar1(phi)
    path = random_path(spec, seed, n=40)
    lo = run_statistic(config(scheme), spec, k * path)
    hi = run_statistic(config(scheme), spec, (k + extra) * path)
    assert np.all(hi >= lo - 1e-9 * (1 + np.abs(lo)))


def test_sr_log_space_survives_overflow():
    spec = ProcessSpec.ar1(0.5)
    path = 40.0 * random_path(spec, 3, n=400)
    for scheme in ("sr", "sr_iid"):
        seq = run_statistic(ChartConfig(scheme, 3.0), spec, path)
        assert np.all(np.isfinite(seq)) and seq[-1] > math.log(1e300)
    short = random_path(spec, 3, n=50, delta=2.5, tau=1)
    got = run_statistic(ChartConfig("sr", 3.0), spec, short)[-1]
    want = direct_statistic(short, ChartConfig("sr", 3.0), spec)
    assert got == pytest.approx(want, rel=1e-9)


def test_direct_oracles_on_empty_path():
    spec = ProcessSpec.ar1(0.3)
    for scheme in SCHEMES:
        want = -math.inf if scheme in ("sr", "sr_iid") else 0.0
        assert direct_statistic([], config(scheme), spec) == want


def test_glr_window_limits_candidates():
    spec = ProcessSpec.ar1(0.3)
    path = random_path(spec, 4, n=40, delta=2.0, tau=5)
    full = run_statistic(ChartConfig("glr"), spec, path)
    win = run_statistic(ChartConfig("glr", window=6), spec, path)
    assert np.all(win <= full + 1e-12)
    assert win[-1] == pytest.approx(direct_statistic(path, ChartConfig("glr", window=6), spec), rel=1e-9)


def test_gsr_paper_half_variant():
    spec = ProcessSpec.ar1(0.4)
    path = random_path(spec, 6, n=30, delta=2.0, tau=1)
    cfg = ChartConfig("gsr", gsr_paper_half=True)
    seq = run_statistic(cfg, spec, path)
    assert seq[-1] == pytest.approx(direct_statistic(path, cfg, spec), rel=1e-9)
    assert seq[-1] >= run_statistic(ChartConfig("gsr"), spec, path)[-1]
