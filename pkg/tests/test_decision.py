import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultwarn.decision import (
    AlarmEpisode,
    GpdTail,
    HysteresisPolicy,
    HysteresisState,
    RpmThresholdMap,
    build_rpm_map,
    default_delta,
    episodes_from_scores,
    exceedance_rate,
    extract_episodes,
    extremal_index,
    fit_gpd,
    fit_tail,
    gpd_intensity,
    hysteresis_step,
    merge_episodes,
    on_threshold,
    run_hysteresis,
    select_u,
)
from faultwarn.errors import (
    BinCalibrationError,
    FitError,
    InsufficientTailError,
    ParameterError,
    StreamOrderError,
    ValidityDomainError,
)


def gpd_sample(rng, xi, beta, n):
    u = rng.random(n)
    if xi == 0:
        return -beta * np.log1p(-u)
    return beta * ((1.0 - u) ** (-xi) - 1.0) / xi


def tail(u=0.0, xi=0.1, beta=1.0, lam=10.0):
    return GpdTail(u=u, xi=xi, beta=beta, lambda_u=lam, n_exceed=100, calib_hours=10.0)


class TestSelectU:
    def test_interpolated_quantile(self):
        u, n = select_u(np.arange(1.0, 101.0), 0.95, min_exceed=1)
        assert u == pytest.approx(95.05, abs=1e-12)
        assert n == 5

    def test_constant(self):
        with pytest.raises(InsufficientTailError):
            select_u(np.ones(1000), 0.98)

    def test_uniform_count(self):
        s = np.random.default_rng(0).random(100_000)
        _, n = select_u(s, 0.98)
        assert n == 2000

    def test_q_range(self):
        with pytest.raises(ParameterError):
            select_u(np.arange(100.0), 0.5)


class TestFitGpd:
    def test_exponential(self):
        y = np.random.default_rng(1).exponential(2.5, 100_000)
        xi, beta = fit_gpd(y)
        assert abs(xi) < 0.05
        assert beta == pytest.approx(2.5, rel=0.03)

    @pytest.mark.parametrize("xi0", [0.2, -0.2])
    def test_recovery(self, xi0):
        y = gpd_sample(np.random.default_rng(2), xi0, 1.0, 100_000)
        xi, beta = fit_gpd(y)
        assert abs(xi - xi0) < 0.05
        assert beta == pytest.approx(1.0, rel=0.05)

    def test_small(self):
        with pytest.raises(InsufficientTailError):
            fit_gpd(np.arange(1.0, 11.0))

    def test_degenerate(self):
        with pytest.raises(FitError):
            fit_gpd(np.full(50, 0.3))

    def test_bounds(self):
        # very heavy tail clamps at the upper bound
        y = gpd_sample(np.random.default_rng(3), 2.0, 1.0, 5000)
        xi, _ = fit_gpd(y)
        assert xi <= 1.0


class TestOnThreshold:
    def test_equal_rates(self):
        for xi in (-0.3, 0.0, 0.4):
            assert on_threshold(tail(u=2.0, xi=xi, lam=5.0), 5.0) == pytest.approx(2.0, abs=1e-15)

    def test_exponential_limit(self):
        tau = on_threshold(tail(u=0.7, xi=0.0, beta=0.1, lam=10.0), 1.0)
        assert tau == pytest.approx(0.7 + 0.1 * math.log(10.0), rel=1e-15)
        assert tau - 0.7 == pytest.approx(0.23026, abs=1e-5)

    def test_exponential_limit_monte_carlo(self):
        # Exp(beta=0.1) excesses arriving at 10/h for 2000 h: exceedances of tau_on should run at ~1/h
        rng = np.random.default_rng(4)
        n = rng.poisson(10.0 * 2000)
        tau = on_threshold(tail(u=0.0, xi=0.0, beta=0.1, lam=10.0), 1.0)
        rate = np.count_nonzero(rng.exponential(0.1, n) > tau) / 2000
        assert rate == pytest.approx(1.0, abs=4 * math.sqrt(1.0 / 2000))

    def test_continuity(self):
        a = on_threshold(tail(xi=1e-7, beta=0.8), 0.5)
        b = on_threshold(tail(xi=0.0, beta=0.8), 0.5)
        assert abs(a - b) < 1e-6 * 0.8

    @given(
        st.floats(-5, 5),
        st.floats(-0.5, 1.0),
        st.floats(1e-3, 1e3),
        st.floats(1e-2, 1e3),
        st.floats(1e-3, 1.0),
    )
    def test_round_trip(self, u, xi, beta, lam_u, frac):
        t = tail(u, xi, beta, lam_u)
        tau = on_threshold(t, frac * lam_u)
        assert t.intensity(tau) == pytest.approx(frac * lam_u, rel=1e-9)

    @given(st.floats(-0.5, 1.0), st.floats(0.05, 0.9))
    def test_monotone_in_target(self, xi, frac):
        t = tail(xi=xi)
        assert on_threshold(t, frac * t.lambda_u) >= on_threshold(t, min(1.0, 1.5 * frac) * t.lambda_u)

    def test_validity_domain(self):
        with pytest.raises(ValidityDomainError):
            on_threshold(tail(lam=1.0), 2.0)
        with pytest.raises(ValidityDomainError):
            on_threshold(tail(lam=1.0), 0.0)

    def test_support_bound_recorded(self):
        t = tail(u=1.0, xi=-0.25, beta=0.5)
        assert t.support_bound == pytest.approx(3.0)
        assert tail(xi=0.1).support_bound == math.inf

    def test_intensity_beyond_support(self):
        assert gpd_intensity(10.0, 0.0, -0.5, 1.0, 5.0) == 0.0


class TestExceedanceRate:
    def test_modes(self):
        s = np.zeros(100)
        s[[10, 11, 12, 50, 90]] = 1.0
        t = np.arange(100.0)
        assert exceedance_rate(s, t, 0.5, 1.0, mode="raw") == 5.0
        assert exceedance_rate(s, t, 0.5, 1.0, mode="runs", dt_merge=2.0) == 3.0
        # gaps 1, 1, 38, 40: theta = 2 * 76**2 / (4 * 2814) > 1, capped at 1
        assert exceedance_rate(s, t, 0.5, 1.0, mode="intervals") == 5.0
        with pytest.raises(ParameterError):
            exceedance_rate(s, t, 0.5, 1.0, mode="peaks")

    def test_extremal_index_independent(self):
        idx = np.flatnonzero(np.random.default_rng(5).random(200_000) > 0.98)
        assert extremal_index(idx) == pytest.approx(1.0, abs=0.05)

    def test_extremal_index_triples(self):
        # clusters of three consecutive exceedances at independent positions: theta near 1/3
        starts = np.sort(np.random.default_rng(11).choice(np.arange(0, 10**7, 10), 3000, replace=False))
        idx = (starts[:, None] + np.arange(3)).ravel()
        assert extremal_index(idx) == pytest.approx(1 / 3, abs=0.03)

    def test_fit_tail_hours(self):
        rng = np.random.default_rng(6)
        s = rng.exponential(1.0, 36_000)
        t = np.arange(s.size) * 1.0
        ft = fit_tail(s, t, q=0.98)
        assert ft.calib_hours == pytest.approx(10.0)
        assert ft.lambda_u == pytest.approx(ft.n_exceed / 10.0, rel=0.1)


class TestHysteresis:
    def policy(self, **kw):
        kw = {"tau_on": 1.0, "delta": 0.5, "t_min": 5.0, "dt_merge": 2.0, **kw}
        return HysteresisPolicy(**kw)

    def trace(self, scores, policy, dt=1.0):
        alarm, _ = run_hysteresis(np.asarray(scores, float), np.arange(len(scores)) * dt, policy)
        return alarm.tolist()

    def test_quiet(self):
        assert self.trace([0.0] * 10, self.policy()) == [0] * 10

    def test_hold_time(self):
        # alarm at t=0, scores drop below tau_off at once: release only once t - t_on >= 5
        assert self.trace([2.0] + [0.0] * 8, self.policy()) == [1, 1, 1, 1, 1, 0, 0, 0, 0]

    def test_band_holds(self):
        assert self.trace([2.0] + [0.7] * 30, self.policy()) == [1] * 31

    def test_step_matches_scan(self):
        rng = np.random.default_rng(7)
        s = rng.standard_normal(500)
        t = np.cumsum(rng.uniform(0.1, 2.0, 500))
        pol = self.policy(tau_on=1.2, delta=0.8, t_min=3.0)
        state, bits = HysteresisState(), []
        for x, tt in zip(s, t):
            state, b = hysteresis_step(state, pol, x, tt)
            bits.append(b)
        alarm, final = run_hysteresis(s, t, pol)
        assert alarm.tolist() == bits
        assert final == state

    def test_resume_from_state(self):
        rng = np.random.default_rng(8)
        s, t = rng.standard_normal(300), np.arange(300.0)
        pol = self.policy()
        whole, _ = run_hysteresis(s, t, pol)
        a, st1 = run_hysteresis(s[:137], t[:137], pol)
        b, _ = run_hysteresis(s[137:], t[137:], pol, state=st1)
        assert np.concatenate([a, b]).tolist() == whole.tolist()

    def test_order(self):
        with pytest.raises(StreamOrderError):
            hysteresis_step(HysteresisState(last_t=5.0), self.policy(), 0.0, 5.0)
        with pytest.raises(StreamOrderError):
            run_hysteresis(np.zeros(3), np.array([0.0, 2.0, 1.0]), self.policy())

    def test_policy_invariants(self):
        with pytest.raises(ParameterError):
            HysteresisPolicy(1.0, 0.0)
        with pytest.raises(ParameterError):
            HysteresisPolicy(1.0, 0.1, t_min=0.0)
        assert HysteresisPolicy(1.0, 0.25).tau_off == 0.75

    def test_per_sample_threshold(self):
        pol = self.policy(t_min=1.0)
        s = np.array([1.5, 0.0, 1.5, 0.0])
        alarm, _ = run_hysteresis(s, np.arange(4.0), pol, tau_on=np.array([1.0, 1.0, 2.0, 2.0]))
        assert alarm.tolist() == [1, 0, 0, 0]


class TestEpisodes:
    def test_none(self):
        assert extract_episodes([0, 0, 0], [0.0, 1.0, 2.0]) == []

    def test_runs_and_peaks(self):
        eps = extract_episodes([0, 1, 1, 0, 1], [0.0, 1.0, 2.0, 3.0, 4.0], [0, 5, 7, 1, 2])
        assert eps == [AlarmEpisode(1.0, 3.0, 7.0, 2.0), AlarmEpisode(4.0, 4.0, 2.0, 4.0)]

    def test_merge_short_gap(self):
        eps = [AlarmEpisode(0.0, 4.0, 1.0, 1.0), AlarmEpisode(5.0, 9.0, 2.0, 6.0)]
        assert merge_episodes(eps, 2.0) == [AlarmEpisode(0.0, 9.0, 2.0, 6.0)]

    def test_merge_long_gap(self):
        eps = [AlarmEpisode(0.0, 4.0, 1.0, 1.0), AlarmEpisode(7.0, 9.0, 2.0, 8.0)]
        assert merge_episodes(eps, 2.0) == eps

    def test_merge_transitive(self):
        eps = [AlarmEpisode(0, 1, 1, 0), AlarmEpisode(2, 3, 1, 2), AlarmEpisode(4, 5, 3, 4)]
        assert merge_episodes(eps, 1.5) == [AlarmEpisode(0, 5, 3, 4)]

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_properties(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 150))
        s = rng.standard_normal(n)
        t = np.cumsum(rng.uniform(0.2, 2.0, n))
        pol = HysteresisPolicy(float(rng.uniform(0, 2)), float(rng.uniform(0.1, 1)), float(rng.uniform(0.5, 6)), 2.0)
        eps, _, _ = episodes_from_scores(s, t, pol)
        for e in eps:
            assert e.end >= e.start
            if t[-1] >= e.start + pol.t_min:
                assert e.end - e.start >= pol.t_min
        for a, b in zip(eps, eps[1:]):
            assert b.start - a.end >= pol.dt_merge

    def test_json(self):
        e = AlarmEpisode(1.0, 2.0, 0.9, 1.5)
        assert e.to_json("r1") == {"run": "r1", "start_s": 1.0, "end_s": 2.0, "peak_score": 0.9, "peak_s": 1.5}


class TestRpmMap:
    def test_constant_map(self):
        rng = np.random.default_rng(9)
        n = 40_000
        s = rng.exponential(1.0, n)
        rpm = np.repeat([600.0, 1200.0], n // 2)
        t = np.arange(n, dtype=float)
        m = build_rpm_map(s, rpm, t, [500.0, 1000.0, 1500.0], lambda_fa=1.0, mode="raw")
        a, b = m.tau_on
        assert a == pytest.approx(b, rel=0.1)

    def test_lookup(self):
        m = RpmThresholdMap(edges=(100.0, 400.0, 1600.0), tails=(tail(), tail()), tau_on=(1.0, 3.0))
        assert m.lookup(m.centers[0]) == pytest.approx(1.0)
        assert m.lookup(m.centers[1]) == pytest.approx(3.0)
        mid = math.sqrt(m.centers[0] * m.centers[1])
        assert m.lookup(mid) == pytest.approx(2.0)
        assert m.lookup(10.0) == 1.0 and m.lookup(1e5) == 3.0

    def test_json_round_trip(self):
        m = RpmThresholdMap(edges=(100.0, 400.0, 1600.0), tails=(tail(), tail(xi=0.2)), tau_on=(1.0, 3.0))
        assert RpmThresholdMap.from_json(m.to_json()) == m

    def test_bad_bin(self):
        rng = np.random.default_rng(10)
        s = rng.exponential(1.0, 20_000)
        rpm = np.r_[np.full(19_900, 600.0), np.full(100, 1200.0)]
        with pytest.raises(BinCalibrationError) as err:
            build_rpm_map(s, rpm, np.arange(20_000.0), [500.0, 1000.0, 1500.0], lambda_fa=1.0)
        assert err.value.bins == [1]


def test_default_delta():
    t = tail(u=1.0, beta=2.0)
    assert default_delta(t, 3.0) == pytest.approx(0.5)
    assert default_delta(t, 1.0) == pytest.approx(0.5)
