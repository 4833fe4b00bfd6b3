import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultwarn.errors import (
    AliasingError,
    DegenerateChannelError,
    EmptyInputError,
    ParameterError,
    UndefinedPowerError,
)
from faultwarn.physics import BearingGeometry, fault_orders
from faultwarn.signal import (
    SampledSeries,
    SynthSpec,
    apply_norm,
    fit_norm,
    inject_noise,
    inject_noise_stream,
    make_windows,
    n_windows,
    noise_variance,
    read_series,
    synth_bearing,
    window_end_times,
    write_series,
)

GEOM = BearingGeometry(9, 7.94, 38.5, 0.0)


def series(n, channels=1, fs=100.0, seed=0):
    return SampledSeries(np.random.default_rng(seed).standard_normal((channels, n)), fs)


class TestWindows:
    def test_small_count_and_offsets(self):
        w = make_windows(series(10), 4, 2)
        assert [x.offset for x in w] == [0, 2, 4, 6]

    def test_exact_fit(self):
        assert len(make_windows(series(4), 4, 1)) == 1

    def test_default_geometry_count(self):
        # (100000 - 2048) // 256 + 1, checked against enumeration
        offsets = [o for o in range(0, 100000) if o + 2048 <= 100000 and o % 256 == 0]
        assert n_windows(100000, 2048, 256) == len(offsets) == 383

    def test_errors(self):
        with pytest.raises(EmptyInputError):
            make_windows(series(3), 4, 1)
        with pytest.raises(ParameterError):
            make_windows(series(10), 4, 0)

    def test_end_times(self):
        s = series(10, fs=2.0)
        np.testing.assert_allclose(window_end_times(s, 4, 2), [2.0, 3.0, 4.0, 5.0])

    @given(st.integers(1, 300), st.integers(1, 50), st.integers(1, 50))
    def test_coverage(self, n, length, hop):
        if length > n or hop > length:
            return
        covered = np.zeros(n, dtype=bool)
        for w in make_windows(series(n), length, hop):
            covered[w.offset : w.offset + w.length] = True
        last = (n_windows(n, length, hop) - 1) * hop + length
        assert covered[:last].all()


class TestNorm:
    def test_degenerate_channel(self):
        with pytest.raises(DegenerateChannelError):
            fit_norm(np.array([[1.0, 1.0, 1.0]]))

    def test_already_standard(self):
        stats = fit_norm(np.array([[-1.0, 1.0]]))
        assert stats.mean[0] == 0.0 and stats.std[0] == 1.0
        np.testing.assert_array_equal(apply_norm(stats, np.array([[-1.0, 1.0]])), [[-1.0, 1.0]])

    def test_fit_apply_refit(self):
        x = 3.0 + 2.5 * np.random.default_rng(4).standard_normal((3, 5000))
        z = apply_norm(fit_norm(x), x)
        assert np.all(np.abs(z.mean(axis=1)) < 1e-9)
        assert np.all(np.abs(z.std(axis=1) - 1.0) < 1e-9)
        again = fit_norm(z)
        assert np.all(np.abs(again.mean) < 1e-9) and np.all(np.abs(again.std - 1) < 1e-9)

    def test_same_stats_on_other_split(self):
        train = series(1000, 2, seed=1)
        test = series(500, 2, seed=2)
        stats = fit_norm(train)
        out = apply_norm(stats, test)
        np.testing.assert_allclose(out.data, (test.data - stats.mean[:, None]) / stats.std[:, None])


class TestNoise:
    def test_variance_formula(self):
        x = np.ones((2, 100))
        assert noise_variance(x, 0.0) == 1.0
        assert noise_variance(x, 20.0) == pytest.approx(0.01, rel=1e-15)

    def test_zero_power(self):
        with pytest.raises(UndefinedPowerError):
            inject_noise(np.zeros((1, 8)), 10.0, seed=0)

    def test_realized_snr(self):
        x = np.random.default_rng(3).standard_normal((2, 500_000)) * [[1.0], [3.0]]
        noisy = inject_noise(x, 10.0, seed=7)
        snr = 10 * np.log10(np.mean(x**2) / np.mean((noisy - x) ** 2))
        assert abs(snr - 10.0) < 0.1

    def test_noise_power_three_sigma(self):
        x = np.full((1, 1_000_000), 2.0)
        sigma2 = noise_variance(x, 3.0)
        n = inject_noise(x, 3.0, seed=1) - x
        # the variance of a sample variance of n Gaussians is 2 sigma^4 / n
        assert abs(n.var() - sigma2) < 3 * sigma2 * np.sqrt(2.0 / n.size)

    def test_channels_independent(self):
        x = np.ones((2, 200_000))
        n = inject_noise(x, 0.0, seed=5) - x
        assert abs(np.corrcoef(n)[0, 1]) < 0.01

    def test_keyed_draws(self):
        x = np.random.default_rng(0).standard_normal((1, 64))
        a = inject_noise(x, 5.0, seed=2, index=3)
        b = inject_noise(x, 5.0, seed=2, index=3)
        c = inject_noise(x, 5.0, seed=2, index=4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_window_input_keeps_shape(self):
        w = make_windows(series(64, 2), 16, 8)[2]
        out = inject_noise(w, 10.0, seed=0)
        assert out.data.shape == w.data.shape and out.index == w.index

    def test_none_is_identity(self):
        x = series(32).data
        np.testing.assert_array_equal(inject_noise_stream(x, 8, 4, None, 0), x)

    def test_stream_first_window_noise_matches_window_call(self):
        x = np.random.default_rng(1).standard_normal((2, 64))
        out = inject_noise_stream(x, 16, 4, 10.0, seed=9)
        np.testing.assert_array_equal(out[:, :16], inject_noise(x[:, :16], 10.0, seed=9, index=0))


class TestSynth:
    def test_healthy(self):
        s, t_phys = synth_bearing(SynthSpec(GEOM, duration=1.0))
        assert t_phys is None
        first, second = s.data[0, :10000], s.data[0, 10000:]
        assert abs(first.std() - second.std()) < 0.05

    def test_deterministic(self):
        spec = SynthSpec(GEOM, fault="BPFO", onset=0.2, duration=0.5, seed=11)
        a, _ = synth_bearing(spec)
        b, _ = synth_bearing(spec)
        np.testing.assert_array_equal(a.data, b.data)

    def test_impulse_period(self):
        # geometry tuned so that BPFO = 35 Hz at f_r = 10 Hz: 4.5 (1 - r) = 3.5
        geom = BearingGeometry(9, 2.0, 9.0, 0.0)
        assert fault_orders(geom, 10.0).BPFO == pytest.approx(35.0)
        spec = SynthSpec(geom, fault="BPFO", duration=2.0, noise_level=0.05, shaft_tone=0.0, shaft_hz=10.0, seed=3)
        s, _ = synth_bearing(spec)
        x = s.data[0] ** 2
        x = x - x.mean()
        ac = np.fft.irfft(np.abs(np.fft.rfft(x, 2 * x.size)) ** 2)[: x.size]
        lo, hi = int(0.5 * s.sample_rate / 35.0), int(1.5 * s.sample_rate / 35.0)
        lag = lo + int(np.argmax(ac[lo:hi]))
        assert abs(lag - s.sample_rate / 35.0) <= 1.0

    def test_onset_reported(self):
        _, t = synth_bearing(SynthSpec(GEOM, fault="BPFI", onset=0.3, duration=0.5))
        assert t == 0.3

    def test_aliasing(self):
        spec = SynthSpec(GEOM, fault="BPFI", duration=0.1, sample_rate=200.0, shaft_hz=29.95, resonance_hz=50.0)
        with pytest.raises(AliasingError):
            synth_bearing(spec)

    def test_invalid_spec(self):
        with pytest.raises(ParameterError):
            SynthSpec(GEOM, onset=5.0, duration=1.0)
        with pytest.raises(ParameterError):
            SynthSpec(GEOM, damping_ratio=1.0)
        with pytest.raises(ParameterError):
            SynthSpec(GEOM, fault="cage")

    def test_json_round_trip(self):
        spec = SynthSpec(GEOM, fault="BSF", onset=1.0, duration=2.0, channels=2, channel_gains=(1.0, 0.5))
        assert SynthSpec.from_json(spec.to_json()) == spec


class TestIO:
    def test_f32_round_trip(self, tmp_path):
        s = SampledSeries(np.arange(12, dtype=float).reshape(2, 6), 50.0, 1.5)
        p = write_series(s, tmp_path / "x.f32")
        back = read_series(p)
        np.testing.assert_array_equal(back.data, s.data)
        assert back.sample_rate == 50.0 and back.start_time == 1.5

    def test_csv_round_trip(self, tmp_path):
        s = series(40, 3, fs=1000.0)
        back = read_series(write_series(s, tmp_path / "x.csv"))
        np.testing.assert_allclose(back.data, s.data, rtol=1e-8)
        assert back.sample_rate == pytest.approx(1000.0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 4), st.integers(2, 30))
    def test_f32_shapes(self, tmp_path_factory, c, n):
        d = tmp_path_factory.mktemp("io")
        s = SampledSeries(np.ones((c, n)), 10.0)
        assert read_series(write_series(s, d / "s.f32")).data.shape == (c, n)
