import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loadcast.exceptions import (
    ChannelMismatch,
    EmptyTrace,
    InsufficientData,
    InvalidKind,
    InvalidSplit,
    OutOfRange,
    UngriddedData,
)
from loadcast.series import (
    MeanResampler,
    SlidingWindows,
    SplitSpec,
    TimeSeries,
    generate_synthetic,
    load_csv,
    multichannel_windows,
    resample_mean,
    sliding_windows,
    split,
    synthetic_suite,
    write_csv,
)

values_strategy = st.lists(
    st.floats(min_value=0, max_value=100, allow_nan=False), min_size=1, max_size=200
)


def ts(values, spacing=1.0):
    return TimeSeries("t", spacing, values)


def autocorr(x, lag):
    x = np.asarray(x) - np.mean(x)
    return float(x[lag:] @ x[:-lag] / (x @ x))


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("t,value\n0,10\n1,20\n2,30\n")
        series = load_csv(path)
        assert len(series) == 3
        assert series.spacing_minutes == 1.0
        assert series.id == "a"
        np.testing.assert_array_equal(series.values, [10, 20, 30])

    def test_out_of_range(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("t,value\n0,10\n1,150\n")
        with pytest.raises(OutOfRange):
            load_csv(path)

    def test_ungridded(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("t,value\n0,1\n1,2\n3,3\n")
        with pytest.raises(UngriddedData):
            load_csv(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("t,value\n")
        with pytest.raises(EmptyTrace):
            load_csv(path)

    def test_epoch_seconds(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("t,value\n1600000000,1\n1600001200,2\n1600002400,3\n")
        series = load_csv(path)
        assert series.spacing_minutes == 20.0
        assert series.origin_timestamp == 1600000000

    def test_round_trip(self, tmp_path):
        series = generate_synthetic("noisy", 50, seed=3)
        write_csv(series, tmp_path / "n.csv")
        back = load_csv(tmp_path / "n.csv", id=series.id)
        np.testing.assert_array_equal(back.values, series.values)


def test_timeseries_is_immutable():
    series = ts([1.0, 2.0])
    with pytest.raises(ValueError):
        series.values[0] = 5.0


class TestResample:
    def test_forty_points(self):
        values = np.arange(40, dtype=float)
        out = resample_mean(ts(values), 20)
        np.testing.assert_allclose(out.values, [values[:20].mean(), values[20:].mean()])
        assert out.spacing_minutes == 20.0

    def test_constant(self):
        out = resample_mean(ts(np.full(33, 7.0)), 4)
        assert np.all(out.values == 7.0)

    def test_minute_day_to_twenty_minute_bins(self):
        out = resample_mean(ts(np.zeros(21600)), 20)
        assert len(out) == 1080

    def test_bin_too_large(self):
        with pytest.raises(EmptyTrace):
            resample_mean(ts([1.0, 2.0]), 3)

    @given(values_strategy)
    def test_bin_one_is_identity(self, values):
        out = resample_mean(ts(values), 1)
        np.testing.assert_array_equal(out.values, values)

    @given(values_strategy, st.integers(1, 10))
    def test_mean_of_block_means(self, values, b):
        if b > len(values):
            return
        out = resample_mean(ts(values), b)
        k = len(values) // b
        assert len(out) == k
        assert abs(out.values.mean() - np.mean(values[: k * b])) <= 1e-9

    def test_transformer(self):
        values = np.arange(45, dtype=float)
        out = MeanResampler(bin=20).fit_transform(values)
        np.testing.assert_allclose(out, [9.5, 29.5])
        assert MeanResampler(bin=5).get_params() == {"bin": 5}


class TestSplit:
    def test_hundred(self):
        series = ts(np.arange(100, dtype=float))
        parts = split(series, SplitSpec(0.2, 3))
        assert (len(parts.train), len(parts.long_test)) == (80, 20)
        np.testing.assert_array_equal(parts.short_test.values, parts.long_test.values[:3])

    def test_three_day_holdout(self):
        parts = split(ts(np.zeros(1080), spacing=20.0), SplitSpec(0.2, 3))
        assert len(parts.long_test) == 216
        assert len(parts.long_test) * 20 == 72 * 60

    def test_empty_test_set(self):
        with pytest.raises(InvalidSplit):
            split(ts(np.zeros(10)), SplitSpec(0.05, 3))

    def test_short_longer_than_test(self):
        with pytest.raises(InvalidSplit):
            split(ts(np.zeros(10)), SplitSpec(0.2, 3))

    @given(values_strategy.filter(lambda v: len(v) >= 10), st.floats(0.1, 0.5))
    def test_concatenation(self, values, fraction):
        parts = split(ts(values), SplitSpec(fraction, 1))
        joined = np.concatenate((parts.train.values, parts.long_test.values))
        np.testing.assert_array_equal(joined, values)


class TestSlidingWindows:
    def test_single_pair(self):
        assert len(sliding_windows(ts(np.zeros(9)), 6, 3)) == 1

    def test_two_pairs(self):
        ws = sliding_windows(ts(np.arange(10, dtype=float)), 6, 3)
        assert len(ws) == 2
        assert ws.inputs[1][0] == 1.0

    def test_first_pair(self):
        ws = sliding_windows(ts(np.arange(1, 10, dtype=float)), 6, 3)
        inp, tgt = ws.pairs[0]
        np.testing.assert_array_equal(inp, [1, 2, 3, 4, 5, 6])
        np.testing.assert_array_equal(tgt, [7, 8, 9])

    def test_too_short(self):
        with pytest.raises(InsufficientData):
            sliding_windows(ts(np.zeros(8)), 6, 3)

    @given(values_strategy, st.integers(1, 8), st.integers(1, 4))
    def test_pairs_are_contiguous_slices(self, values, w, h):
        if len(values) < w + h:
            return
        ws = sliding_windows(ts(values), w, h)
        assert len(ws) == max(0, len(values) - w - h + 1)
        for k, (inp, tgt) in enumerate(ws.pairs):
            np.testing.assert_array_equal(np.concatenate((inp, tgt)), values[k : k + w + h])

    def test_transformer(self):
        y = np.arange(10, dtype=float)
        tf = SlidingWindows(window=6, horizon=3).fit(y)
        assert tf.transform(y).shape == (2, 6, 1)
        assert tf.targets(y).shape == (2, 3)


class TestMultichannel:
    def test_shapes(self):
        channels = [np.arange(20.0) + c for c in range(5)]
        ws = multichannel_windows(channels, 6, 3, target_channel=2)
        assert ws.inputs.shape == (12, 6, 5)
        np.testing.assert_array_equal(ws.inputs[0, :, 2], np.arange(6.0) + 2)
        np.testing.assert_array_equal(ws.targets[0], [8.0, 9.0, 10.0])

    def test_unequal(self):
        with pytest.raises(ChannelMismatch):
            multichannel_windows([np.zeros(10), np.zeros(11)], 6, 3)


class TestSynthetic:
    def test_constant(self):
        series = generate_synthetic("constant", 10, seed=5)
        assert len(series) == 10
        assert np.all(series.values == series.values[0])

    def test_deterministic(self):
        a = generate_synthetic("seasonal", 288, 72, 42)
        b = generate_synthetic("seasonal", 288, 72, 42)
        np.testing.assert_array_equal(a.values, b.values)

    def test_seasonal_autocorrelation(self):
        series = generate_synthetic("seasonal", 2160, 72, 42)
        assert autocorr(series.values, 72) > autocorr(series.values, 36)

    def test_unknown_kind(self):
        with pytest.raises(InvalidKind):
            generate_synthetic("sawtooth", 10)

    def test_seasonal_too_short(self):
        with pytest.raises(InsufficientData):
            generate_synthetic("seasonal", 100, 72, 1)

    @pytest.mark.parametrize("kind", ["seasonal", "onoff", "bursty", "noisy", "constant"])
    def test_clipped(self, kind):
        series = generate_synthetic(kind, 3000, 144, 7)
        assert series.values.min() >= 0.0 and series.values.max() <= 100.0

    def test_suite_mix(self):
        suite = synthetic_suite(seed=1, length=300, period=60)
        kinds = [t.id.split("-")[0] for t in suite]
        assert len(suite) == 50
        assert kinds.count("seasonal") == 20
        assert kinds.count("constant") == 5
        again = synthetic_suite(seed=1, length=300, period=60)
        assert all(np.array_equal(a.values, b.values) for a, b in zip(suite, again))
