import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from twinbeam.detector import (Frame, FrameStack, detect_counting, detect_intensity,
                               extract_events)
from twinbeam.rng import stream
from twinbeam.synth import PairBatch, sample_pair_events


def lossless(config):
    return config.replace(detector__quantum_efficiency_signal=1.0,
                          detector__quantum_efficiency_idler=1.0,
                          detector__dark_event_rate=0.0)


def interior_pair(config):
    """One pair: signal at the middle of the signal region, idler at its preimage."""
    sp = config.superpixel_size
    r0, r1, c0, c1 = config.region("signal")
    s = np.array([[(r0 + r1) / 2 + 0.5, (c0 + c1) / 2 + 0.5]]) * sp
    pitch = config.detector.pixel_pitch
    m = np.asarray(config.geometry.conjugation.matrix, float).reshape(2, 2)
    i = np.linalg.solve(m, (s / pitch - config.geometry.conjugation.offset).T).T * pitch
    return PairBatch(s, i, 0)


def intensity_frame(grid, config):
    return Frame(np.asarray(grid, dtype=float), config.binning, "intensity", 0,
                 config.region("signal"), config.region("idler"), config.rng_seed)


class TestCounting:
    def test_total_loss(self, counting_config, rng):
        cfg = counting_config.replace(detector__quantum_efficiency_signal=0.0,
                                      detector__quantum_efficiency_idler=0.0,
                                      detector__dark_event_rate=0.0)
        pairs = sample_pair_events(cfg, 200.0, (1e-4, 1e-4), rng)
        frame = detect_counting(pairs, cfg, rng)
        assert frame.grid.shape == (128, 128)
        assert not frame.grid.any()

    def test_lossless_single_pair(self, counting_config, rng):
        cfg = lossless(counting_config)
        ev = extract_events(detect_counting(interior_pair(cfg), cfg, rng), cfg.detector.threshold)
        assert len(ev.signal_events) == 1 and len(ev.idler_events) == 1
        assert tuple(ev.signal_events[0]) == (64, 32)
        assert tuple(ev.idler_events[0]) == (64, 95)

    def test_two_photons_one_event(self, counting_config, rng):
        cfg = lossless(counting_config)
        p = interior_pair(cfg)
        both = PairBatch(np.repeat(p.signal_pos, 2, 0), np.repeat(p.idler_pos, 2, 0))
        assert detect_counting(both, cfg, rng).grid.sum() == 2

    def test_efficiency_ratio(self, counting_config):
        cfg = counting_config.replace(detector__dark_event_rate=0.0)
        sigma = (1e-4, 1e-4)
        n_s = n_i = 0
        for k in range(10_000):
            pairs = sample_pair_events(cfg, 123.5, sigma, stream(9, "pairs", k))
            ev = extract_events(detect_counting(pairs, cfg, stream(9, "detect", k)), 1.0)
            n_s += len(ev.signal_events)
            n_i += len(ev.idler_events)
        assert n_i / n_s == pytest.approx(0.072 / 0.085, rel=0.02)

    def test_thinning_linearity(self, counting_config):
        cfg = counting_config.replace(detector__dark_event_rate=0.0)
        counts = []
        for rate in (20.0, 40.0):
            total = 0
            for k in range(3000):
                pairs = sample_pair_events(cfg, rate, (1e-4, 1e-4), stream(10, "pairs", k))
                total += detect_counting(pairs, cfg, stream(10, "detect", k)).grid.sum()
            counts.append(total)
        # Poisson error on the ratio is about 1%.
        assert counts[1] / counts[0] == pytest.approx(2.0, rel=0.04)

    def test_dark_events(self, counting_config, rng):
        cfg = counting_config.replace(detector__dark_event_rate=0.01)
        empty = PairBatch(np.empty((0, 2)), np.empty((0, 2)))
        n = sum(detect_counting(empty, cfg, stream(11, "detect", k)).grid.sum()
                for k in range(200))
        expect = 200 * 128 * 128 * 0.01
        assert abs(n - expect) < 4 * np.sqrt(expect)


class TestIntensity:
    def test_zero_in_zero_out(self, intensity_config, rng):
        cfg = intensity_config.replace(detector__readout_noise_sigma=0.0)
        out = detect_intensity(intensity_frame(np.zeros(cfg.grid_shape), cfg), cfg, rng)
        assert not out.grid.any()

    def test_moments(self, intensity_config, rng):
        cfg = intensity_config
        out = detect_intensity(intensity_frame(np.full(cfg.grid_shape, 1000.0), cfg), cfg, rng)
        sig = out.grid[:, :128]
        assert sig.mean() == pytest.approx(0.085 * 1000, rel=0.02)
        assert sig.std() == pytest.approx(10.0, rel=0.02)
        assert out.grid[:, 128:].mean() == pytest.approx(0.072 * 1000, rel=0.02)

    def test_saturation_clamp(self, intensity_config, rng):
        cfg = intensity_config.replace(detector__saturation=1000.0)
        out = detect_intensity(intensity_frame(np.full(cfg.grid_shape, 1e7), cfg), cfg, rng)
        assert np.all(out.grid == 1000.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.integers(0, 1000))
    def test_monotone(self, a, b, k):
        from twinbeam.config import reference_config

        cfg = reference_config().replace(detector__saturation=5e3)
        lo, hi = sorted((a, b))
        x = detect_intensity(intensity_frame(np.full(cfg.grid_shape, lo), cfg), cfg,
                             stream(1, "test", k)).grid
        y = detect_intensity(intensity_frame(np.full(cfg.grid_shape, hi), cfg), cfg,
                             stream(1, "test", k)).grid
        assert np.all(y >= x)
        assert np.all((x >= 0) & (x <= 5e3))


class TestExtract:
    def test_below_threshold(self, counting_config, rng):
        grid = rng.uniform(0, 49.9, counting_config.grid_shape)
        ev = extract_events(Frame(grid, 8, "counting", 0, counting_config.region("signal"),
                                  counting_config.region("idler")), 50.0)
        assert len(ev.signal_events) == 0 and len(ev.idler_events) == 0

    def test_single_idler_event(self, counting_config):
        grid = np.zeros(counting_config.grid_shape)
        grid[20, 100] = 80.0
        ev = extract_events(Frame(grid, 8, "counting", 3, counting_config.region("signal"),
                                  counting_config.region("idler")), 50.0)
        assert ev.idler_events.tolist() == [[20, 100]] and len(ev.signal_events) == 0
        assert ev.frame_index == 3

    def test_threshold_must_be_positive(self, counting_config):
        frame = Frame(np.zeros((4, 4)), 8, "counting")
        for t in (0.0, -1.0):
            with pytest.raises(ValueError):
                extract_events(frame, t)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_region_discipline(self, seed):
        grid = stream(seed, "test", 0).random((40, 40)) > 0.5
        sig, idl = (2, 30, 1, 18), (5, 38, 20, 39)
        ev = extract_events(Frame(grid.astype(np.uint8), 8, "counting", 0, sig, idl), 1.0)
        for pts, (r0, r1, c0, c1) in ((ev.signal_events, sig), (ev.idler_events, idl)):
            assert np.all((pts[:, 0] >= r0) & (pts[:, 0] < r1))
            assert np.all((pts[:, 1] >= c0) & (pts[:, 1] < c1))
        assert len(ev.signal_events) == grid[2:30, 1:18].sum()

    @pytest.mark.slow
    def test_tail_probability(self):
        # 5 sigma has p = 2.9e-7: 1e6 superpixels expect only 0.3 events, so
        # the rate is measured over 1e9 unbinned superpixels.
        sigma, n_side, n_frames = 10.0, 1000, 1000
        rect = (0, n_side, 0, n_side)
        hits = 0
        for k in range(n_frames):
            g = stream(77, "readout", k).standard_normal((n_side, n_side), dtype=np.float32)
            frame = Frame(g * np.float32(sigma), 1, "counting", k, rect, (0, 0, 0, 0))
            hits += len(extract_events(frame, 5 * sigma).signal_events)
        expect = norm.sf(5.0) * n_side * n_side * n_frames
        assert expect / 1.5 < hits < expect * 1.5


def test_frame_stack_iteration(counting_config):
    frames = np.zeros((3, 4, 4), dtype=np.uint8)
    stack = FrameStack(frames, 8, "counting", (0, 4, 0, 2), (0, 4, 2, 4), 5, np.array([7, 8, 9]))
    got = list(stack)
    assert [f.frame_index for f in got] == [7, 8, 9]
    back = FrameStack.from_frames(got)
    np.testing.assert_array_equal(back.frame_indices, [7, 8, 9])
    assert back.seed == 5 and len(back) == 3
