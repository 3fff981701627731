"""Acceptance suite: one PASS/FAIL line per criterion, printed in the pytest
terminal summary.  Tolerances are the specified ones; Monte Carlo inputs use
the fixed configuration seed."""

import itertools
import time

import numpy as np
import pytest
from scipy import stats

from conftest import small_config
from twinbeam.analysis import (counting_xc_histogram, estimate_efficiencies, extract_fwhm,
                               frame_autocovariance, intensity_correlation_maps,
                               power_law_exponent, select_reference_points,
                               spatial_correlation, width_vs_power_sweep,
                               width_vs_waist_sweep)
from twinbeam.analysis.maps import frame_means, windowed_covariance
from twinbeam.cli import run_pipeline
from twinbeam.config import reference_config, save_config
from twinbeam.profiles import FWHM_PER_SIGMA
from twinbeam.rng import stream
from twinbeam.synth import intensity_stack, make_speckle_model, render_speckle_frame

UM = 1e6
XC_TRUTH_UM = (490.0, 710.0)


def agree(a, ua, b, ub):
    """Equal within combined uncertainty (two standard deviations)."""
    return abs(a - b) <= 2.0 * np.hypot(ua, ub)


@pytest.fixture(scope="module")
def counting_result(reference_counting_run):
    events, synth_s = reference_counting_run
    cfg = reference_config("counting")
    t0 = time.perf_counter()
    hist = counting_xc_histogram(events, cfg)
    width = extract_fwhm(hist, cfg.superpixel_size, cfg.geometry.radial_axis, seed=cfg.rng_seed)
    return width, synth_s + time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_1_counting_width_recovery(counting_result, acceptance):
    w, seconds = counting_result
    rad, az = w.fwhm_radial_Theta * UM, w.fwhm_azimuthal_Psi * UM
    ok = (abs(rad - 490) <= 52 and abs(az - 710) <= 52 and seconds < 300)
    assert acceptance(1, ok,
                      f"counting XC FWHM radial {rad:.1f}+-{w.uncertainty_radial * UM:.1f} um "
                      f"(490+-52), azimuthal {az:.1f}+-{w.uncertainty_azimuthal * UM:.1f} um "
                      f"(710+-52), 1e5 frames in {seconds:.0f} s (< 300 s)")


@pytest.mark.slow
def test_criterion_2_efficiency_recovery(reference_counting_events, acceptance):
    m = estimate_efficiencies(reference_counting_events)
    es, ei = m.estimated_efficiency_signal, m.estimated_efficiency_idler
    ok = abs(es - 0.085) <= 0.005 and abs(ei - 0.072) <= 0.005
    assert acceptance(2, ok,
                      f"eta_signal {es:.4f}+-{m.uncertainty_signal:.4f} (0.085+-0.005), "
                      f"eta_idler {ei:.4f}+-{m.uncertainty_idler:.4f} (0.072+-0.005)")


@pytest.mark.slow
def test_criterion_3_cross_regime_consistency(counting_result, acceptance):
    cw, _ = counting_result
    cfg = reference_config("intensity")
    xc = np.array(XC_TRUTH_UM) / UM
    model = make_speckle_model(cfg.gain.ac_to_xc_ratio * xc, xc, cfg.source.cross_strength_mu,
                               1.5e4)
    stack = intensity_stack(cfg, model, 1000)
    pts = select_reference_points(stack, cfg, 100, 33)
    _, xc_map = intensity_correlation_maps(stack, pts, 33, cfg)
    iw = extract_fwhm(xc_map, cfg.superpixel_size, cfg.geometry.radial_axis, seed=cfg.rng_seed)
    pairs = ((cw.fwhm_radial_Theta, cw.uncertainty_radial, iw.fwhm_radial_Theta,
              iw.uncertainty_radial),
             (cw.fwhm_azimuthal_Psi, cw.uncertainty_azimuthal, iw.fwhm_azimuthal_Psi,
              iw.uncertainty_azimuthal))
    ok = all(agree(*p) for p in pairs)
    txt = ", ".join(f"{name} counting {p[0] * UM:.1f}+-{p[1] * UM:.1f} vs intensity "
                    f"{p[2] * UM:.1f}+-{p[3] * UM:.1f} um"
                    for name, p in zip(("radial", "azimuthal"), pairs))
    assert acceptance(3, ok, txt + " (agree within 2 combined sigma)")


@pytest.fixture(scope="module")
def power_rows():
    cfg = reference_config("intensity")
    return width_vs_power_sweep(cfg, np.linspace(0.015, 0.05, 8), n_frames=1000, n_points=100,
                                window=33)


@pytest.mark.slow
def test_criterion_4_power_sweep_shape(power_rows, acceptance):
    rows = power_rows
    p = np.array([r["power_W"] for r in rows])
    axes = ("radial", "azimuthal")

    def col(kind, axis, unc=False):
        return np.array([r[f"{kind}_{axis}_{'unc_' if unc else ''}um"] for r in rows])

    floor = all(r["ac_at_floor"] for r in rows if r["power_W"] < 0.02 - 1e-12)
    mono = all(col("ac", a)[j + 1] >= col("ac", a)[j]
               - 2 * np.hypot(col("ac", a, True)[j], col("ac", a, True)[j + 1])
               for a in axes for j in range(len(rows) - 1))
    plat = (p >= 0.03 - 1e-12)
    spread = max((col("ac", a)[plat].max() - col("ac", a)[plat].min())
                 / col("ac", a)[plat].mean() for a in axes)
    # Constancy: chi-square of the 25-50 mW XC widths about their weighted
    # mean, per axis, at the 5% level.  The worst pairwise z is reported too.
    xc_idx = np.flatnonzero(p >= 0.025 - 1e-12)
    p_const, worst_z = [], 0.0
    for a in axes:
        x, u = col("xc", a)[xc_idx], col("xc", a, True)[xc_idx]
        wmean = np.sum(x / u**2) / np.sum(1 / u**2)
        p_const.append(stats.chi2.sf(np.sum(((x - wmean) / u) ** 2), len(x) - 1))
        worst_z = max([worst_z] + [abs(x[i] - x[j]) / np.hypot(u[i], u[j])
                                   for i, j in itertools.combinations(range(len(x)), 2)])
    xc_const = min(p_const) >= 0.05
    larger = all(np.all(col("xc", a)[plat] > col("ac", a)[plat]) for a in axes)
    ok = floor and mono and spread < 0.10 and xc_const and larger
    ac15 = rows[0]
    assert acceptance(4, ok,
                      f"(a) AC floor below 20 mW {floor} (15 mW AC "
                      f"{ac15['ac_radial_um']:.0f}/{ac15['ac_azimuthal_um']:.0f} um); "
                      f"(b) AC non-decreasing {mono}, plateau spread {spread:.3f} (< 0.10); "
                      f"(c) XC constant 25-50 mW {xc_const} (chi2 p radial {p_const[0]:.2f}, "
                      f"azimuthal {p_const[1]:.2f}, >= 0.05; worst pair {worst_z:.1f} sigma), "
                      f"XC > AC on plateau {larger}")


@pytest.fixture(scope="module")
def waist_rows():
    cfg = reference_config("intensity")
    return width_vs_waist_sweep(cfg, np.linspace(0.2e-3, 1.0e-3, 5), widen_waists=[0.6e-3],
                                n_frames=1000, n_points=100, window=33)


@pytest.mark.slow
def test_criterion_5_waist_sweep_shape(waist_rows, acceptance):
    base = [r for r in waist_rows if r["widen_factor"] == 1.0]
    wide = [r for r in waist_rows if r["widen_factor"] == 2.0]
    w = np.array([r["waist_horizontal_m"] for r in base])
    parts, ok = [], True
    for kind in ("xc", "ac"):
        rad = np.array([r[f"{kind}_radial_um"] for r in base])
        az = np.array([r[f"{kind}_azimuthal_um"] for r in base])
        spread = (rad.max() - rad.min()) / rad.min()
        dec = bool(np.all(np.diff(az) < 0))
        expo = power_law_exponent(w, az)
        ref = next(r for r in base if np.isclose(r["waist_horizontal_m"],
                                                 wide[0]["waist_horizontal_m"]))
        widen = wide[0][f"{kind}_azimuthal_um"] > ref[f"{kind}_azimuthal_um"]
        ok &= spread < 0.15 and dec and -1.3 <= expo <= -0.7 and widen
        parts.append(f"{kind.upper()} radial spread {spread:.3f} (< 0.15), azimuthal "
                     f"decreasing {dec}, exponent {expo:.2f} ([-1.3, -0.7]), widen x2 "
                     f"increases {widen}")
    assert acceptance(5, ok, "; ".join(parts))


@pytest.mark.slow
def test_waist_sweep_tracks_prediction(waist_rows):
    for r in waist_rows:
        for axis in ("radial", "azimuthal"):
            assert r[f"xc_{axis}_um"] == pytest.approx(r[f"pred_{axis}_um"], rel=0.15)


def test_criterion_6_estimator_oracles(acceptance):
    rng = stream(6, "test", 0)
    a, b = rng.normal(size=(32, 32)), rng.normal(size=(32, 32))
    direct = spatial_correlation(a, b, "direct")
    fft_err = np.max(np.abs(spatial_correlation(a, b, "fft") - direct)) / np.max(np.abs(direct))

    cfg = small_config("intensity")
    model = make_speckle_model((2.5e-4, 2.5e-4), (4e-4, 4e-4), 0.9, 1500.0)
    stack = intensity_stack(cfg, model, 200)
    frames = stack.frames
    means = frame_means(frames)
    r1, r2 = (30, 40), (33, 44)
    g12 = windowed_covariance(frames, means, r1, slice(r2[0], r2[0] + 1), slice(r2[1], r2[1] + 1))
    g21 = windowed_covariance(frames, means, r2, slice(r1[0], r1[0] + 1), slice(r1[1], r1[1] + 1))
    symmetric = g12.tobytes() == g21.tobytes()

    # float64 input, so that scaling the data does not itself round.
    c = 3.0
    pts = select_reference_points(stack, cfg, 30, 15)

    def maps_of(data):
        s = type(stack)(data, stack.binning, stack.regime, stack.signal_region,
                        stack.idler_region)
        return intensity_correlation_maps(s, pts, 15, cfg)

    maps = maps_of(frames.astype(np.float64))
    scaled = maps_of(frames.astype(np.float64) * c)
    gamma_err = max(np.max(np.abs(s.grid - c * c * m.grid)) / np.max(np.abs(m.grid))
                    for m, s in zip(maps, scaled))
    fwhm_err = 0.0
    for m, s in zip(maps, scaled):
        e0 = extract_fwhm(m, cfg.superpixel_size, n_boot=0)
        e1 = extract_fwhm(s, cfg.superpixel_size, n_boot=0)
        fwhm_err = max(fwhm_err, abs(e1.fwhm_radial_Theta / e0.fwhm_radial_Theta - 1),
                       abs(e1.fwhm_azimuthal_Psi / e0.fwhm_azimuthal_Psi - 1))
    ok = fft_err <= 1e-9 and symmetric and gamma_err <= 1e-12 and fwhm_err <= 1e-12
    assert acceptance(6, ok,
                      f"FFT vs direct rel err {fft_err:.1e} (<= 1e-9), symmetry bitwise "
                      f"{symmetric}, scale c^2 rel err {gamma_err:.1e}, FWHM rel change "
                      f"{fwhm_err:.1e}")


def analytic_superpixel_autocov(sigma_cells, scale, max_lag):
    """Autocovariance of 2x2-cell sums of a Gaussian-kernel speckle intensity
    whose cell-level covariance is ``exp(-d^2 / (2 s^2))`` per unit cell mean."""
    lags = np.arange(-max_lag, max_lag + 1)
    out = np.zeros((lags.size, lags.size))
    offs = [(i, j) for i in (0, 1) for j in (0, 1)]
    for (ar, ac), (br, bc) in itertools.product(offs, offs):
        dr = (2 * lags[:, None] + br - ar) / sigma_cells[0]
        dc = (2 * lags[None, :] + bc - ac) / sigma_cells[1]
        out += np.exp(-0.5 * (dr ** 2 + dc ** 2))
    return scale ** 2 * out


def test_criterion_7_speckle_statistics(acceptance):
    ac_fwhm = (300e-6, 300e-6)
    mean = 1000.0
    model = make_speckle_model(ac_fwhm, (450e-6, 450e-6), 0.9, mean)

    cfg = small_config("intensity")
    r0, r1, c0, c1 = cfg.region("signal")
    pix = ((r0 + r1) // 2, (c0 + c1) // 2)
    vals = np.array([render_speckle_frame(model, cfg, stream(7, "speckle", k), k).grid[pix]
                     for k in range(5000)])
    ks = stats.kstest(vals, "expon", args=(0.0, vals.mean())).statistic

    big = small_config("intensity", 512)
    r0, r1, c0, c1 = big.region("signal")
    frames = np.array([render_speckle_frame(model, big, stream(8, "speckle", k), k)
                       .grid[r0:r1, c0:c1] for k in range(100)])
    max_lag = 8
    measured = frame_autocovariance(frames, max_lag)
    cell = big.superpixel_size / 2
    sigma_cells = np.array(ac_fwhm) / FWHM_PER_SIGMA / cell
    analytic = analytic_superpixel_autocov(sigma_cells, mean / 4, max_lag)
    acov_err = np.max(np.abs(measured - analytic)) / analytic.max()
    ok = ks < 0.02 and acov_err < 0.10
    assert acceptance(7, ok,
                      f"single-superpixel KS distance to exponential {ks:.4f} (< 0.02, 5000 "
                      f"frames); autocovariance max deviation {acov_err:.3f} of peak (< 0.10, "
                      f"100 frames)")


def test_criterion_8_determinism(tmp_path, acceptance):
    cfg_path = tmp_path / "small.cfg"
    save_config(small_config("intensity", 512).replace(n_frames=100, n_reference_points=20),
                cfg_path)
    outputs = []
    for k, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"fig3_{k}.csv"
        code = run_pipeline(["reproduce-fig3", "--config", str(cfg_path), "--powers",
                             "0.015:0.05:4", "--jobs", jobs, "--out", str(out)])
        outputs.append(out.read_bytes() if code == 0 else None)
    frames = []
    for jobs in ("1", "2"):
        d = tmp_path / f"frames_{jobs}"
        run_pipeline(["synth", "--config", str(cfg_path), "--regime", "counting", "--frames",
                      "3000", "--jobs", jobs, "--out", str(d)])
        frames.append(b"".join(p.read_bytes() for p in sorted(d.glob("frames_*.bin"))))
    csv_same = outputs[0] is not None and outputs[0] == outputs[1] == outputs[2]
    frames_same = frames[0] == frames[1] and len(frames[0]) > 0
    assert acceptance(8, csv_same and frames_same,
                      f"reproduce-fig3 CSV byte-identical across runs and --jobs 1/2 "
                      f"{csv_same}; synth frame files identical across --jobs {frames_same}")
