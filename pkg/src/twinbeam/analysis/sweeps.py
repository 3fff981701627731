"""Width sweeps over pump power and pump waist (synth -> detect -> analyze)."""

import numpy as np

from ..pmmodel import predict_widths
from ..profiles import BelowResolutionError
from ..synth import gain_to_targets, intensity_stack, make_speckle_model
from .intensity import intensity_correlation_maps, select_reference_points
from .widths import extract_fwhm

__all__ = ["FLOOR_SUPERPIXELS", "measure_intensity_widths", "width_vs_power_sweep",
           "width_vs_waist_sweep", "power_law_exponent"]

# A Gaussian kernel of one-superpixel FWHM measures about 1.3-1.4 superpixels
# once integrated over superpixels; anything up to 1.5 counts as the floor.
FLOOR_SUPERPIXELS = 1.5

UM = 1e6


def _width(cmap, config, n_boot):
    try:
        return extract_fwhm(cmap, config.superpixel_size, config.geometry.radial_axis,
                            n_boot=n_boot, seed=config.rng_seed), False
    except BelowResolutionError:
        return None, True


def measure_intensity_widths(config, ac_fwhm, xc_fwhm, mean_intensity, n_frames=None,
                             n_points=None, window=33, jobs=1, n_boot=200):
    """Synthesize a speckle stack with the given targets and measure it.

    Returns ``(ac, xc)`` :class:`WidthEstimate` objects; an estimate is
    ``None`` when the width is below one superpixel.
    """
    model = make_speckle_model(ac_fwhm, xc_fwhm, config.source.cross_strength_mu,
                               mean_intensity)
    stack = intensity_stack(config, model, n_frames, jobs)
    n_points = config.n_reference_points if n_points is None else n_points
    pts = select_reference_points(stack, config, n_points, window)
    ac_map, xc_map = intensity_correlation_maps(stack, pts, window, config)
    ac, _ = _width(ac_map, config, n_boot)
    xc, _ = _width(xc_map, config, n_boot)
    return ac, xc


def _cols(prefix, est, config):
    if est is None:
        # Below resolution: report the one-superpixel upper bound.
        s = config.superpixel_size * UM
        return {f"{prefix}_radial_um": s, f"{prefix}_radial_unc_um": 0.0,
                f"{prefix}_azimuthal_um": s, f"{prefix}_azimuthal_unc_um": 0.0}
    return {f"{prefix}_radial_um": est.fwhm_radial_Theta * UM,
            f"{prefix}_radial_unc_um": est.uncertainty_radial * UM,
            f"{prefix}_azimuthal_um": est.fwhm_azimuthal_Psi * UM,
            f"{prefix}_azimuthal_unc_um": est.uncertainty_azimuthal * UM}


def _at_floor(est, config):
    if est is None:
        return True
    lim = FLOOR_SUPERPIXELS * config.superpixel_size
    return est.fwhm_radial_Theta <= lim and est.fwhm_azimuthal_Psi <= lim


def width_vs_power_sweep(config, powers, n_frames=None, n_points=None, window=33, jobs=1,
                         pm_widths=None, n_boot=200):
    """AC and XC widths versus pump power.

    Every power point reuses the configured seed (common random numbers), so
    differences between rows come from the gain model, not from sampling.
    Returns a list of row dicts with widths in micrometers and power in watts.
    """
    powers = [float(p) for p in powers]
    if any(p <= 0 for p in powers):
        raise ValueError("powers must be positive")
    pm = predict_widths(config) if pm_widths is None else pm_widths
    rows = []
    for p in powers:
        cfg = config.replace(pump__power_P=p)
        ac_t, xc_t, mean = gain_to_targets(p, cfg.gain, pm, cfg.superpixel_size)
        ac, xc = measure_intensity_widths(cfg, ac_t, xc_t, mean, n_frames, n_points, window,
                                          jobs, n_boot)
        row = {"power_W": p}
        row.update(_cols("ac", ac, cfg))
        row.update(_cols("xc", xc, cfg))
        row["ac_at_floor"] = int(_at_floor(ac, cfg))
        row.update({"target_ac_radial_um": float(ac_t[0]) * UM,
                    "target_ac_azimuthal_um": float(ac_t[1]) * UM,
                    "target_xc_radial_um": float(xc_t[0]) * UM,
                    "target_xc_azimuthal_um": float(xc_t[1]) * UM})
        rows.append(row)
    return rows


def width_vs_waist_sweep(config, waists, ellipticity=None, widen_waists=(), n_frames=None,
                         n_points=None, window=33, jobs=1, n_boot=200):
    """Predicted and measured widths versus pump waist at the configured power.

    ``waists`` set the horizontal waist; the vertical waist follows with the
    configured ellipticity (or ``ellipticity``).  Radial widths belong to the
    horizontal waist, azimuthal widths to the vertical one.  Waists listed in
    ``widen_waists`` get an extra row synthesized from the widen_factor = 2
    prediction.
    """
    waists = [float(w) for w in waists]
    if any(w <= 0 for w in waists):
        raise ValueError("waists must be positive")
    ell = config.pump.ellipticity if ellipticity is None else ellipticity
    rows = []
    for w in waists:
        factors = [1.0] + ([2.0] if any(np.isclose(w, v) for v in widen_waists) else [])
        cfg = config.replace(pump__waist_horizontal_w=w, pump__waist_vertical_w=w * ell)
        for widen in factors:
            pred = predict_widths(cfg, widen_factor=widen)
            ac_t, xc_t, mean = gain_to_targets(cfg.pump.power_P, cfg.gain, pred,
                                               cfg.superpixel_size)
            ac, xc = measure_intensity_widths(cfg, ac_t, xc_t, mean, n_frames, n_points,
                                              window, jobs, n_boot)
            row = {"waist_horizontal_m": w, "waist_vertical_m": w * ell, "widen_factor": widen,
                   "pred_radial_um": float(pred.radial_fwhm_Theta) * UM,
                   "pred_azimuthal_um": float(pred.azimuthal_fwhm_Psi) * UM}
            row.update(_cols("ac", ac, cfg))
            row.update(_cols("xc", xc, cfg))
            rows.append(row)
    return rows


def power_law_exponent(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
