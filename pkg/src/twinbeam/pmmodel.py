"""Plane-wave phase-matching model of the twin-beam cross-correlation width.

The joint amplitude of a signal/idler plane-wave pair is the product of the
pump's Gaussian transverse spectrum, evaluated at the pair's total transverse
wavevector, and the longitudinal phase-matching factor ``sinc(dk_z L / 2)``.

Transverse wavevectors are ``(radial, azimuthal)`` pairs in rad/m; the
degenerate phase-matched pair sits at ``q_s = (q0, 0)``, ``q_i = (-q0, 0)`` with
``q0 = (omega0 / c) sin(cone half-angle)``.  A constant offset is added to
``dk_z`` so that this pair is matched exactly whatever the configured indices
are (the observed cone angle is trusted over the index model).

Camera positions follow ``r = camera_distance * q / k_vac``.  Width predictions
integrate ``|Phi|^2`` over the signal/idler frequency detuning admitted by the
bandpass filter, with the pump treated as monochromatic.  Near the cone the
radial idler displacement is locked to ``dk_z``, so the radial width is set by
the crystal length alone, while the azimuthal width follows the pump spectrum.
"""

from dataclasses import dataclass

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.integrate import trapezoid

from .profiles import FWHM_PER_SIGMA, FWHMRangeError, fwhm

__all__ = [
    "DomainError",
    "JointAmplitudeGrid",
    "PredictedWidths",
    "pump_spatial_spectrum",
    "phase_mismatch_z",
    "joint_amplitude",
    "joint_amplitude_cut",
    "predict_widths",
    "sinc",
]

SINC2_HALF = 1.3915573782515096  # sinc(x)^2 = 1/2


class DomainError(ValueError):
    """Evanescent (|q| >= k) input."""


@dataclass(frozen=True)
class PredictedWidths:
    radial_fwhm_Theta: float
    azimuthal_fwhm_Psi: float


@dataclass(frozen=True)
class JointAmplitudeGrid:
    q_signal: np.ndarray
    q_idler: np.ndarray
    values: np.ndarray


def sinc(x):
    """``sin(x) / x`` with the removable singularity expanded as a series."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x * x / 6.0, np.sin(safe) / safe)


def _waists(pump, geometry=None):
    if geometry is not None and geometry.radial_axis == "vertical":
        return pump.waist_vertical_w, pump.waist_horizontal_w
    return pump.waist_horizontal_w, pump.waist_vertical_w


def pump_spatial_spectrum(q, pump, widen_factor=1.0, geometry=None):
    """Gaussian pump amplitude at transverse wavevector ``q = (q_r, q_a)``."""
    if widen_factor < 1:
        raise ValueError("widen_factor must be >= 1")
    q = np.asarray(q, dtype=float)
    w_r, w_a = _waists(pump, geometry)
    arg = (w_r * q[..., 0]) ** 2 + (w_a * q[..., 1]) ** 2
    return np.exp(-arg / (4.0 * widen_factor**2))


def _constants(crystal, geometry, pump):
    n_p, n_d = crystal.effective_indices(pump.wavelength, geometry.center_wavelength_down)
    omega0 = 2.0 * np.pi * C_LIGHT / geometry.center_wavelength_down
    k_p = 2.0 * np.pi * n_p / pump.wavelength
    k_d = n_d * omega0 / C_LIGHT
    q0 = omega0 / C_LIGHT * np.sin(np.radians(geometry.cone_half_angle))
    offset = k_p - 2.0 * np.sqrt(k_d**2 - q0**2)
    return dict(n_d=n_d, omega0=omega0, k_p=k_p, k_d=k_d, q0=q0, offset=offset)


def _kz(k, q2):
    arg = k * k - q2
    if np.any(arg <= 0):
        raise DomainError("evanescent wave: |q| >= k")
    return np.sqrt(arg)


def phase_mismatch_z(q_s, q_i, crystal, geometry, pump, detuning=0.0):
    """Longitudinal mismatch ``k_pz - k_sz - k_iz`` (rad/m), calibrated to zero
    at the degenerate cone pair.  ``detuning`` is the signal angular-frequency
    offset; the idler takes the opposite offset."""
    q_s = np.asarray(q_s, dtype=float)
    q_i = np.asarray(q_i, dtype=float)
    k = _constants(crystal, geometry, pump)
    k_s = k["n_d"] * (k["omega0"] + detuning) / C_LIGHT
    k_i = k["n_d"] * (k["omega0"] - detuning) / C_LIGHT
    q_p = q_s + q_i
    kpz = _kz(k["k_p"], np.sum(q_p * q_p, axis=-1))
    ksz = _kz(k_s, np.sum(q_s * q_s, axis=-1))
    kiz = _kz(k_i, np.sum(q_i * q_i, axis=-1))
    return kpz - ksz - kiz - k["offset"]


def joint_amplitude(q_s, q_i, config, detuning=0.0, widen_factor=1.0):
    """Phi = pump spectrum(q_s + q_i) * sinc(dk_z L / 2)."""
    q_s = np.asarray(q_s, dtype=float)
    q_i = np.asarray(q_i, dtype=float)
    dk = phase_mismatch_z(q_s, q_i, config.crystal, config.geometry, config.pump, detuning)
    pump = pump_spatial_spectrum(q_s + q_i, config.pump, widen_factor, config.geometry)
    return pump * sinc(0.5 * dk * config.crystal.length_L)


def _band(geometry, omega0):
    lam, bw = geometry.center_wavelength_down, geometry.filter_bandwidth
    w_lo = 2.0 * np.pi * C_LIGHT / (lam + bw / 2)
    w_hi = 2.0 * np.pi * C_LIGHT / (lam - bw / 2)
    # Both photons of the pair must pass the filter.
    lo = max(w_lo - omega0, omega0 - w_hi)
    hi = min(w_hi - omega0, omega0 - w_lo)
    return lo, hi


def _profile(config, axis, offsets, widen_factor, n_detuning):
    """Detuning-integrated |Phi|^2 for idler camera offsets along one axis."""
    g = config.geometry
    k = _constants(config.crystal, g, config.pump)
    omega0 = k["omega0"]
    L = g.camera_distance
    s = np.sin(np.radians(g.cone_half_angle))
    w_r, _ = _waists(config.pump, g)
    lo, hi = _band(g, omega0)

    offsets = np.asarray(offsets, dtype=float)
    x_r = offsets if axis == "radial" else np.zeros_like(offsets)
    x_a = offsets if axis == "azimuthal" else np.zeros_like(offsets)

    # Radial pump wavevector is linear in detuning: A + B * Omega.
    a_coef = omega0 * x_r / (C_LIGHT * L)
    b_coef = (2.0 * s - x_r / L) / C_LIGHT
    with np.errstate(divide="ignore", invalid="ignore"):
        center = np.where(np.abs(b_coef) > 0, -a_coef / b_coef, 0.0)
        half = np.where(np.abs(b_coef) > 0, 8.0 * widen_factor / (w_r * np.abs(b_coef)), np.inf)
    start = np.clip(center - half, lo, hi)
    stop = np.clip(center + half, lo, hi)

    u = np.linspace(0.0, 1.0, n_detuning)
    omega = start[:, None] + (stop - start)[:, None] * u[None, :]
    k_s = (omega0 + omega) / C_LIGHT
    k_i = (omega0 - omega) / C_LIGHT
    q_s = np.stack([k_s * s, np.zeros_like(k_s)], axis=-1)
    q_i = np.stack([k_i * (-s + x_r[:, None] / L), k_i * x_a[:, None] / L], axis=-1)
    amp = joint_amplitude(q_s, q_i, config, detuning=omega, widen_factor=widen_factor)
    return trapezoid(amp * amp, omega, axis=1)


def _span_estimates(config, widen_factor):
    g = config.geometry
    k = _constants(config.crystal, g, config.pump)
    k0 = k["omega0"] / C_LIGHT
    w_r, w_a = _waists(config.pump, g)
    pump_r = g.camera_distance * FWHM_PER_SIGMA * widen_factor / (w_r * k0)
    pump_a = g.camera_distance * FWHM_PER_SIGMA * widen_factor / (w_a * k0)
    if k["q0"] > 0:
        kz = np.sqrt(k["k_d"] ** 2 - k["q0"] ** 2)
        sinc_r = (g.camera_distance * kz / (k0 * k["q0"])
                  * 4.0 * SINC2_HALF / config.crystal.length_L)
    else:
        sinc_r = pump_r
    return sinc_r, pump_a


def predict_widths(config, widen_factor=1.0, n_points=801, n_detuning=161, span=None):
    """Predicted XC FWHM at the camera, ``(radial, azimuthal)`` in meters.

    The signal is held at the degenerate cone point and the idler swept along
    radial and azimuthal cuts through its conjugate.  ``span`` overrides the
    half-range of each cut as ``(radial, azimuthal)`` meters; by default it is
    three times an analytic width estimate.  Raises
    :class:`~twinbeam.profiles.FWHMRangeError` if a cut does not bracket the
    half maximum.
    """
    est_r, est_a = _span_estimates(config, widen_factor)
    if span is None:
        span = (3.0 * est_r, 3.0 * est_a)
    widths = []
    for axis, half in zip(("radial", "azimuthal"), span):
        x = np.linspace(-half, half, n_points)
        prof = _profile(config, axis, x, widen_factor, n_detuning)
        try:
            widths.append(fwhm(prof, spacing=x[1] - x[0]))
        except FWHMRangeError as exc:
            raise FWHMRangeError(f"{axis} cut: {exc}; widen the sweep range") from exc
    return PredictedWidths(*(float(w) for w in widths))


def joint_amplitude_cut(config, axis, offsets, widen_factor=1.0):
    """Zero-detuning joint amplitude along a camera cut, normalized to max 1."""
    g = config.geometry
    k = _constants(config.crystal, g, config.pump)
    k0 = k["omega0"] / C_LIGHT
    L = g.camera_distance
    s = np.sin(np.radians(g.cone_half_angle))
    offsets = np.asarray(offsets, dtype=float)
    q_s = np.array([k0 * s, 0.0])
    if axis == "radial":
        q_i = np.stack([k0 * (-s + offsets / L), np.zeros_like(offsets)], axis=-1)
    else:
        q_i = np.stack([np.full_like(offsets, -k0 * s), k0 * offsets / L], axis=-1)
    values = joint_amplitude(q_s, q_i, config, widen_factor=widen_factor).astype(complex)
    peak = np.max(np.abs(values))
    if peak > 0:
        values = values / peak
    return JointAmplitudeGrid(q_signal=q_s, q_idler=q_i, values=values)
