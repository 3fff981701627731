"""Experiment definition: physical parameters, acquisition settings, validation
and the key/value config file format.

All lengths are in meters, angles in degrees, powers in watts.  Detector-plane
coordinates are ``(row, col)``; with the default ``radial_axis="horizontal"``
columns run along the radial direction (Theta) of the down-conversion cone
section and rows along the azimuthal direction (Psi).

The config file is a sectioned ``key = value`` text file (``configparser``
dialect).  Every key must correspond to a dataclass field; unknown keys are
rejected so that a typo never silently falls back to a default.
"""

import configparser
import dataclasses
import io
import math
import os
import typing
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

__all__ = [
    "CrystalParams",
    "PumpParams",
    "GeometryParams",
    "DetectorParams",
    "SourceParams",
    "GainCurve",
    "ExperimentConfig",
    "ConjugationMap",
    "ConfigError",
    "RegionError",
    "bbo_indices",
    "reference_config",
    "validate",
    "conjugate_of",
    "serialize",
    "deserialize",
    "load_config",
    "save_config",
]

REGIMES = ("counting", "intensity")
SEED_ENV = "TWINBEAM_SEED"

# Eimerl et al. (1987) BBO Sellmeier coefficients, wavelength in micrometers:
# n^2 = A + B / (lambda^2 - C) - D lambda^2, ordinary then extraordinary.
BBO_SELLMEIER = (2.7359, 0.01878, 0.01822, 0.01354, 2.3753, 0.01224, 0.01667, 0.01516)


class ConfigError(ValueError):
    """Malformed config file or invalid parameter value."""


class RegionError(ValueError):
    """Point lies outside the region an operation requires."""


def _sellmeier(coeffs, lam_um):
    a, b, c, d = coeffs
    return math.sqrt(a + b / (lam_um**2 - c) - d * lam_um**2)


def bbo_indices(pump_wavelength, down_wavelength, cut_angle_deg, coeffs=BBO_SELLMEIER):
    """Type-I (e -> oo) effective indices from a two-polarization Sellmeier set.

    Returns ``(n_pump, n_down)``: the extraordinary index of the pump at the
    cut angle and the ordinary index of the down-converted light.
    """
    lp = pump_wavelength * 1e6
    ld = down_wavelength * 1e6
    no_p = _sellmeier(coeffs[:4], lp)
    ne_p = _sellmeier(coeffs[4:], lp)
    th = math.radians(cut_angle_deg)
    n_pump = 1.0 / math.sqrt(math.cos(th) ** 2 / no_p**2 + math.sin(th) ** 2 / ne_p**2)
    n_down = _sellmeier(coeffs[:4], ld)
    return n_pump, n_down


@dataclass(frozen=True)
class CrystalParams:
    length_L: float = 8e-3
    cut_angle_theta: float = 37.0
    # Defaults from BBO_SELLMEIER at 349 nm (e, 37 deg) and 710 nm (o).
    index_pump: float = 1.6569713579221654
    index_down: float = 1.6636484018246025
    sellmeier_coeffs: Optional[Tuple[float, ...]] = None

    def effective_indices(self, pump_wavelength, down_wavelength):
        """``(n_pump, n_down)``, recomputed from Sellmeier data when supplied."""
        if self.sellmeier_coeffs is None:
            return self.index_pump, self.index_down
        return bbo_indices(pump_wavelength, down_wavelength, self.cut_angle_theta,
                           self.sellmeier_coeffs)


@dataclass(frozen=True)
class PumpParams:
    wavelength: float = 349e-9
    power_P: float = 45e-3
    waist_horizontal_w: float = 0.2e-3
    waist_vertical_w: float = 0.14e-3
    pulse_duration: float = 5e-12

    @property
    def ellipticity(self):
        return self.waist_vertical_w / self.waist_horizontal_w


@dataclass(frozen=True)
class ConjugationMap:
    """Affine map ``x_signal = matrix @ x_idler + offset`` in unbinned pixel
    units, continuous coordinates (pixel ``i`` spans ``[i, i + 1)``)."""

    matrix: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, -1.0)
    offset: Tuple[float, float] = (0.0, 1024.0)

    @property
    def linear(self):
        return np.array(self.matrix, dtype=float).reshape(2, 2)

    def superpixel(self, binning):
        """Linear part and offset acting on superpixel *indices* (centers)."""
        a = self.linear
        t = np.asarray(self.offset, dtype=float) / binning + a @ np.full(2, 0.5) - 0.5
        return a, t


@dataclass(frozen=True)
class GeometryParams:
    cone_half_angle: float = 11.9
    camera_distance: float = 0.385
    center_wavelength_down: float = 710e-9
    filter_bandwidth: float = 40e-9
    conjugation: ConjugationMap = field(default_factory=ConjugationMap)
    # Half-open pixel rectangles (row0, row1, col0, col1).
    signal_region: Tuple[int, int, int, int] = (0, 1024, 0, 512)
    idler_region: Tuple[int, int, int, int] = (0, 1024, 512, 1024)
    # Camera axis carrying the radial angle Theta; Psi runs along the other.
    radial_axis: str = "horizontal"
    # Crystal frame: theta measured from z in the incidence plane, psi the
    # rotation of that plane about z from the yz plane.
    crystal_polar_from: str = "z"
    crystal_azimuth_from: str = "yz"


@dataclass(frozen=True)
class DetectorParams:
    pixel_pitch: float = 13e-6
    binning_counting: int = 8
    binning_intensity: int = 4
    sensor_size: Tuple[int, int] = (1024, 1024)
    quantum_efficiency_signal: float = 0.085
    quantum_efficiency_idler: float = 0.072
    readout_noise_sigma: float = 10.0
    threshold: float = 50.0
    gate_ns: float = 5.0
    dark_event_rate: float = 1e-5
    saturation: float = 65535.0

    def binning(self, regime):
        return self.binning_counting if regime == "counting" else self.binning_intensity

    def grid_shape(self, regime):
        b = self.binning(regime)
        return self.sensor_size[0] // b, self.sensor_size[1] // b


@dataclass(frozen=True)
class SourceParams:
    """Pair source and speckle-field settings not fixed by the measured data."""

    # 10.5 / 0.085 and 8.9 / 0.072 both give ~123.5 generated pairs per frame.
    mean_pairs_per_frame: float = 123.5
    # XC (pair-position jitter) FWHM, (radial, azimuthal).
    pair_jitter_fwhm: Tuple[float, float] = (490e-6, 710e-6)
    envelope_taper: float = 0.2
    cross_strength_mu: float = 0.9


@dataclass(frozen=True)
class GainCurve:
    p_threshold: float = 20e-3
    p_sat: float = 23e-3
    # Saturated AC FWHM (radial, azimuthal); None ties it to the XC width.
    ac_width_sat: Optional[Tuple[float, float]] = None
    ac_to_xc_ratio: float = 0.75
    # Mean pre-efficiency intensity per superpixel at p_ref, scaling as P^2.
    intensity_ref: float = 2e4
    p_ref: float = 50e-3


@dataclass(frozen=True)
class ExperimentConfig:
    crystal: CrystalParams = field(default_factory=CrystalParams)
    pump: PumpParams = field(default_factory=PumpParams)
    geometry: GeometryParams = field(default_factory=GeometryParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    source: SourceParams = field(default_factory=SourceParams)
    gain: GainCurve = field(default_factory=GainCurve)
    n_frames: int = 1000
    n_reference_points: int = 100
    rng_seed: int = 20140415
    regime: str = "intensity"

    @property
    def binning(self):
        return self.detector.binning(self.regime)

    @property
    def grid_shape(self):
        return self.detector.grid_shape(self.regime)

    @property
    def superpixel_size(self):
        return self.detector.pixel_pitch * self.binning

    def region(self, name):
        """Superpixel rectangle ``(row0, row1, col0, col1)`` of a beam region."""
        rect = getattr(self.geometry, f"{name}_region")
        return tuple(v // self.binning for v in rect)

    def replace(self, **changes):
        """Nested replace: ``cfg.replace(pump__power_P=0.03, n_frames=10)``."""
        top, nested = {}, {}
        for key, value in changes.items():
            if "__" in key:
                section, name = key.split("__", 1)
                nested.setdefault(section, {})[name] = value
            else:
                top[key] = value
        for section, values in nested.items():
            top[section] = dataclasses.replace(getattr(self, section), **values)
        return dataclasses.replace(self, **top)


def reference_config(regime="intensity"):
    """Parameter set of the twin-beam experiment for either acquisition mode."""
    if regime == "counting":
        return ExperimentConfig(regime="counting", n_frames=100_000,
                                pump=PumpParams(power_P=20e-6))
    if regime == "intensity":
        return ExperimentConfig()
    raise ConfigError(f"unknown regime {regime!r}")


def _rect_ok(rect, shape):
    r0, r1, c0, c1 = rect
    return 0 <= r0 < r1 <= shape[0] and 0 <= c0 < c1 <= shape[1]


def _rects_overlap(a, b):
    return a[0] < b[1] and b[0] < a[1] and a[2] < b[3] and b[2] < a[3]


def validate(config):
    """List of violated invariants as ``"field: message"``; empty iff usable."""
    out = []
    c, p, g, d = config.crystal, config.pump, config.geometry, config.detector

    if not c.length_L > 0:
        out.append("crystal.length_L: must be positive")
    if not 0 < c.cut_angle_theta < 90:
        out.append("crystal.cut_angle_theta: must lie in (0, 90) degrees")
    for name in ("index_pump", "index_down"):
        if not getattr(c, name) > 1:
            out.append(f"crystal.{name}: must exceed 1")
    if c.sellmeier_coeffs is not None and len(c.sellmeier_coeffs) != 8:
        out.append("crystal.sellmeier_coeffs: expected 8 coefficients")

    for name in ("wavelength", "power_P", "waist_horizontal_w", "waist_vertical_w",
                 "pulse_duration"):
        if not getattr(p, name) > 0:
            out.append(f"pump.{name}: must be positive")
    if p.waist_horizontal_w > 0 and not 0 < p.ellipticity <= 1.5:
        out.append("pump.waist_vertical_w: ellipticity must lie in (0, 1.5]")

    if not g.camera_distance > 0:
        out.append("geometry.camera_distance: must be positive")
    if not 0 <= g.cone_half_angle < 90:
        out.append("geometry.cone_half_angle: must lie in [0, 90) degrees")
    if not g.center_wavelength_down > 0 or not 0 < g.filter_bandwidth < 2 * g.center_wavelength_down:
        out.append("geometry.filter_bandwidth: must be positive and below twice the center wavelength")
    if g.radial_axis not in ("horizontal", "vertical"):
        out.append("geometry.radial_axis: must be 'horizontal' or 'vertical'")
    det = float(np.linalg.det(g.conjugation.linear))
    if not 0.9 <= abs(det) <= 1.1:
        out.append(f"geometry.conjugation: |det| = {abs(det):.3g} not within 10% of 1")

    if not 0 <= d.quantum_efficiency_signal <= 1:
        out.append("detector.quantum_efficiency_signal: must lie in [0, 1]")
    if not 0 <= d.quantum_efficiency_idler <= 1:
        out.append("detector.quantum_efficiency_idler: must lie in [0, 1]")
    if not d.threshold > 0:
        out.append("detector.threshold: must be positive")
    if d.readout_noise_sigma < 0 or d.dark_event_rate < 0 or not d.dark_event_rate <= 1:
        out.append("detector.readout_noise_sigma/dark_event_rate: out of range")
    if not d.pixel_pitch > 0 or not d.saturation > 0:
        out.append("detector.pixel_pitch/saturation: must be positive")
    for b in (d.binning_counting, d.binning_intensity):
        if b < 1 or d.sensor_size[0] % b or d.sensor_size[1] % b:
            out.append(f"detector.binning: {b} does not divide sensor_size {d.sensor_size}")

    if config.n_frames < 2:
        out.append("n_frames: must be at least 2")
    if config.n_reference_points < 1:
        out.append("n_reference_points: must be at least 1")
    if config.regime not in REGIMES:
        out.append(f"regime: must be one of {REGIMES}")
    if not 0 <= config.rng_seed < 2**64:
        out.append("rng_seed: must be a 64-bit unsigned integer")

    regions_ok = True
    for name in ("signal_region", "idler_region"):
        rect = getattr(g, name)
        if not _rect_ok(rect, d.sensor_size):
            out.append(f"geometry.{name}: must be a non-empty rectangle inside the sensor")
            regions_ok = False
        elif any(v % b for v in rect for b in (d.binning_counting, d.binning_intensity)):
            out.append(f"geometry.{name}: edges must fall on superpixel boundaries")
            regions_ok = False
    if regions_ok and _rects_overlap(g.signal_region, g.idler_region):
        out.append("geometry.signal_region/idler_region: regions overlap")
        regions_ok = False
    if regions_ok and abs(det) > 0:
        a = g.conjugation.linear
        t = np.asarray(g.conjugation.offset, dtype=float)
        r0, r1, c0, c1 = g.idler_region
        corners = np.array([[r0, c0], [r0, c1], [r1, c0], [r1, c1]], dtype=float)
        mapped = corners @ a.T + t
        s = g.signal_region
        lo, hi = mapped.min(axis=0), mapped.max(axis=0)
        if not (np.allclose(lo, [s[0], s[2]]) and np.allclose(hi, [s[1], s[3]])):
            out.append("geometry.conjugation: does not map the idler region onto the signal region")

    s = config.source
    if s.mean_pairs_per_frame < 0:
        out.append("source.mean_pairs_per_frame: must be non-negative")
    if not 0 <= s.cross_strength_mu <= 1:
        out.append("source.cross_strength_mu: must lie in [0, 1]")
    if not 0 < s.envelope_taper <= 0.5:
        out.append("source.envelope_taper: must lie in (0, 0.5]")
    if min(s.pair_jitter_fwhm) < 0:
        out.append("source.pair_jitter_fwhm: must be non-negative")

    gc = config.gain
    if not 0 < gc.p_threshold < gc.p_sat:
        out.append("gain.p_threshold: must satisfy 0 < p_threshold < p_sat")
    if not 0 < gc.ac_to_xc_ratio <= 1:
        out.append("gain.ac_to_xc_ratio: must lie in (0, 1]")
    if gc.ac_width_sat is not None and min(gc.ac_width_sat) <= 0:
        out.append("gain.ac_width_sat: must be positive")
    return out


def conjugate_of(point, config, inverse=False):
    """Phase-matching conjugate of a superpixel: idler -> signal.

    ``point`` is a ``(row, col)`` superpixel index (or an ``(n, 2)`` array of
    them) on the grid of ``config.regime``.  With ``inverse=True`` the map runs
    signal -> idler.  Raises :class:`RegionError` when a point lies outside the
    source region.
    """
    a, t = config.geometry.conjugation.superpixel(config.binning)
    pts = np.asarray(point, dtype=float)
    src = config.region("signal" if inverse else "idler")
    flat = pts.reshape(-1, 2)
    inside = ((flat[:, 0] >= src[0]) & (flat[:, 0] <= src[1] - 1)
              & (flat[:, 1] >= src[2]) & (flat[:, 1] <= src[3] - 1))
    if not inside.all():
        which = "signal" if inverse else "idler"
        raise RegionError(f"point outside the {which} region {src}")
    if inverse:
        out = (flat - t) @ np.linalg.inv(a).T
    else:
        out = flat @ a.T + t
    return out.reshape(pts.shape)


# --- file format -----------------------------------------------------------

_SECTIONS = ("crystal", "pump", "geometry", "detector", "source", "gain")

_COMMENTS = {
    "crystal": [
        "Effective scalar indices (no walk-off). Not stated in the source data;",
        "computed from BBO Sellmeier relations (Eimerl 1987): extraordinary pump",
        "at 349 nm and 37 deg, ordinary down-conversion at 710 nm.",
    ],
    "pump": ["Waists are 1/e^2 intensity radii; vertical ~70% of horizontal.",
             "pulse_duration is a non-measured placeholder."],
    "geometry": ["Conjugation map in unbinned pixels: x_signal = M x_idler + offset."],
    "detector": ["readout_noise_sigma, threshold (5 sigma), dark_event_rate and",
                 "saturation (16-bit ADC) are modelling choices, not measured values."],
    "source": ["mu and envelope shape are modelling choices."],
    "gain": ["Two-parameter saturating AC-width curve and P^2 intensity scaling;",
             "intensity_ref keeps the 16-bit detector below saturation."],
}


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def _parse_value(text, tp, key):
    text = text.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    try:
        if origin is typing.Union:  # Optional[...]
            if text.lower() == "none":
                return None
            inner = [a for a in args if a is not type(None)][0]
            return _parse_value(text, inner, key)
        if origin is tuple:
            parts = [s for s in text.split(",") if s.strip()]
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(_parse_value(s, args[0], key) for s in parts)
            if len(parts) != len(args):
                raise ConfigError(f"{key}: expected {len(args)} values, got {len(parts)}")
            return tuple(_parse_value(s, a, key) for s, a in zip(parts, args))
        if tp is int:
            return int(text, 0)
        if tp is float:
            return float(text)
        if tp is str:
            return text
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc
    raise ConfigError(f"{key}: unsupported type {tp}")


def _section_items(obj):
    items = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, ConjugationMap):
            items.append((f"{f.name}_matrix", value.matrix))
            items.append((f"{f.name}_offset", value.offset))
        else:
            items.append((f.name, value))
    return items


def serialize(config):
    """Render ``config`` as config-file text (round-trips through deserialize)."""
    buf = io.StringIO()
    buf.write("# twinbeam experiment configuration\n")
    buf.write("[experiment]\n")
    for name in ("regime", "n_frames", "n_reference_points", "rng_seed"):
        buf.write(f"{name} = {_format_value(getattr(config, name))}\n")
    for section in _SECTIONS:
        buf.write(f"\n[{section}]\n")
        for line in _COMMENTS.get(section, []):
            buf.write(f"# {line}\n")
        for key, value in _section_items(getattr(config, section)):
            buf.write(f"{key} = {_format_value(value)}\n")
    return buf.getvalue()


def _build(cls, values, section):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    remaining = dict(values)
    for f in dataclasses.fields(cls):
        if hints[f.name] is ConjugationMap:
            mkey, okey = f"{f.name}_matrix", f"{f.name}_offset"
            cm = {}
            if mkey in remaining:
                cm["matrix"] = _parse_value(remaining.pop(mkey), Tuple[float, float, float, float], mkey)
            if okey in remaining:
                cm["offset"] = _parse_value(remaining.pop(okey), Tuple[float, float], okey)
            if cm:
                kwargs[f.name] = ConjugationMap(**cm)
        elif f.name in remaining:
            kwargs[f.name] = _parse_value(remaining.pop(f.name), hints[f.name], f"{section}.{f.name}")
    if remaining:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(remaining))}")
    return cls(**kwargs)


def deserialize(text):
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(parser.sections()) - set(_SECTIONS) - {"experiment"}
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for section, cls in zip(_SECTIONS, (CrystalParams, PumpParams, GeometryParams,
                                         DetectorParams, SourceParams, GainCurve)):
        values = dict(parser[section]) if parser.has_section(section) else {}
        kwargs[section] = _build(cls, values, section)
    if parser.has_section("experiment"):
        top = dict(parser["experiment"])
        hints = typing.get_type_hints(ExperimentConfig)
        for name in ("regime", "n_frames", "n_reference_points", "rng_seed"):
            if name in top:
                kwargs[name] = _parse_value(top.pop(name), hints[name], f"experiment.{name}")
        if top:
            raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(sorted(top))}")
    return ExperimentConfig(**kwargs)


def load_config(path, environ=None):
    """Read a config file, apply the ``TWINBEAM_SEED`` override and validate."""
    with open(path, encoding="utf-8") as fh:
        config = deserialize(fh.read())
    environ = os.environ if environ is None else environ
    if environ.get(SEED_ENV):
        try:
            seed = int(environ[SEED_ENV], 0)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}: not an integer") from exc
        config = dataclasses.replace(config, rng_seed=seed)
    problems = validate(config)
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    return config


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(config))
