"""Synthetic twin-beam frames with known correlation structure.

Photon-counting regime
    Pairs are Poisson distributed per frame.  Signal photons land uniformly
    over the signal region under a raised-cosine envelope; each idler lands on
    the conjugate point plus Gaussian jitter, so the XC FWHM equals the jitter
    FWHM.

Speckle regime
    Complex white fields ``W`` and ``V`` live on a grid oversampled 2x relative
    to superpixels.  The signal field is ``W * K`` with Gaussian amplitude
    kernel ``K`` of standard deviation ``s``; its intensity autocovariance is
    then Gaussian with the same standard deviation ``s``.  The idler pattern,
    in signal-aligned coordinates, is the intensity of
    ``(mu W + sqrt(1 - mu^2) V) * K`` read at ``x - u(x)``, where ``u`` is a
    smooth Gaussian random displacement field whose marginal is the jitter
    kernel.  Averaged over frames the XC function is the AC function
    convolved with the jitter distribution, so Gaussian widths add in
    quadrature::

        sigma_xc^2 = sigma_ac^2 + sigma_jitter^2

    while both beams keep the AC width.  Sub-cell intensities are summed 2x2
    into superpixels and placed into the idler region through the
    conjugation map.
"""

import functools
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .config import GainCurve, conjugate_of
from .detector import Frame, FrameStack, detect_counting, detect_intensity, extract_events
from .parallel import iter_ranges, map_ranges
from .profiles import FWHM_PER_SIGMA
from .rng import stream

__all__ = [
    "GainCurve",
    "PairEvent",
    "PairBatch",
    "SpeckleModel",
    "sample_pair_events",
    "make_speckle_model",
    "render_speckle_frame",
    "gain_to_targets",
    "counting_frames",
    "counting_events",
    "iter_counting_chunks",
    "iter_intensity_chunks",
    "intensity_stack",
]


# Displacement correlation length in units of the jitter sigma.  Long enough
# that the local stretch of the idler pattern (gradient ~ 1/factor) barely
# changes its AC width, short enough that reference points far apart see
# independent displacements.
JITTER_CORRELATION_FACTOR = 8.0


@dataclass(frozen=True)
class PairEvent:
    signal_pos: tuple
    idler_pos: tuple
    frame_index: int


@dataclass
class PairBatch:
    """All pairs of one frame, positions as ``(n, 2)`` meter arrays ``(row, col)``."""

    signal_pos: np.ndarray
    idler_pos: np.ndarray
    frame_index: int = 0

    def __len__(self):
        return len(self.signal_pos)

    def events(self):
        for s, i in zip(self.signal_pos, self.idler_pos):
            yield PairEvent(tuple(s), tuple(i), self.frame_index)


@dataclass(frozen=True)
class SpeckleModel:
    """Sigmas are ``(radial, azimuthal)`` meters; ``xc_jitter_sigma`` is the
    standard deviation of the idler displacement relative to the signal and
    ``jitter_correlation_length`` (meters) its transverse correlation length,
    by default ``JITTER_CORRELATION_FACTOR`` times the larger jitter sigma."""

    ac_kernel_sigma: tuple
    xc_jitter_sigma: tuple
    cross_strength_mu: float
    mean_intensity: float
    jitter_correlation_length: float = None


def _rowcol(pair, geometry):
    """``(radial, azimuthal)`` -> ``(row, col)`` ordering."""
    r, a = pair
    return (r, a) if geometry.radial_axis == "vertical" else (a, r)


def _taper(t, width):
    w = np.ones_like(t)
    lo = t < width
    hi = t > 1.0 - width
    w[lo] = 0.5 * (1.0 - np.cos(np.pi * t[lo] / width))
    w[hi] = 0.5 * (1.0 - np.cos(np.pi * (1.0 - t[hi]) / width))
    return w


def _signal_to_idler_m(pos, config):
    cmap = config.geometry.conjugation
    pitch = config.detector.pixel_pitch
    return (pos - np.asarray(cmap.offset) * pitch) @ np.linalg.inv(cmap.linear).T


def sample_pair_events(config, mean_pairs_per_frame, xc_sigma, rng, frame_index=0):
    """One frame of photon pairs.

    ``xc_sigma`` is the per-axis ``(radial, azimuthal)`` jitter standard
    deviation in meters.
    """
    n = rng.poisson(mean_pairs_per_frame)
    pitch = config.detector.pixel_pitch
    r0, r1, c0, c1 = config.geometry.signal_region
    lo = np.array([r0, c0], dtype=float) * pitch
    size = np.array([r1 - r0, c1 - c0], dtype=float) * pitch
    taper = config.source.envelope_taper

    accepted = np.empty((0, 2))
    while len(accepted) < n:
        m = max(2 * (n - len(accepted)), 16)
        t = rng.random((m, 2))
        weight = _taper(t[:, 0], taper) * _taper(t[:, 1], taper)
        keep = rng.random(m) < weight
        accepted = np.concatenate([accepted, lo + t[keep] * size])
    signal = accepted[:n]

    sigma = np.array(_rowcol(xc_sigma, config.geometry), dtype=float)
    idler = _signal_to_idler_m(signal, config) + rng.normal(size=(n, 2)) * sigma
    return PairBatch(signal, idler, frame_index)


def make_speckle_model(target_ac_fwhm, target_xc_fwhm, mu, mean_intensity):
    """Kernel widths reproducing the requested AC and XC intensity FWHMs."""
    ac = np.asarray(target_ac_fwhm, dtype=float)
    xc = np.asarray(target_xc_fwhm, dtype=float)
    if np.any(xc < ac):
        raise ValueError("target XC width must not be smaller than the AC width")
    if not 0 <= mu <= 1:
        raise ValueError("mu must lie in [0, 1]")
    sigma_ac = ac / FWHM_PER_SIGMA
    sigma_j = np.sqrt(np.maximum((xc / FWHM_PER_SIGMA) ** 2 - sigma_ac**2, 0.0))
    return SpeckleModel(tuple(sigma_ac), tuple(sigma_j), float(mu), float(mean_intensity))


@functools.lru_cache(maxsize=8)
def _idler_lookup(config):
    """For every idler superpixel, its signal-region-relative aligned index."""
    r0, r1, c0, c1 = config.region("idler")
    rows, cols = np.mgrid[r0:r1, c0:c1]
    pts = np.stack([rows.ravel(), cols.ravel()], axis=1)
    conj = conjugate_of(pts, config)
    idx = np.rint(conj).astype(np.int64)
    if np.max(np.abs(conj - idx)) > 1e-9:
        raise ValueError("speckle rendering needs a conjugation map on the superpixel lattice")
    s = config.region("signal")
    idx -= np.array([s[0], s[2]])
    return (rows.ravel(), cols.ravel(), idx[:, 0], idx[:, 1])


@functools.lru_cache(maxsize=8)
def _spectral_grid(shape, cell):
    kr = 2.0 * np.pi * sfft.fftfreq(shape[0], d=cell)
    kc = 2.0 * np.pi * sfft.fftfreq(shape[1], d=cell)
    return kr[:, None], kc[None, :]


@functools.lru_cache(maxsize=32)
def _gaussian_spectrum(shape, cell, sigma_rc):
    kr, kc = _spectral_grid(shape, cell)
    kern = np.exp(-0.5 * ((sigma_rc[0] * kr) ** 2 + (sigma_rc[1] * kc) ** 2))
    return (kern / np.sqrt(np.mean(kern**2))).astype(np.float32)


def _complex_normal(rng, shape):
    z = np.empty(shape, dtype=np.complex64)
    z.real = rng.standard_normal(shape, dtype=np.float32)
    z.imag = rng.standard_normal(shape, dtype=np.float32)
    z *= np.float32(np.sqrt(0.5))
    return z


def _displacement_field(model, config, rng, shape, cell):
    """Per-cell ``(row, col)`` idler displacement in cells, or ``None``.

    Real and imaginary parts of one filtered complex white field give the two
    independent components; each has Gaussian covariance of length
    ``jitter_correlation_length`` and marginal sigma ``xc_jitter_sigma``."""
    jitter = np.array(_rowcol(model.xc_jitter_sigma, config.geometry), dtype=float)
    if not np.any(jitter > 0):
        return None
    ell = model.jitter_correlation_length
    if ell is None:
        ell = JITTER_CORRELATION_FACTOR * jitter.max()
    kern = _gaussian_spectrum(shape, cell, (ell / np.sqrt(2.0),) * 2)
    z = sfft.ifft2(kern * _complex_normal(rng, shape), norm="ortho")
    scale = np.sqrt(2.0) * jitter / cell
    return z.real * scale[0], z.imag * scale[1]


@functools.lru_cache(maxsize=8)
def _cell_index(shape):
    return np.mgrid[0:shape[0], 0:shape[1]]


def render_speckle_frame(model, config, rng, frame_index=0):
    """Ideal (pre-detector) twin-beam speckle intensities for one frame."""
    s_rect = config.region("signal")
    shape_sp = (s_rect[1] - s_rect[0], s_rect[3] - s_rect[2])
    shape = (2 * shape_sp[0], 2 * shape_sp[1])
    cell = config.superpixel_size / 2.0

    kern = _gaussian_spectrum(shape, cell, tuple(_rowcol(model.ac_kernel_sigma, config.geometry)))
    w = _complex_normal(rng, shape)
    v = _complex_normal(rng, shape)
    mu = model.cross_strength_mu
    latent_i = w
    if mu < 1:
        latent_i = np.float32(mu) * w + np.float32(np.sqrt(1.0 - mu * mu)) * v
    disp = _displacement_field(model, config, rng, shape, cell)

    scale = model.mean_intensity / 4.0
    e_s = sfft.ifft2(kern * w, norm="ortho")
    e_i = sfft.ifft2(kern * latent_i, norm="ortho")
    i_s = (e_s.real**2 + e_s.imag**2).astype(np.float64)
    i_i = (e_i.real**2 + e_i.imag**2).astype(np.float64)
    if disp is not None:
        # Nearest-cell warp: the idler at x shows the latent pattern at x - u(x).
        rr, cc = _cell_index(shape)
        src_r = np.rint(rr - disp[0]).astype(np.int64) % shape[0]
        src_c = np.rint(cc - disp[1]).astype(np.int64) % shape[1]
        i_i = i_i[src_r, src_c]

    grid = np.zeros(config.grid_shape)
    grid[s_rect[0]:s_rect[1], s_rect[2]:s_rect[3]] = _bin2(i_s) * scale
    rows, cols, ar, ac = _idler_lookup(config)
    grid[rows, cols] = (_bin2(i_i) * scale)[ar, ac]
    return Frame(grid, config.binning, "intensity", frame_index,
                 s_rect, config.region("idler"), config.rng_seed)


def _bin2(a):
    return a.reshape(a.shape[0] // 2, 2, a.shape[1] // 2, 2).sum(axis=(1, 3))


def gain_to_targets(power_P, curve, pm_widths, superpixel_size):
    """Synthesis targets at pump power ``power_P``.

    Returns ``(ac_fwhm, xc_fwhm, mean_intensity)`` with widths as
    ``(radial, azimuthal)`` meters.  The XC width is the gain-independent
    phase-matching prediction; the AC width saturates with power and is never
    below one superpixel.
    """
    if not power_P > 0:
        raise ValueError("power must be positive")
    xc = np.array([pm_widths.radial_fwhm_Theta, pm_widths.azimuthal_fwhm_Psi], dtype=float)
    if curve.ac_width_sat is None:
        ac_sat = curve.ac_to_xc_ratio * xc
    else:
        ac_sat = np.asarray(curve.ac_width_sat, dtype=float)
    growth = 1.0 - np.exp(-(power_P - curve.p_threshold) / (curve.p_sat - curve.p_threshold))
    frac = np.clip(growth, superpixel_size / ac_sat, 1.0)
    ac = np.minimum(ac_sat * frac, xc)
    mean_intensity = curve.intensity_ref * (power_P / curve.p_ref) ** 2
    return tuple(ac), tuple(xc), float(mean_intensity)


# --- stacks ------------------------------------------------------------------

def _counting_chunk(config, xc_sigma, want_grids, start, stop):
    grids, events = [], []
    d = config.detector
    for k in range(start, stop):
        pairs = sample_pair_events(config, config.source.mean_pairs_per_frame, xc_sigma,
                                   stream(config.rng_seed, "pairs", k), k)
        frame = detect_counting(pairs, config, stream(config.rng_seed, "detect", k))
        if want_grids:
            grids.append(frame.grid)
        else:
            events.append(extract_events(frame, d.threshold))
    return np.stack(grids) if want_grids else events


def _jitter_sigma(config):
    return tuple(np.asarray(config.source.pair_jitter_fwhm) / FWHM_PER_SIGMA)


def counting_frames(config, n_frames=None, jobs=1, chunk=2000):
    """Detected counting-regime frames as a :class:`FrameStack` (uint8)."""
    n = config.n_frames if n_frames is None else n_frames
    parts = map_ranges(_counting_chunk, n, chunk, jobs, (config, _jitter_sigma(config), True))
    return FrameStack(np.concatenate(parts), config.binning, "counting",
                      config.region("signal"), config.region("idler"), config.rng_seed)


def iter_counting_chunks(config, n_frames=None, jobs=1, chunk=2000):
    """Counting frames as a stream of :class:`FrameStack` chunks."""
    n = config.n_frames if n_frames is None else n_frames
    for start, part in zip(range(0, n, chunk),
                           iter_ranges(_counting_chunk, n, chunk, jobs,
                                       (config, _jitter_sigma(config), True))):
        yield FrameStack(part, config.binning, "counting", config.region("signal"),
                         config.region("idler"), config.rng_seed,
                         np.arange(start, start + len(part)))


def counting_events(config, n_frames=None, jobs=1, chunk=2000):
    """Event lists of a synthetic counting run, without keeping the frames."""
    n = config.n_frames if n_frames is None else n_frames
    parts = map_ranges(_counting_chunk, n, chunk, jobs, (config, _jitter_sigma(config), False))
    return [ev for part in parts for ev in part]


def _intensity_chunk(config, model, start, stop):
    out = np.empty((stop - start,) + config.grid_shape, dtype=np.float32)
    for j, k in enumerate(range(start, stop)):
        ideal = render_speckle_frame(model, config, stream(config.rng_seed, "speckle", k), k)
        out[j] = detect_intensity(ideal, config, stream(config.rng_seed, "readout", k)).grid
    return out


def iter_intensity_chunks(config, model, n_frames=None, jobs=1, chunk=100):
    """Speckle frames as a stream of :class:`FrameStack` chunks."""
    n = config.n_frames if n_frames is None else n_frames
    for start, part in zip(range(0, n, chunk),
                           iter_ranges(_intensity_chunk, n, chunk, jobs, (config, model))):
        yield FrameStack(part, config.binning, "intensity", config.region("signal"),
                         config.region("idler"), config.rng_seed,
                         np.arange(start, start + len(part)))


def intensity_stack(config, model, n_frames=None, jobs=1, chunk=100):
    """Detected speckle frames (float32) for a given :class:`SpeckleModel`."""
    n = config.n_frames if n_frames is None else n_frames
    parts = map_ranges(_intensity_chunk, n, chunk, jobs, (config, model))
    return FrameStack(np.concatenate(parts), config.binning, "intensity",
                      config.region("signal"), config.region("idler"), config.rng_seed)
