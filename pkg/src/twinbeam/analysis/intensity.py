"""Intensity-regime AC and XC maps around reference points."""

import warnings

import numpy as np
from scipy.ndimage import gaussian_filter

from ..config import conjugate_of
from ..profiles import FWHM_PER_SIGMA, FWHMRangeError, fwhm
from ..rng import stream
from .maps import CorrelationMap, EmptyDataError, frame_means, windowed_covariance

__all__ = ["select_reference_points", "intensity_correlation_maps", "default_pad"]


def default_pad(window):
    """Search margin around the nominal centre used for peak recentering."""
    return max(2, window // 4)


def _fits(points, rect, half):
    r0, r1, c0, c1 = rect
    p = np.asarray(points)
    return ((p[:, 0] - half >= r0) & (p[:, 0] + half < r1)
            & (p[:, 1] - half >= c0) & (p[:, 1] + half < c1))


def select_reference_points(stack, config, n_points=100, window=33, percentile=50.0,
                            seed=None, pad=None):
    """Random idler superpixels above the ``percentile`` mean-intensity floor
    whose AC window and conjugate XC window (plus search margin) fit inside
    their regions.  Returns an ``(n, 2)`` integer array of ``(row, col)``."""
    pad = default_pad(window) if pad is None else pad
    half = window // 2 + pad
    r0, r1, c0, c1 = stack.idler_region
    means = frame_means(stack.frames[:, r0:r1, c0:c1])
    floor = np.percentile(means, percentile)
    rows, cols = np.nonzero(means > floor)
    pts = np.stack([rows + r0, cols + c0], axis=1)
    if len(pts):
        conj = np.rint(conjugate_of(pts, config)).astype(np.int64)
        ok = _fits(pts, stack.idler_region, half) & _fits(conj, stack.signal_region, half)
        pts = pts[ok]
    if len(pts) == 0:
        raise EmptyDataError("no admissible reference points")
    if len(pts) < n_points:
        warnings.warn(f"only {len(pts)} admissible reference points")
        n_points = len(pts)
    rng = stream(config.rng_seed if seed is None else seed, "points", 0)
    pick = np.sort(rng.choice(len(pts), n_points, replace=False))
    return pts[pick]


def _block(frames, means, ref, centre, ext):
    rows = slice(centre[0] - ext, centre[0] + ext + 1)
    cols = slice(centre[1] - ext, centre[1] + ext + 1)
    return windowed_covariance(frames, means, ref, rows, cols)


def _smoothing_sigma(blocks):
    """Per-axis Gaussian sigma of the nominally centred mean map."""
    mean = blocks.mean(axis=0)
    pk = np.unravel_index(int(np.argmax(mean)), mean.shape)
    out = []
    for cut, p in ((mean[:, pk[1]], pk[0]), (mean[pk[0], :], pk[1])):
        try:
            out.append(fwhm(cut, p) / FWHM_PER_SIGMA)
        except FWHMRangeError:
            out.append(1.0)
    return tuple(out)


def _recenter(blocks, half, pad):
    """Cut each block to ``2 half + 1`` around its maximum within ``pad`` of
    the centre.  The maximum is located on a copy smoothed at the scale of
    the mean peak, because the argmax of a raw map follows noise and
    aligning on noise narrows the average."""
    if pad == 0:
        return blocks
    sigma = _smoothing_sigma(blocks)
    out = np.empty((len(blocks), 2 * half + 1, 2 * half + 1))
    for j, b in enumerate(blocks):
        inner = gaussian_filter(b, sigma)[half:half + 2 * pad + 1, half:half + 2 * pad + 1]
        dr, dc = np.unravel_index(int(np.argmax(inner)), inner.shape)
        out[j] = b[dr:dr + 2 * half + 1, dc:dc + 2 * half + 1]
    return out


def intensity_correlation_maps(stack, reference_points, window=33, config=None, pad=None):
    """Averaged AC map (around each reference point) and XC map (around its
    conjugate point).

    Each per-point map is cut from a window enlarged by ``pad`` on every side
    and recentred, with integer-pixel alignment, on its (smoothed) maximum
    within ``pad`` of the nominal centre.  ``config`` supplies the conjugation map.
    Points whose enlarged windows leave their regions are skipped with a
    warning.  Returns ``(ac_map, xc_map)``.
    """
    if config is None:
        raise ValueError("config is required for the conjugation map")
    if window % 2 == 0 or window < 3:
        raise ValueError("window must be an odd number >= 3")
    frames = stack.frames
    if len(frames) < 2:
        raise EmptyDataError("need at least 2 frames")
    if len(frames) < 100:
        warnings.warn("fewer than 100 frames; correlation maps will be noisy")
    pad = default_pad(window) if pad is None else pad
    half = window // 2
    means = frame_means(frames)

    refs = np.atleast_2d(np.asarray(reference_points, dtype=np.int64))
    conj = np.rint(conjugate_of(refs, config)).astype(np.int64)
    ok = _fits(refs, stack.idler_region, half + pad) & _fits(conj, stack.signal_region, half + pad)
    if not np.all(ok):
        warnings.warn(f"skipped {int(np.sum(~ok))} reference points near region edges")
    if not np.any(ok):
        raise EmptyDataError("all reference points skipped")

    ext = half + pad
    ac = np.array([_block(frames, means, r, r, ext) for r in refs[ok]])
    xc = np.array([_block(frames, means, r, c, ext) for r, c in zip(refs[ok], conj[ok])])
    ac, xc = _recenter(ac, half, pad), _recenter(xc, half, pad)
    n = len(frames)
    return (CorrelationMap.from_grid(ac.mean(axis=0), n, ac, "ac"),
            CorrelationMap.from_grid(xc.mean(axis=0), n, xc, "xc"))
