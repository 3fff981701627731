"""Photon-counting pipeline: coincidence displacement histogram and
photocount-moment efficiency estimates."""

import warnings
from dataclasses import dataclass

import numpy as np

from .maps import CorrelationMap, EmptyDataError

__all__ = ["PhotocountMoments", "counting_xc_histogram", "estimate_efficiencies"]


@dataclass
class PhotocountMoments:
    mean_signal: float
    mean_idler: float
    cross_covariance: float
    estimated_efficiency_signal: float
    estimated_efficiency_idler: float
    uncertainty_signal: float
    uncertainty_idler: float
    n_frames: int


def _stack_events(events, attr):
    arrays = [getattr(ev, attr) for ev in events]
    counts = np.array([len(a) for a in arrays], dtype=np.int64)
    pos = np.concatenate(arrays) if counts.sum() else np.empty((0, 2), dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return pos.astype(np.int64), counts, starts


def _pair_bins(sig, sig_counts, sig_starts, idl, idl_counts, idl_starts,
               frames, partner, radius, n_blocks, n_frames):
    """Flat ``block * W^2 + bin`` indices for all signal x idler event pairs of
    frames ``frames``, pairing each with the idler events of ``partner``."""
    width = 2 * radius + 1
    ns = sig_counts[frames]
    ni = idl_counts[partner]
    per_sig = np.repeat(ni, ns)  # idler partners of each signal event
    if per_sig.sum() == 0:
        return np.empty(0, dtype=np.int64)
    s_idx = np.concatenate([np.arange(a, a + k) for a, k in zip(sig_starts[frames], ns)])
    s_rep = np.repeat(s_idx, per_sig)
    base = np.repeat(np.repeat(idl_starts[partner], ns), per_sig)
    offs = np.arange(per_sig.sum()) - np.repeat(np.cumsum(per_sig) - per_sig, per_sig)
    i_rep = base + offs
    d = sig[s_rep] - idl[i_rep]
    keep = np.all(np.abs(d) <= radius, axis=1)
    block = np.repeat(np.repeat(frames * n_blocks // n_frames, ns), per_sig)[keep]
    d = d[keep] + radius
    return block * width * width + d[:, 0] * width + d[:, 1]


def counting_xc_histogram(events, config, radius=16, n_blocks=50, chunk=5000):
    """Background-subtracted histogram of ``d = signal - conjugate(idler)``.

    All signal x idler event pairs of a frame are binned by displacement; the
    accidental background is the same histogram built from signal events of
    frame ``f`` and idler events of frame ``f + 1`` (cyclic).  Per-block maps
    are kept in ``samples`` for the width bootstrap.
    """
    events = list(events)
    n = len(events)
    if n == 0:
        raise EmptyDataError("no frames")
    sig, sig_counts, sig_starts = _stack_events(events, "signal_events")
    idl, idl_counts, idl_starts = _stack_events(events, "idler_events")
    if len(sig) == 0 or len(idl) == 0:
        raise EmptyDataError("no signal or idler events")
    if n < 100:
        warnings.warn("fewer than 100 frames; background estimate will be poor")

    a, t = config.geometry.conjugation.superpixel(config.binning)
    conj = idl @ a.T + t
    idl_c = np.rint(conj).astype(np.int64)

    n_blocks = max(1, min(n_blocks, n))
    width = 2 * radius + 1
    size = n_blocks * width * width
    same = np.zeros(size)
    shifted = np.zeros(size)
    for start in range(0, n, chunk):
        frames = np.arange(start, min(start + chunk, n))
        args = (sig, sig_counts, sig_starts, idl_c, idl_counts, idl_starts)
        same += np.bincount(_pair_bins(*args, frames, frames, radius, n_blocks, n),
                            minlength=size)
        shifted += np.bincount(_pair_bins(*args, frames, (frames + 1) % n, radius, n_blocks, n),
                               minlength=size)
    samples = (same - shifted).reshape(n_blocks, width, width)
    return CorrelationMap.from_grid(samples.sum(axis=0), n, samples, "counting")


def estimate_efficiencies(events):
    """Detection efficiencies from photocount moments.

    For Poissonian pair numbers thinned independently in each arm,
    ``cov(n_s, n_i) = eta_s eta_i <N>`` so ``eta_i = cov / <n_s>`` and
    ``eta_s = cov / <n_i>``.  Estimates are clipped to ``[0, 1]``.
    """
    ns = np.array([len(ev.signal_events) for ev in events], dtype=float)
    ni = np.array([len(ev.idler_events) for ev in events], dtype=float)
    n = len(ns)
    if n < 2 or ns.mean() == 0 or ni.mean() == 0:
        raise EmptyDataError("no photocounts")
    if n < 1000:
        warnings.warn("fewer than 1000 frames; efficiency estimates will be noisy")
    ms, mi = ns.mean(), ni.mean()
    cov = np.sum((ns - ms) * (ni - mi)) / (n - 1)
    var_s, var_i = ns.var(ddof=1), ni.var(ddof=1)
    sd_cov = np.sqrt((var_s * var_i + cov * cov) / n)
    return PhotocountMoments(
        mean_signal=float(ms),
        mean_idler=float(mi),
        cross_covariance=float(cov),
        estimated_efficiency_signal=float(np.clip(cov / mi, 0.0, 1.0)),
        estimated_efficiency_idler=float(np.clip(cov / ms, 0.0, 1.0)),
        uncertainty_signal=float(sd_cov / mi),
        uncertainty_idler=float(sd_cov / ms),
        n_frames=n,
    )
