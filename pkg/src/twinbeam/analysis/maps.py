"""Correlation-map container and the covariance estimators behind it.

For a frame stack ``I_f(r)`` the estimator is

    Gamma(r1, r2) = (1/n) sum_f (I_f(r1) - <I(r1)>) (I_f(r2) - <I(r2)>)

with the frame average ``<.>``.  Sums over frames run in frame order, so
``Gamma(r1, r2)`` and ``Gamma(r2, r1)`` are bitwise identical.
"""

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

__all__ = [
    "CorrelationMap",
    "EmptyDataError",
    "frame_means",
    "windowed_covariance",
    "spatial_correlation",
    "frame_autocovariance",
]


class EmptyDataError(ValueError):
    """Nothing to correlate."""


@dataclass
class CorrelationMap:
    """Gamma estimates on a displacement grid centred at the array middle.

    ``samples`` holds the per-reference-point maps (intensity pipeline) or the
    per-frame-block maps (counting pipeline) that ``grid`` aggregates; the
    width bootstrap resamples along its first axis.
    """

    grid: np.ndarray
    n_samples: int
    peak_location: tuple
    peak_value: float
    samples: np.ndarray = None
    kind: str = ""

    @classmethod
    def from_grid(cls, grid, n_samples, samples=None, kind=""):
        grid = np.asarray(grid, dtype=float)
        if not np.all(np.isfinite(grid)):
            raise ValueError("correlation map has non-finite values")
        peak = np.unravel_index(int(np.argmax(grid)), grid.shape)
        return cls(grid, int(n_samples), tuple(int(p) for p in peak), float(grid[peak]),
                   samples, kind)

    @property
    def center(self):
        return tuple(s // 2 for s in self.grid.shape)


def frame_means(frames, chunk=64):
    """Per-pixel frame average in float64, accumulated relative to the first
    frame so that pixels constant over frames get their exact value."""
    frames = np.asarray(frames)
    ref = frames[0].astype(np.float64)
    acc = np.zeros_like(ref)
    for start in range(0, len(frames), chunk):
        acc += np.sum(frames[start:start + chunk] - ref, axis=0, dtype=np.float64)
    return ref + acc / len(frames)


def windowed_covariance(frames, means, ref, rows, cols):
    """Gamma between pixel ``ref`` and every pixel of the block
    ``frames[:, rows, cols]`` (``rows``/``cols`` are slices)."""
    n = len(frames)
    a = frames[:, ref[0], ref[1]].astype(np.float64) - means[ref[0], ref[1]]
    block = frames[:, rows, cols].astype(np.float64) - means[rows, cols]
    return (a[:, None, None] * block).sum(axis=0) / n


def spatial_correlation(a, b, method="fft"):
    """Full linear correlation ``C[d] = sum_x a(x) b(x + d)`` of two 2-D arrays.

    Output has shape ``(2 m - 1, 2 n - 1)`` with zero displacement at the
    centre.  ``method="direct"`` sums every overlap explicitly and serves as
    the reference for the zero-padded FFT path.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("arrays must have the same shape")
    m, n = a.shape
    if method == "direct":
        out = np.zeros((2 * m - 1, 2 * n - 1))
        for dr in range(-(m - 1), m):
            ra = slice(max(0, -dr), min(m, m - dr))
            rb = slice(max(0, dr), min(m, m + dr))
            for dc in range(-(n - 1), n):
                ca = slice(max(0, -dc), min(n, n - dc))
                cb = slice(max(0, dc), min(n, n + dc))
                out[dr + m - 1, dc + n - 1] = np.sum(a[ra, ca] * b[rb, cb])
        return out
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")
    shape = (2 * m - 1, 2 * n - 1)
    fshape = tuple(sfft.next_fast_len(s) for s in shape)
    fa = sfft.rfft2(a, fshape)
    fb = sfft.rfft2(b, fshape)
    full = sfft.irfft2(np.conj(fa) * fb, fshape)
    # Negative lags wrap to the end of the padded array.
    full = np.roll(full, (m - 1, n - 1), axis=(0, 1))
    return full[: shape[0], : shape[1]]


def frame_autocovariance(frames, max_lag, method="fft"):
    """Spatial intensity autocovariance averaged over frames.

    Each frame has its spatial mean removed; products are normalized by the
    number of overlapping pixel pairs.  Returns lags ``-max_lag..max_lag``.
    """
    frames = np.asarray(frames, dtype=float)
    m, n = frames.shape[1:]
    ones = np.ones((m, n))
    counts = spatial_correlation(ones, ones, method)
    acc = np.zeros_like(counts)
    for f in frames:
        d = f - f.mean()
        acc += spatial_correlation(d, d, method)
    cov = acc / len(frames) / np.maximum(counts, 1.0)
    r, c = m - 1, n - 1
    return cov[r - max_lag: r + max_lag + 1, c - max_lag: c + max_lag + 1]
