"""iCCD camera model: hardware binning, efficiency, noise, thresholding, and
event extraction for the photon-counting pipeline."""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Frame",
    "FrameStack",
    "EventList",
    "detect_counting",
    "detect_intensity",
    "extract_events",
    "region_mask",
    "positions_to_superpixels",
]


@dataclass
class Frame:
    """One superpixel grid.  Counting frames hold ``uint8`` fired flags (or raw
    analog floats before thresholding); intensity frames hold real counts."""

    grid: np.ndarray
    binning: int
    regime: str
    frame_index: int = 0
    signal_region: tuple = (0, 0, 0, 0)
    idler_region: tuple = (0, 0, 0, 0)
    seed: int = 0

    @property
    def is_binary(self):
        return not np.issubdtype(self.grid.dtype, np.floating)


@dataclass
class FrameStack:
    """``frames`` has shape ``(n_frames, rows, cols)``; row ``k`` is frame
    ``frame_indices[k]``."""

    frames: np.ndarray
    binning: int
    regime: str
    signal_region: tuple
    idler_region: tuple
    seed: int = 0
    frame_indices: np.ndarray = None

    def __post_init__(self):
        if self.frame_indices is None:
            self.frame_indices = np.arange(len(self.frames))

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        for k, grid in zip(self.frame_indices, self.frames):
            yield Frame(grid, self.binning, self.regime, int(k),
                        self.signal_region, self.idler_region, self.seed)

    @classmethod
    def from_frames(cls, frames):
        frames = list(frames)
        f0 = frames[0]
        return cls(np.stack([f.grid for f in frames]), f0.binning, f0.regime,
                   f0.signal_region, f0.idler_region, f0.seed,
                   np.array([f.frame_index for f in frames]))


@dataclass
class EventList:
    """Fired superpixels of one frame as ``(row, col)`` integer arrays."""

    signal_events: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    idler_events: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))
    frame_index: int = 0


def region_mask(shape, rect):
    mask = np.zeros(shape, dtype=bool)
    r0, r1, c0, c1 = rect
    mask[r0:r1, c0:c1] = True
    return mask


def positions_to_superpixels(pos, config):
    """Detector-plane meters ``(row, col)`` -> integer superpixel indices."""
    return np.floor(np.asarray(pos) / config.superpixel_size).astype(np.int64)


def _in_rect(idx, rect):
    r0, r1, c0, c1 = rect
    return (idx[:, 0] >= r0) & (idx[:, 0] < r1) & (idx[:, 1] >= c0) & (idx[:, 1] < c1)


def detect_counting(pairs, config, rng):
    """Thinned, binned and thresholded single-photon frame.

    Each photon survives with its beam's quantum efficiency and fires the
    superpixel it lands on, provided that superpixel belongs to its own beam's
    region.  Dark events are added independently with probability
    ``dark_event_rate`` per superpixel.  Several photons on one superpixel give
    a single event.
    """
    d = config.detector
    shape = config.grid_shape
    grid = np.zeros(shape, dtype=np.uint8)
    sig_rect, idl_rect = config.region("signal"), config.region("idler")

    n = len(pairs.signal_pos)
    keep_s = rng.random(n) < d.quantum_efficiency_signal
    keep_i = rng.random(n) < d.quantum_efficiency_idler
    for pos, keep, rect in ((pairs.signal_pos, keep_s, sig_rect),
                            (pairs.idler_pos, keep_i, idl_rect)):
        idx = positions_to_superpixels(pos[keep], config)
        idx = idx[_in_rect(idx, rect)]
        grid[idx[:, 0], idx[:, 1]] = 1

    n_cells = shape[0] * shape[1]
    n_dark = rng.binomial(n_cells, d.dark_event_rate) if d.dark_event_rate > 0 else 0
    if n_dark:
        cells = rng.choice(n_cells, size=n_dark, replace=False)
        grid.flat[cells] = 1

    return Frame(grid, config.binning, "counting", pairs.frame_index,
                 sig_rect, idl_rect, config.rng_seed)


def detect_intensity(ideal, config, rng):
    """Analog readout: efficiency-scaled intensity plus Gaussian readout noise,
    clamped to ``[0, saturation]``.  Light outside both regions is dropped."""
    d = config.detector
    eta = np.zeros(ideal.grid.shape)
    r0, r1, c0, c1 = ideal.signal_region
    eta[r0:r1, c0:c1] = d.quantum_efficiency_signal
    r0, r1, c0, c1 = ideal.idler_region
    eta[r0:r1, c0:c1] = d.quantum_efficiency_idler
    out = eta * ideal.grid
    if d.readout_noise_sigma > 0:
        out = out + rng.normal(0.0, d.readout_noise_sigma, size=out.shape)
    np.clip(out, 0.0, d.saturation, out=out)
    return Frame(out, ideal.binning, "intensity", ideal.frame_index,
                 ideal.signal_region, ideal.idler_region, ideal.seed)


def extract_events(frame, threshold):
    """Superpixels above ``threshold`` split into signal/idler event lists.

    Binary (integer-typed) frames are passed through: any nonzero superpixel
    is an event.  Fired superpixels outside both regions are ignored.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    fired = frame.grid > 0 if frame.is_binary else frame.grid > threshold
    out = []
    for rect in (frame.signal_region, frame.idler_region):
        r0, r1, c0, c1 = rect
        rows, cols = np.nonzero(fired[r0:r1, c0:c1])
        out.append(np.stack([rows + r0, cols + c0], axis=1).astype(np.int64))
    return EventList(out[0], out[1], frame.frame_index)
