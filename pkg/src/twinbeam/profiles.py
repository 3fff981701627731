"""Half-maximum crossings of sampled 1-D peak profiles."""

import numpy as np

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


class FWHMRangeError(ValueError):
    """The half maximum is not crossed inside the sampled range."""


class BelowResolutionError(FWHMRangeError):
    """Peak narrower than one sample; ``upper_bound`` is in samples."""

    def __init__(self, message, upper_bound=1.0):
        super().__init__(message)
        self.upper_bound = upper_bound


class BoundaryError(ValueError):
    """Peak sits on the edge of the sampled window."""


def half_max_crossings(values, peak):
    """Distances (in samples) from ``peak`` to the left and right crossings of
    half the peak value, by linear interpolation between neighbours.

    The baseline is zero: correlation maps are background-free by construction.
    """
    v = np.asarray(values, dtype=float)
    half = 0.5 * v[peak]
    if not half > 0:
        raise FWHMRangeError("peak value is not positive")

    def walk(step):
        i = peak
        while True:
            j = i + step
            if j < 0 or j >= v.size:
                raise FWHMRangeError("half maximum not crossed inside the profile")
            if v[j] < half:
                return abs(i - peak) + (v[i] - half) / (v[i] - v[j])
            i = j

    return walk(-1), walk(+1)


def fwhm(values, peak=None, spacing=1.0):
    """FWHM of a sampled peak by linear interpolation of half-maximum crossings."""
    v = np.asarray(values, dtype=float)
    if peak is None:
        peak = int(np.argmax(v))
    left, right = half_max_crossings(v, peak)
    return (left + right) * spacing
