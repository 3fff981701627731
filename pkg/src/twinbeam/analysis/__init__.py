"""Measurement pipelines: photon-counting coincidences, intensity correlation
maps, width extraction and parameter sweeps."""

from .counting import PhotocountMoments, counting_xc_histogram, estimate_efficiencies
from .intensity import intensity_correlation_maps, select_reference_points
from .maps import (CorrelationMap, EmptyDataError, frame_autocovariance, spatial_correlation,
                   windowed_covariance)
from .sweeps import power_law_exponent, width_vs_power_sweep, width_vs_waist_sweep
from .widths import WidthEstimate, extract_fwhm

__all__ = [
    "CorrelationMap",
    "EmptyDataError",
    "PhotocountMoments",
    "WidthEstimate",
    "counting_xc_histogram",
    "estimate_efficiencies",
    "extract_fwhm",
    "frame_autocovariance",
    "intensity_correlation_maps",
    "power_law_exponent",
    "select_reference_points",
    "spatial_correlation",
    "width_vs_power_sweep",
    "width_vs_waist_sweep",
    "windowed_covariance",
]
