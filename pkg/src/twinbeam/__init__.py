"""Twin-beam spatial correlation toolkit: phase-matching widths, synthetic
photon-counting and speckle frames, and correlation-width analysis."""

from .config import ExperimentConfig, load_config, reference_config, save_config

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "load_config", "reference_config", "save_config", "__version__"]
