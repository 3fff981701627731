import time

import numpy as np
import pytest

from twinbeam.config import ConjugationMap, reference_config
from twinbeam.rng import stream


def small_config(regime="intensity", sensor=256, **changes):
    """Reference parameters on a reduced sensor: same pitch, binning and kernels,
    fewer superpixels, so speckle frames render in a few milliseconds."""
    cfg = reference_config(regime).replace(
        detector__sensor_size=(sensor, sensor),
        geometry__signal_region=(0, sensor, 0, sensor // 2),
        geometry__idler_region=(0, sensor, sensor // 2, sensor),
        geometry__conjugation=ConjugationMap((1.0, 0.0, 0.0, -1.0), (0.0, float(sensor))),
    )
    return cfg.replace(**changes) if changes else cfg


@pytest.fixture
def intensity_config():
    return reference_config("intensity")


@pytest.fixture
def counting_config():
    return reference_config("counting")


@pytest.fixture
def small_intensity_config():
    return small_config("intensity")


@pytest.fixture
def small_counting_config():
    return small_config("counting")


@pytest.fixture
def rng():
    return stream(12345, "test", 0)


def gaussian_map(shape, sigma, center=None, amplitude=1.0):
    """Sampled 2-D Gaussian, ``sigma`` as ``(row, col)`` samples."""
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]]
    if center is None:
        center = (shape[0] // 2, shape[1] // 2)
    return amplitude * np.exp(-0.5 * (((rows - center[0]) / sigma[0]) ** 2
                                      + ((cols - center[1]) / sigma[1]) ** 2))


@pytest.fixture(scope="session")
def reference_counting_run():
    """The 1e5-frame counting run with default rates and jitter, and its
    synthesis time in seconds."""
    from twinbeam.synth import counting_events

    t0 = time.perf_counter()
    events = counting_events(reference_config("counting"), 100_000)
    return events, time.perf_counter() - t0


@pytest.fixture(scope="session")
def reference_counting_events(reference_counting_run):
    return reference_counting_run[0]


ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance results: ``acceptance(n, ok, detail)``."""

    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        ACCEPTANCE.append((n, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
