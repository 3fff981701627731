"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
``(seed, stream, index)``.  Frame ``k`` of a stack therefore gets the same
numbers whether frames are produced sequentially, in chunks, or by worker
processes in any completion order.
"""

import numpy as np

STREAMS = {
    "pairs": 1,
    "detect": 2,
    "speckle": 3,
    "readout": 4,
    "points": 5,
    "bootstrap": 6,
    "test": 7,
}

_MASK64 = (1 << 64) - 1


def stream(seed, name, index=0):
    """Independent generator for ``(seed, name, index)``; ``index < 2**48``."""
    tag = STREAMS[name]
    if not 0 <= index < 1 << 48:
        raise ValueError("stream index out of range")
    key = (int(seed) & _MASK64) | (((tag << 48) | int(index)) << 64)
    return np.random.Generator(np.random.Philox(key=key))
