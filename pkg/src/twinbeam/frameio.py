"""On-disk frame stacks, graymap previews and run manifests.

A frame directory holds chunk files ``frames_NNNNNN.bin`` and ``index.txt``.
Each chunk is a text header terminated by a line ``END`` followed by the raw
little-endian grids of consecutive frames::

    TWINBEAM-FRAMES 1
    rows 128
    cols 128
    count 2000
    first_frame 0
    binning 8
    regime counting
    seed 20140415
    encoding bits
    signal_region 0 128 0 64
    idler_region 0 128 64 128
    END

``encoding`` is ``bits`` for binary counting frames (one bit per superpixel,
row-major, ``numpy.packbits`` order) and ``float32`` for intensity frames.
Streaming chunk by chunk keeps memory bounded for long counting runs.
"""

import hashlib
import json
import os

import numpy as np

from .detector import FrameStack

__all__ = ["FrameWriter", "iter_chunks", "read_stack", "write_pgm", "sha256_file",
           "write_manifest", "verify_manifest"]

MAGIC = "TWINBEAM-FRAMES 1"
INDEX = "index.txt"


class FrameFormatError(ValueError):
    """Malformed frame file or directory."""


def _encode(frames):
    if frames.dtype == np.uint8 or frames.dtype == np.bool_:
        return "bits", np.packbits(frames.astype(bool), axis=None).tobytes()
    return "float32", np.ascontiguousarray(frames, dtype="<f4").tobytes()


class FrameWriter:
    """Append chunks of a :class:`FrameStack` to a directory."""

    def __init__(self, directory):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self.files = []

    def write(self, stack):
        first = int(stack.frame_indices[0])
        name = f"frames_{first:06d}.bin"
        encoding, payload = _encode(stack.frames)
        n, rows, cols = stack.frames.shape
        header = [MAGIC, f"rows {rows}", f"cols {cols}", f"count {n}",
                  f"first_frame {first}", f"binning {stack.binning}",
                  f"regime {stack.regime}", f"seed {stack.seed}", f"encoding {encoding}",
                  "signal_region " + " ".join(map(str, stack.signal_region)),
                  "idler_region " + " ".join(map(str, stack.idler_region)), "END"]
        with open(os.path.join(self.directory, name), "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(payload)
        self.files.append(name)
        return name

    def close(self):
        with open(os.path.join(self.directory, INDEX), "w", encoding="ascii") as fh:
            fh.write("".join(f"{f}\n" for f in self.files))
        return [os.path.join(self.directory, f) for f in self.files + [INDEX]]


def _read_chunk(path):
    with open(path, "rb") as fh:
        meta = {}
        if fh.readline().decode("ascii").strip() != MAGIC:
            raise FrameFormatError(f"{path}: not a frame file")
        while True:
            line = fh.readline().decode("ascii").strip()
            if not line:
                raise FrameFormatError(f"{path}: header has no END line")
            if line == "END":
                break
            key, _, value = line.partition(" ")
            meta[key] = value
        payload = fh.read()
    try:
        n, rows, cols = int(meta["count"]), int(meta["rows"]), int(meta["cols"])
        if meta["encoding"] == "bits":
            bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=n * rows * cols)
            frames = bits.reshape(n, rows, cols)
        elif meta["encoding"] == "float32":
            frames = np.frombuffer(payload, dtype="<f4").reshape(n, rows, cols)
        else:
            raise FrameFormatError(f"{path}: unknown encoding {meta['encoding']!r}")
        first = int(meta["first_frame"])
        return FrameStack(frames, int(meta["binning"]), meta["regime"],
                          tuple(int(v) for v in meta["signal_region"].split()),
                          tuple(int(v) for v in meta["idler_region"].split()),
                          int(meta["seed"]), np.arange(first, first + n))
    except FrameFormatError:
        raise
    except (KeyError, ValueError) as exc:
        raise FrameFormatError(f"{path}: {exc}") from exc


def iter_chunks(directory):
    """Yield the chunks of a frame directory as :class:`FrameStack` objects."""
    index = os.path.join(directory, INDEX)
    if not os.path.exists(index):
        raise FrameFormatError(f"{directory}: no {INDEX}")
    with open(index, encoding="ascii") as fh:
        names = [line.strip() for line in fh if line.strip()]
    if not names:
        raise FrameFormatError(f"{directory}: empty index")
    for name in names:
        yield _read_chunk(os.path.join(directory, name))


def read_stack(directory):
    """Whole frame directory as one in-memory :class:`FrameStack`."""
    chunks = list(iter_chunks(directory))
    c0 = chunks[0]
    return FrameStack(np.concatenate([c.frames for c in chunks]), c0.binning, c0.regime,
                      c0.signal_region, c0.idler_region, c0.seed,
                      np.concatenate([c.frame_indices for c in chunks]))


def write_pgm(path, grid):
    """8-bit binary portable graymap, linearly scaled to the grid maximum."""
    g = np.asarray(grid, dtype=float)
    top = g.max()
    img = np.zeros(g.shape, dtype=np.uint8) if top <= 0 else \
        np.clip(np.rint(255.0 * g / top), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, config_text, seed, version, timings, files):
    """JSON run manifest with a checksum for every emitted file."""
    base = os.path.dirname(os.path.abspath(path))
    checksums = {os.path.relpath(os.path.abspath(f), base): sha256_file(f) for f in files}
    manifest = {"tool": "twinbeam", "version": version, "seed": seed,
                "timings_s": timings, "checksums": checksums, "config": config_text}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def verify_manifest(path):
    """Names of files whose checksum no longer matches (empty when intact)."""
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    bad = []
    for rel, digest in manifest["checksums"].items():
        f = os.path.join(base, rel)
        if not os.path.exists(f) or sha256_file(f) != digest:
            bad.append(rel)
    return bad
