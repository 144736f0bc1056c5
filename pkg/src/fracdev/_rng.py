"""Counter-based random streams with per-path keying.

Every sampler in the package draws path ``p`` of stream ``s`` from a
Philox generator keyed by ``(seed, s, p // BLOCK)``; the path occupies a
fixed row inside its block.  Draws for a given path therefore never
depend on how many paths are requested, in what batches, or on which
worker thread the batch runs.
"""

from __future__ import annotations

import numpy as np

# Paths per Philox key.  Fixed for the life of the package: changing it
# would change every sampled path for a given seed.
BLOCK = 4096

# Stream tags keep independent uses of one seed from colliding.
STREAM_WIENER = 0
STREAM_CHOLESKY = 1
STREAM_DECOUPLED = 2


def _generator(seed: int, stream: int, block: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64((stream << 48) | block)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def standard_normal_paths(seed, stream, first, count, per_path_shape):
    """Standard normal draws for absolute path indices [first, first+count).

    Returns an array of shape ``(count, *per_path_shape)``.  The result is
    a pure function of ``(seed, stream, path index)``.
    """
    if count <= 0:
        return np.empty((0, *per_path_shape))
    out = np.empty((count, *per_path_shape))
    pos = 0
    path = first
    while path < first + count:
        block, row = divmod(path, BLOCK)
        take = min(BLOCK - row, first + count - path)
        gen = _generator(seed, stream, block)
        # Draw the block prefix so row r always sees the same values.
        chunk = gen.standard_normal((row + take, *per_path_shape))
        out[pos:pos + take] = chunk[row:row + take]
        pos += take
        path += take
    return out


def validate_seed(seed) -> int:
    seed = int(seed)
    if not (0 <= seed < 2**64):
        raise ValueError("seed must be a 64-bit unsigned integer")
    return seed
