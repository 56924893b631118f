"""Counter-based random streams.

Every draw is a pure function of (root seed, tag, kind, level, block, index,
replica), so results do not depend on the order or the thread in which
batches are produced.
"""
import hashlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._kernels import philox_normals, philox_uniforms
from .exceptions import ParameterError

RNG_POLICY_VERSION = "philox4x32-10/bridge-v1"

KIND_BRIDGE = 0
KIND_UNIFORM = 1
KIND_GAUSS = 2


def derive_key(seed, tag):
    """Two 32-bit Philox key words from a root seed and a stream tag."""
    if int(seed) < 0:
        raise ParameterError("seed must be non-negative")
    h = hashlib.blake2b(f"{int(seed)}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(h[:4], "little"), int.from_bytes(h[4:], "little")


def _word1(kind, level, block):
    if not (0 <= level < 256 and 0 <= block < 65536):
        raise ParameterError("level or block out of range for the counter layout")
    return (kind << 24) | (level << 16) | block


class CounterStream:
    """Random numbers addressed by (replica, index) under a fixed key."""

    def __init__(self, seed, tag):
        self.seed = int(seed)
        self.tag = str(tag)
        self.key = derive_key(seed, tag)

    def normals(self, replicas, indices, level=0, block=0, kind=KIND_GAUSS):
        """Array (R, I, 2) of standard normals."""
        reps = np.ascontiguousarray(replicas, dtype=np.uint64)
        idx = np.ascontiguousarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= 2**32):
            raise ParameterError("stream index out of 32-bit range")
        out = np.empty((reps.size, idx.size, 2))
        philox_normals(self.key[0], self.key[1], _word1(kind, level, block), reps, idx, out)
        return out

    def uniforms(self, replicas, indices, block=0):
        """Array (R, I, 2) of uniforms in (0, 1)."""
        reps = np.ascontiguousarray(replicas, dtype=np.uint64)
        idx = np.ascontiguousarray(indices, dtype=np.int64)
        out = np.empty((reps.size, idx.size, 2))
        philox_uniforms(self.key[0], self.key[1], _word1(KIND_UNIFORM, 0, block), reps, idx, out)
        return out

    def gaussian(self, replicas, dim, block_offset=0):
        """One standard normal vector of length dim per replica, shape (R, dim)."""
        nb = (dim + 1) // 2
        z = self.normals(replicas, np.arange(nb), block=block_offset)
        return z.reshape(len(np.atleast_1d(replicas)), 2 * nb)[:, :dim]


def parallel_map(fn, items, threads=1):
    """Ordered map; the work split never depends on the thread count."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as ex:
        return list(ex.map(fn, items))


def chunk_ranges(total, size):
    """Fixed (start, stop) chunks of a replica range."""
    return [(s, min(s + size, total)) for s in range(0, total, size)]
