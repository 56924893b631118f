"""Brownian motion built by dyadic bridge refinement of a coarse random walk.

With n = n0 * 2**L steps on [0, T], level 0 is a Gaussian walk on the n0
coarse cells and level l fills the midpoints of the level l-1 cells.  Grids
n and 2n therefore share every common node exactly, and the value at any
node can be computed without generating the whole path.
"""
import numpy as np

from .exceptions import ParameterError
from .rng import KIND_BRIDGE, CounterStream


def _split_dyadic(n):
    levels = 0
    while n % 2 == 0:
        n //= 2
        levels += 1
    return n, levels


class BrownianDriver:
    """Deterministic Brownian paths on a uniform grid, keyed by (seed, tag, replica)."""

    def __init__(self, seed, dim, horizon, n_steps, tag="brownian"):
        if n_steps < 1 or horizon <= 0 or dim < 1:
            raise ParameterError("need n_steps >= 1, horizon > 0, dim >= 1")
        self.seed = int(seed)
        self.dim = int(dim)
        self.horizon = float(horizon)
        self.n_steps = int(n_steps)
        self.tag = tag
        self.n_base, self.levels = _split_dyadic(self.n_steps)
        if self.levels > 200:
            raise ParameterError("grid too fine")
        self._stream = CounterStream(seed, tag)

    def _normals(self, reps, level, idx):
        nb = (self.dim + 1) // 2
        parts = [self._stream.normals(reps, idx, level=level, block=b, kind=KIND_BRIDGE)
                 for b in range(nb)]
        z = np.concatenate(parts, axis=2) if nb > 1 else parts[0]
        return z[:, :, : self.dim]

    def values(self, replicas, nodes):
        """W at grid nodes (indices into 0..n), shape (R, len(nodes), dim)."""
        reps = np.atleast_1d(np.asarray(replicas, dtype=np.uint64))
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            return np.zeros((reps.size, 0, self.dim))
        if nodes.min() < 0 or nodes.max() > self.n_steps:
            raise ParameterError("node index outside the grid")
        uniq, inv = np.unique(nodes, return_inverse=True)
        sets = [None] * (self.levels + 1)
        sets[self.levels] = uniq
        for lev in range(self.levels, 0, -1):
            s = sets[lev]
            odd = s[s % 2 == 1]
            sets[lev - 1] = np.unique(np.concatenate([s[s % 2 == 0] // 2, (odd - 1) // 2, (odd + 1) // 2]))
        base = sets[0]
        top = int(base.max())
        walk = np.zeros((reps.size, top + 1, self.dim))
        if top > 0:
            z = self._normals(reps, 0, np.arange(top))
            np.cumsum(z * np.sqrt(self.horizon / self.n_base), axis=1, out=walk[:, 1:])
        vals = walk[:, base]
        for lev in range(1, self.levels + 1):
            s, prev = sets[lev], sets[lev - 1]
            out = np.empty((reps.size, s.size, self.dim))
            ev = s % 2 == 0
            out[:, ev] = vals[:, np.searchsorted(prev, s[ev] // 2)]
            o = s[~ev]
            if o.size:
                left = vals[:, np.searchsorted(prev, (o - 1) // 2)]
                right = vals[:, np.searchsorted(prev, (o + 1) // 2)]
                h = self.horizon / (self.n_base * 2 ** (lev - 1))
                z = self._normals(reps, lev, (o - 1) // 2)
                out[:, ~ev] = 0.5 * (left + right) + (0.5 * np.sqrt(h)) * z
            vals = out
        return vals[:, inv]

    def path(self, replicas):
        """Full paths, shape (R, n+1, dim)."""
        return self.values(replicas, np.arange(self.n_steps + 1))

    def increments(self, replicas, start=0, stop=None):
        """Increments W(t_{k+1}) - W(t_k) for k in [start, stop)."""
        stop = self.n_steps if stop is None else stop
        return np.diff(self.values(replicas, np.arange(start, stop + 1)), axis=1)
