"""Compiled inner loops: Philox4x32-10 draws and lag-wise increment maxima."""
import math

import numba as nb
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


@nb.njit(cache=True, inline="always")
def _philox(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _M0 * np.uint64(c0)
        p1 = _M1 * np.uint64(c2)
        c0, c1, c2, c3 = (
            np.uint32(p1 >> _S32) ^ c1 ^ k0,
            np.uint32(p1 & _LO),
            np.uint32(p0 >> _S32) ^ c3 ^ k1,
            np.uint32(p0 & _LO),
        )
        k0 = np.uint32(k0 + _W0)
        k1 = np.uint32(k1 + _W1)
    return c0, c1, c2, c3


@nb.njit(cache=True)
def philox_block(counters, k0, k1):
    """Raw Philox4x32-10 output for an (n, 4) uint32 counter array."""
    out = np.empty_like(counters)
    for i in range(counters.shape[0]):
        a = _philox(counters[i, 0], counters[i, 1], counters[i, 2], counters[i, 3],
                    np.uint32(k0), np.uint32(k1))
        out[i, 0] = a[0]
        out[i, 1] = a[1]
        out[i, 2] = a[2]
        out[i, 3] = a[3]
    return out


@nb.njit(cache=True, inline="always")
def _two_uniforms(a0, a1, a2, a3):
    # 53-bit uniforms; the first one is shifted off zero for the logarithm
    u1 = (float(a0 >> np.uint32(5)) * 67108864.0 + float(a1 >> np.uint32(6)) + 0.5) / 9007199254740992.0
    u2 = (float(a2 >> np.uint32(5)) * 67108864.0 + float(a3 >> np.uint32(6))) / 9007199254740992.0
    return u1, u2


@nb.njit(cache=True, nogil=True)
def philox_normals(k0, k1, c1, reps, idx, out):
    """Fill out[r, i, 0:2] with two standard normals per (replica, index) counter."""
    kk0 = np.uint32(k0)
    kk1 = np.uint32(k1)
    cc1 = np.uint32(c1)
    for r in range(reps.shape[0]):
        rep = np.uint64(reps[r])
        c2 = np.uint32(rep & _LO)
        c3 = np.uint32(rep >> _S32)
        for i in range(idx.shape[0]):
            a0, a1, a2, a3 = _philox(np.uint32(idx[i]), cc1, c2, c3, kk0, kk1)
            u1, u2 = _two_uniforms(a0, a1, a2, a3)
            rad = math.sqrt(-2.0 * math.log(u1))
            th = 2.0 * math.pi * u2
            out[r, i, 0] = rad * math.cos(th)
            out[r, i, 1] = rad * math.sin(th)


@nb.njit(cache=True, nogil=True)
def philox_uniforms(k0, k1, c1, reps, idx, out):
    """Fill out[r, i, 0:2] with two uniforms in (0, 1) per counter."""
    kk0 = np.uint32(k0)
    kk1 = np.uint32(k1)
    cc1 = np.uint32(c1)
    for r in range(reps.shape[0]):
        rep = np.uint64(reps[r])
        c2 = np.uint32(rep & _LO)
        c3 = np.uint32(rep >> _S32)
        for i in range(idx.shape[0]):
            a0, a1, a2, a3 = _philox(np.uint32(idx[i]), cc1, c2, c3, kk0, kk1)
            u1, u2 = _two_uniforms(a0, a1, a2, a3)
            out[r, i, 0] = u1
            out[r, i, 1] = u2 + 0.5 / 9007199254740992.0


@nb.njit(cache=True, nogil=True)
def lag_max(values):
    """out[p, k-1] = max_i |x[p, i+k] - x[p, i]| (Euclidean) for lags k = 1..n."""
    P, m, d = values.shape
    out = np.zeros((P, m - 1))
    for p in range(P):
        for k in range(1, m):
            best = 0.0
            for i in range(m - k):
                s = 0.0
                for j in range(d):
                    diff = values[p, i + k, j] - values[p, i, j]
                    s += diff * diff
                if s > best:
                    best = s
            out[p, k - 1] = math.sqrt(best)
    return out
