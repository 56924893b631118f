import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvldp._kernels import philox_block
from mvldp.brownian import BrownianDriver
from mvldp.exceptions import ParameterError
from mvldp.rng import CounterStream, chunk_ranges, derive_key, parallel_map

KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF, 0xFFFFFFFF), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = philox_block(np.array([ctr], dtype=np.uint32), *key)[0]
    assert tuple(int(x) for x in out) == expected


def test_keys_depend_on_seed_and_tag():
    assert derive_key(1, "a") == derive_key(1, "a")
    assert derive_key(1, "a") != derive_key(2, "a")
    assert derive_key(1, "a") != derive_key(1, "b")
    with pytest.raises(ParameterError):
        derive_key(-1, "a")


def test_stream_is_addressable():
    s = CounterStream(7, "x")
    full = s.normals(np.arange(10), np.arange(20))
    part = s.normals(np.array([3, 8]), np.arange(5, 9))
    assert np.array_equal(part, full[[3, 8]][:, 5:9])


def test_normals_moments():
    z = CounterStream(0, "m").normals(np.arange(200), np.arange(500)).ravel()
    assert abs(z.mean()) < 0.01 and abs(z.var() - 1) < 0.01
    u = CounterStream(0, "u").uniforms(np.arange(100), np.arange(500)).ravel()
    assert 0 < u.min() and u.max() < 1 and abs(u.mean() - 0.5) < 0.005


def test_parallel_map_order_and_chunks():
    assert parallel_map(lambda x: x * x, range(10), threads=4) == [x * x for x in range(10)]
    assert chunk_ranges(10, 4) == [(0, 4), (4, 8), (8, 10)]


def test_bridge_grids_nest_exactly():
    coarse = BrownianDriver(5, 2, 1.0, 96).path(np.arange(4))
    fine = BrownianDriver(5, 2, 1.0, 192).path(np.arange(4))
    assert np.array_equal(coarse, fine[:, ::2])


def test_sparse_nodes_match_full_path():
    d = BrownianDriver(9, 1, 3.0, 384)
    full = d.path(np.arange(3))
    nodes = np.array([0, 7, 100, 383, 384, 5])
    assert np.array_equal(d.values(np.arange(3), nodes), full[:, nodes])
    inc = d.increments(np.arange(3), 10, 20)
    assert np.allclose(inc, np.diff(full[:, 10:21], axis=1))


def test_brownian_covariance():
    w = BrownianDriver(11, 1, 2.0, 64).values(np.arange(40000), np.array([16, 48, 64]))[:, :, 0]
    cov = np.cov(w.T)
    t = np.array([0.5, 1.5, 2.0])
    assert np.allclose(cov, np.minimum.outer(t, t), atol=0.05)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 63), st.integers(1, 3), st.sampled_from([3, 12, 40, 64]))
def test_driver_is_deterministic(seed, dim, n):
    a = BrownianDriver(seed, dim, 1.0, n).path(np.arange(3))
    b = BrownianDriver(seed, dim, 1.0, n).path(np.arange(3))
    assert np.array_equal(a, b) and np.all(a[:, 0] == 0)
