import numpy as np
import pytest
from mpmath import mp, mpf, log, sqrt, e as mp_e

from mvldp.exceptions import DomainError, ParameterError, UnsupportedConfigurationError
from mvldp.model import brownian, get_model, linear_drift
from mvldp.path_space import CameronMartinPath, Path
from mvldp.strassen_lil import (LimitSetK, LongHorizonSample, coefficient_convergence, distance_to_K,
                                level_grid, linear_contraction, phi, probe_contraction, rescale,
                                rescale_nodes, simulate_long_horizon, strassen_experiment,
                                transformed_coefficients)

BM = brownian(1)
GAMMA = linear_contraction(0.0)


def test_phi_against_high_precision():
    mp.dps = 40
    u = mp_e ** mp_e + 1
    ref = sqrt(u * log(log(u)))
    assert phi(float(u)) == pytest.approx(float(ref), rel=1e-14)
    assert phi(1e6) == pytest.approx(float(sqrt(mpf(10) ** 6 * log(log(mpf(10) ** 6)))), rel=1e-14)
    with pytest.raises(ParameterError):
        phi(3.0)


def test_contraction_probe_and_axioms():
    for center in (0.0, [1.0, -2.0]):
        rep = probe_contraction(linear_contraction(center), samples=1000, seed=1)
        assert rep.passed and rep.samples == 1000
    g = linear_contraction([1.0, 2.0])
    y = np.array([[3.0, -1.0]])
    assert np.allclose(g(7.0, g(1 / 7.0, y)), y, atol=1e-12)
    assert np.array_equal(g(5.0, np.array([[1.0, 2.0]])), np.array([[1.0, 2.0]]))


def test_rescale_examples():
    n_per, n_z = 16, 16
    nodes = rescale_nodes(32, n_per, n_z)
    flat = LongHorizonSample(64, n_per, nodes, np.full((1, nodes.size, 1), 0.7))
    g = linear_contraction(0.7)
    z = rescale(g, flat, 32, n_z)[0]
    assert np.all(z.values == 0.7)
    t = np.arange(64 * n_per + 1) / n_per
    y = Path(64.0, np.sin(t)[:, None])
    z = rescale(GAMMA, y, 32, n_z)
    assert z.values[0, 0] == 0.0
    assert np.allclose(z.values[:, 0], np.sin(32 * np.linspace(0, 1, n_z + 1)) / phi(32), atol=1e-15)
    with pytest.raises(DomainError):
        rescale(GAMMA, y, 128, n_z)
    with pytest.raises(ParameterError):
        rescale(GAMMA, y, 3, n_z)


def test_transformed_coefficients_examples():
    pts = np.linspace(-2, 2, 9)[:, None]
    rep = transformed_coefficients(GAMMA, BM, 100.0, pts)
    assert np.allclose(rep.sigma_hat, 1.0) and np.all(rep.b_hat == 0)
    assert rep.limit_errors() == (0.0, 0.0)
    u = 100.0
    rep = transformed_coefficients(GAMMA, linear_drift(-1.0), u, pts)
    # J = 1/phi and b(Gamma_{1/phi} y) = -phi y, so u J b = -u y
    assert np.allclose(rep.b_hat[:, 0], -u * pts[:, 0], rtol=1e-12)
    assert rep.specialization_error < 1e-9
    arr, ok = coefficient_convergence(GAMMA, BM, [10, 100, 1000], pts)
    assert ok and np.all(arr[:, 1:] <= 1e-14)
    with pytest.raises(UnsupportedConfigurationError):
        coefficient_convergence(GAMMA, linear_drift(-1.0), [10, 100], pts)


def test_distance_examples():
    K = LimitSetK.for_model(BM, GAMMA)
    n = 64
    t = np.linspace(0, 1, n + 1)[:, None]
    h = CameronMartinPath(1.0, np.cos(np.pi * np.linspace(0, 1, n)))
    h = CameronMartinPath(1.0, h.derivative * np.sqrt(2 / h.energy()))
    member = K.add_member(h)
    assert distance_to_K(member, K, 0.25).value <= 1e-4
    assert distance_to_K(Path(1.0, np.zeros((n + 1, 1))), K, 0.25).value == 0.0
    z = Path(1.0, 2 * t)
    # restricted family: lines of slope s <= sqrt(2); the Hölder quotient of (2 - s) t peaks at lag 1
    slopes = np.linspace(0, np.sqrt(2), 2001)
    grid_best = float(np.min(2 - slopes))
    res = distance_to_K(z, K, 0.25)
    assert res.upper_bound and res.value <= grid_best + 1e-6
    assert res.value == pytest.approx(2 - np.sqrt(2), abs=1e-4)
    with pytest.raises(ParameterError):
        distance_to_K(z, K, 0.5)


def test_level_grid_is_grid_exact():
    levels, ends, members = level_grid(2.0, 2 ** 12, 4)
    assert np.all(ends % 4 == 0) and ends[-1] <= 2 ** 12
    assert all(min(m) > 3 for m in members)
    with pytest.raises(ParameterError):
        level_grid(1.0, 100, 1)


def test_long_horizon_brownian_variance():
    nodes = np.array([0, 16, 1024])
    Y = simulate_long_horizon(BM, np.zeros(1), 64, 16, nodes, 4000, seed=3)
    v = Y.at(np.array([1024]))[:, 0, 0]
    assert abs(v.var() - 64) < 4 * 64 * np.sqrt(2 / 4000)
    with pytest.raises(DomainError):
        Y.at(np.array([17]))


def test_deterministic_model_collapses_to_rescaled_psi():
    rep = strassen_experiment("mfou", U=2 ** 12, c=2.0, n_traj=2, n_per_unit=8, n_z=8, u_per_level=4,
                              epsilon=0.0, x0=1.0, distances=False, min_levels=4)
    # psi is constant at the center, so every Z_u sits at the center
    assert np.all(rep.A == 0) and np.all(rep.sup_values == 1.0)
    rep = strassen_experiment("brownian", U=2 ** 12, c=2.0, n_traj=2, n_per_unit=8, n_z=8, u_per_level=4,
                              epsilon=0.0, min_levels=4)
    assert np.all(rep.d_alpha == 0.0)


def test_larger_c_gives_larger_A():
    kw = dict(U=2 ** 16, n_traj=32, n_per_unit=16, n_z=16, u_per_level=8, distances=False, min_levels=4,
              seed=11)
    small = strassen_experiment("brownian", c=1.5, **kw)
    big = strassen_experiment("brownian", c=4.0, **kw)
    assert np.median(big.A[:, -3:]) > np.median(small.A[:, -3:])


def test_insufficient_horizon():
    with pytest.raises(DomainError):
        strassen_experiment("brownian", U=64, n_traj=2, n_per_unit=8, n_z=8)
