import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mvldp.exceptions import DomainError, ParameterError, UnsupportedConfigurationError
from mvldp.measure_ops import (EmpiricalMeasure, measure_add, measure_from_csv, measure_scale, measure_to_csv,
                               modified_wasserstein, path_marginal, sup_time_w2, wasserstein2,
                               wasserstein2_assignment, wasserstein2_to_dirac)
from mvldp.path_space import Path

U = EmpiricalMeasure.uniform
D = EmpiricalMeasure.dirac


def test_validation():
    with pytest.raises(DomainError):
        EmpiricalMeasure(np.zeros((2, 1)), [0.3, 0.3])
    with pytest.raises(DomainError):
        EmpiricalMeasure(np.zeros((2, 1)), [1.5, -0.5])


def test_w2_examples():
    assert wasserstein2(D([0.0]), D([1.0])) == pytest.approx(1.0)
    assert wasserstein2(U([[0.0], [2.0]]), U([[1.0], [3.0]])) == pytest.approx(1.0)
    assert wasserstein2_to_dirac(U([[-1.0], [1.0]]), [0.0]) == pytest.approx(1.0)
    assert wasserstein2_to_dirac(D([4.0]), [4.0]) == 0.0
    assert wasserstein2_to_dirac(U([[0.0], [2.0]]), [0.0]) == pytest.approx(np.sqrt(2))


def test_w2_weighted_one_dimensional():
    mu = EmpiricalMeasure([[0.0], [1.0]], [0.25, 0.75])
    nu = D([1.0])
    assert wasserstein2(mu, nu) == pytest.approx(0.5)


def test_w2_multidimensional_assignment_and_cap():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((20, 2)), rng.standard_normal((20, 2))
    perm = np.array([[np.sum((a[i] - b[j]) ** 2) for j in range(20)] for i in range(20)])
    from scipy.optimize import linear_sum_assignment
    r, c = linear_sum_assignment(perm)
    assert wasserstein2(U(a), U(b)) == pytest.approx(np.sqrt(perm[r, c].mean()), rel=1e-12)
    big = np.zeros((2049, 2))
    with pytest.raises(UnsupportedConfigurationError):
        wasserstein2_assignment(U(big), U(big))


def test_modified_wasserstein_examples():
    assert modified_wasserstein(D([0.0]), D([5.0])) == 1.0
    mu = U([[0.0], [0.4], [3.0]])
    assert modified_wasserstein(mu, mu) == pytest.approx(0.0, abs=1e-12)
    assert modified_wasserstein(D([0.0]), D([0.3])) == pytest.approx(0.3)


def test_modified_wasserstein_beats_monotone_coupling():
    # the truncated cost is concave in |x - y|, so crossing matchings can win
    mu = EmpiricalMeasure([[0.0], [0.9]], [0.5, 0.5])
    nu = EmpiricalMeasure([[0.5], [1.4], [5.0]], [0.2, 0.3, 0.5])
    lp = modified_wasserstein(mu, nu)
    assert 0 <= lp <= 1
    assert lp <= 0.5 * 1.0 + 0.2 * 0.4 + 0.3 * 0.5 + 1e-12


def test_measure_add_and_scale():
    mu = U([[1.0], [2.0]])
    s = measure_add(mu, D([0.0]))
    assert np.allclose(s.atoms, mu.atoms) and np.allclose(s.weights, mu.weights)
    assert np.allclose(measure_add(D([1.0]), D([2.0])).atoms, [[3.0]])
    s = measure_add(U([[0.0], [1.0]]), U([[0.0], [1.0]]))
    assert sorted(s.atoms.ravel()) == [0, 1, 1, 2] and np.allclose(s.weights, 0.25)
    assert np.allclose(measure_scale(1.0, mu).atoms, mu.atoms)
    assert np.allclose(measure_scale(2.0, D([3.0])).atoms, [[6.0]])
    assert np.allclose(measure_scale(-1.0, U([[0.0], [1.0]])).atoms.ravel(), [0.0, -1.0])
    with pytest.raises(ParameterError):
        measure_scale(0.0, mu)


def test_path_marginal():
    p = Path(1.0, np.linspace(0, 1, 5))
    m = path_marginal([p], 0.5)
    assert m.size == 1 and m.atoms[0, 0] == 0.5
    m = path_marginal([Path(1.0, np.zeros(5)), Path(1.0, np.full(5, 2.0))], 0.75)
    assert sorted(m.atoms.ravel()) == [0.0, 2.0]


def test_path_marginal_brownian_second_moment():
    from mvldp.brownian import BrownianDriver
    w = BrownianDriver(4, 1, 1.0, 64).path(np.arange(10000))
    m = path_marginal(w, 1.0)
    assert abs(np.sum(m.weights * m.atoms[:, 0] ** 2) - 1.0) <= 0.05


def test_sup_time_w2_matches_loop():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((30, 9, 1)), rng.standard_normal((30, 9, 1))
    loop = max(wasserstein2(U(a[:, k]), U(b[:, k])) for k in range(9))
    assert sup_time_w2(a, b) == pytest.approx(loop, rel=1e-12)


def test_csv_round_trip():
    mu = EmpiricalMeasure([[0.1, 2.0], [3.0, -1.0]], [0.25, 0.75])
    back = measure_from_csv(measure_to_csv(mu))
    assert np.array_equal(back.atoms, mu.atoms) and np.array_equal(back.weights, mu.weights)


clouds = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 3)),
                elements=st.floats(-20, 20, allow_nan=False))


@settings(max_examples=80, deadline=None)
@given(clouds, st.data())
def test_w2_metric_properties(a, data):
    b = data.draw(arrays(np.float64, a.shape, elements=st.floats(-20, 20, allow_nan=False)))
    c = data.draw(arrays(np.float64, a.shape, elements=st.floats(-20, 20, allow_nan=False)))
    ma, mb, mc = U(a), U(b), U(c)
    assert wasserstein2(ma, ma) == pytest.approx(0.0, abs=1e-9)
    assert wasserstein2(ma, mb) == pytest.approx(wasserstein2(mb, ma), rel=1e-9, abs=1e-9)
    assert wasserstein2(ma, mc) <= wasserstein2(ma, mb) + wasserstein2(mb, mc) + 1e-9
    assert 0 <= modified_wasserstein(ma, mb) <= 1


@settings(max_examples=60, deadline=None)
@given(clouds, st.floats(-3, 3))
def test_w2_to_dirac_closed_form(a, shift):
    p = np.full(a.shape[1], shift)
    mu = U(a)
    assert wasserstein2_to_dirac(mu, p) == pytest.approx(np.sqrt(np.mean(np.sum((a - p) ** 2, axis=1))),
                                                         rel=1e-12, abs=1e-12)
    assert wasserstein2(mu, D(p)) == pytest.approx(wasserstein2_to_dirac(mu, p), rel=1e-12, abs=1e-12)
