import numpy as np
import pytest

from mvldp.exceptions import DomainError, ParameterError
from mvldp.measure_ops import EmpiricalMeasure
from mvldp.model import (LIBRARY, CoefficientSet, EpsilonFamily, brownian, get_model, linear_drift, probe_all,
                         probe_lipschitz_sigma, probe_monotonicity, probe_uniform_convergence)


def scalar(name, b, s, L=1.0, q=2):
    return CoefficientSet(name, 1, 1, lambda t, x, mu: b(x), lambda t, x, mu: s(x)[:, :, None], L, q)


def test_builtins_pass_all_probes():
    for name, entry in LIBRARY.items():
        for rep in probe_all(entry.coefficients, samples=2000):
            assert rep.passed, (name, rep)


def test_monotonicity_examples():
    cubic = scalar("cubic", lambda x: -x ** 3, lambda x: np.ones_like(x), L=1e-12)
    assert probe_monotonicity(cubic, 2000).statistic <= 0
    square = scalar("square", lambda x: x ** 2, lambda x: np.ones_like(x), L=1.0)
    rep = probe_monotonicity(square, 2000)
    assert not rep.passed and rep.statistic > 1
    lin = linear_drift(k=0.7)
    assert probe_monotonicity(lin, 500).statistic == pytest.approx(0.7)


def test_sigma_lipschitz_examples():
    const = scalar("c", lambda x: -x, lambda x: 2 * np.ones_like(x))
    assert probe_lipschitz_sigma(const, 1000).statistic == 0.0
    sine = scalar("sin", lambda x: -x, np.sin)
    assert probe_lipschitz_sigma(sine, 2000).passed
    sq = scalar("sq", lambda x: -x, lambda x: x ** 2)
    assert not probe_lipschitz_sigma(sq, 2000).passed


def test_uniform_convergence_examples():
    base = get_model("mfou").coefficients
    assert probe_uniform_convergence(EpsilonFamily.constant(base), [0.5, 0.1], 200).gaps == (0.0, 0.0)
    fam = EpsilonFamily.drift_offset(base, lambda t, x, mu: np.ones_like(x), 1.0)
    rep = probe_uniform_convergence(fam, [0.5, 0.1], 200)
    assert rep.passed and rep.gaps == pytest.approx((0.5, 0.1))
    fam = EpsilonFamily.drift_offset(base, lambda t, x, mu: np.sin(x), 1.0)
    rep = probe_uniform_convergence(fam, [0.5, 0.1], 2000)
    assert rep.passed and rep.gaps[0] == pytest.approx(0.5, rel=0.01)


def test_jacobian_fallback_matches_analytic():
    cs = get_model("double_well").coefficients
    x = np.array([[0.3], [-1.2]])
    mu = EmpiricalMeasure.uniform(x)
    fd = CoefficientSet("fd", 1, 1, cs.drift, cs.diffusion, 2.0, 3)
    assert np.allclose(fd.b_jac(0.0, x, mu), cs.b_jac(0.0, x, mu), atol=1e-6)


def test_validation_and_lookup():
    with pytest.raises(ParameterError):
        CoefficientSet("bad", 1, 1, None, None, -1.0, 2)
    with pytest.raises(DomainError):
        get_model("nope")
    assert brownian(2).pure_noise
