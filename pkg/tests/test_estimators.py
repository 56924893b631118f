import numpy as np
import pytest
from sklearn.base import clone

from mvldp.estimators import EventRateEstimator, ParticleSimulator, PathNormTransformer
from mvldp.exceptions import ParameterError


def test_particle_simulator_fit_transform():
    X = np.zeros((500, 1))
    sim = ParticleSimulator(model="mfou", epsilon=1.0, n_steps=32, seed=4).fit(X)
    flow = sim.law_flow()
    assert len(flow) == 33
    out = sim.transform(np.zeros((400, 1)))
    assert out.shape == (400, 1)
    # frozen-law copies share the fitted variance eps/2 (1 - e^{-2})
    assert out.var() == pytest.approx(0.5 * (1 - np.exp(-2)), rel=0.25)
    assert np.array_equal(out, clone(sim).fit(X).transform(np.zeros((400, 1))))
    with pytest.raises(ParameterError):
        sim.transform(np.zeros((3, 2)))


def test_path_norm_transformer():
    t = np.linspace(0, 1, 65)
    X = np.vstack([2 * t, np.sin(np.pi * t)])
    out = PathNormTransformer(alpha=0.25).fit_transform(X)
    assert out.shape == (2, 2)
    assert out[0, 0] == pytest.approx(2.0) and out[0, 1] == pytest.approx(2.0)
    assert np.all(out[:, 1] >= out[:, 0] - 1e-12)


def test_event_rate_estimator():
    est = EventRateEstimator(model="brownian", n_steps=32, starts=2).fit()
    vals = est.predict(["terminal:v=1,c=1", "terminal:v=1,c=0.5"])
    assert vals == pytest.approx([0.5, 0.125], rel=0.01)
