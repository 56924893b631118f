import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvldp.events import parse_event
from mvldp.exceptions import ConfigError
from mvldp.path_space import Path, holder_norm

SPECS = ["terminal:v=1.0,c=0.5", "exit:R=1.2,center=zero", "tube:r=0.4,center=psi",
         "holder-ball:alpha=0.3,r=2.0,center=psi", "holder-out:alpha=0.25,r=1.0,center=zero"]


@pytest.mark.parametrize("spec", SPECS)
def test_roundtrip(spec):
    ev = parse_event(spec)
    assert parse_event(ev.to_string()).to_string() == ev.to_string()


@pytest.mark.parametrize("bad", ["nope:r=1", "exit:R=1,foo=2", "terminal:v=1", "tube:r=x", "exit:R=1,center=mid"])
def test_bad_specs(bad):
    with pytest.raises(ConfigError):
        parse_event(bad)


def test_membership():
    t = np.linspace(0, 1, 33)[:, None]
    dt = 1 / 32
    psi = np.zeros_like(t)
    line = 1.5 * t
    assert parse_event("terminal:v=1,c=1.5").contains(line, dt)
    assert not parse_event("terminal:v=1,c=1.6").contains(line, dt)
    assert parse_event("exit:R=1.5,center=zero").contains(line, dt)
    assert not parse_event("tube:r=1.0,center=psi").contains(line, dt, psi)
    hn = holder_norm(Path(1.0, line), 0.3)
    assert parse_event(f"holder-ball:alpha=0.3,r={hn + 1e-9},center=psi").contains(line, dt, psi)
    assert parse_event(f"holder-out:alpha=0.3,r={hn - 1e-9},center=psi").contains(line, dt, psi)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=17, max_size=17), st.sampled_from(SPECS), st.sampled_from([1e-1, 1e-3]))
def test_smooth_surrogate_is_conservative(vals, spec, tau):
    v = np.asarray(vals)[:, None]
    v[0] = 0.0
    dt = 1 / 16
    psi = np.zeros_like(v)
    ev = parse_event(spec)
    g, dg = ev.smooth(v, dt, psi, tau)
    assert dg.shape == v.shape
    if g <= 0:
        assert ev.contains(v, dt, psi)
