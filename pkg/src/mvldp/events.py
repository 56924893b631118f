"""Parametric path events: parsing, exact membership and smooth surrogates.

A smooth surrogate g(f) is conservative: g(f) <= 0 implies f is in the event.
"""
import numpy as np
from scipy.special import logsumexp, softmax

from ._kernels import lag_max
from .exceptions import ConfigError, ParameterError


def _vector(text):
    return np.array([float(v) for v in str(text).split(";")])


class EventSpec:
    """Base class; subclasses set family and implement the three evaluators."""

    family = ""
    keys = ()

    def __init__(self, **params):
        self.params = params

    def __repr__(self):
        return self.to_string()

    def to_string(self):
        def fmt(v):
            if isinstance(v, np.ndarray):
                return ";".join(repr(float(x)) for x in v)
            return repr(v) if isinstance(v, float) else str(v)
        body = ",".join(f"{k}={fmt(self.params[k])}" for k in self.keys)
        return f"{self.family}:{body}"

    def center(self, psi, n_nodes, dim):
        c = self.params.get("center", "psi")
        if c == "zero":
            return np.zeros((n_nodes, dim))
        if psi is None:
            raise ParameterError("event centered at psi needs the psi path")
        return np.asarray(psi, dtype=float).reshape(n_nodes, dim)

    # exact membership for one path (n+1, d)
    def contains(self, values, dt, psi=None):
        return bool(self.contains_batch(np.asarray(values)[None], dt, psi)[0])

    def contains_batch(self, values, dt, psi=None):
        raise NotImplementedError

    def smooth(self, values, dt, psi=None, tau=1e-4):
        """(g, dg/dvalues) for one path; g <= 0 implies membership."""
        raise NotImplementedError

    @property
    def scale(self):
        """Natural size of the constraint function, used to set temperatures."""
        return 1.0


class TerminalEvent(EventSpec):
    """f(T) . v >= c"""

    family = "terminal"
    keys = ("v", "c")

    def __init__(self, v, c):
        super().__init__(v=np.atleast_1d(np.asarray(v, dtype=float)), c=float(c))

    def contains_batch(self, values, dt, psi=None):
        return values[:, -1] @ self.params["v"] >= self.params["c"]

    def smooth(self, values, dt, psi=None, tau=1e-4):
        v = self.params["v"]
        grad = np.zeros_like(values)
        grad[-1] = -v
        return self.params["c"] - values[-1] @ v, grad

    @property
    def scale(self):
        return max(abs(self.params["c"]), 1e-3)


class _SquaredEvent(EventSpec):
    def _radius(self):
        return self.params["R"] if "R" in self.params else self.params["r"]

    @property
    def scale(self):
        return max(self._radius() ** 2, 1e-8)


class ExitEvent(_SquaredEvent):
    """sup_t |f(t) - center(t)| >= R (center defaults to zero)."""

    family = "exit"
    keys = ("R", "center")

    def __init__(self, R, center="zero"):
        if not R > 0:
            raise ParameterError("R must be positive")
        super().__init__(R=float(R), center=center)

    def contains_batch(self, values, dt, psi=None):
        e = values - self.center(psi, values.shape[1], values.shape[2])
        return np.max(np.sum(e * e, axis=2), axis=1) >= self.params["R"] ** 2

    def smooth(self, values, dt, psi=None, tau=1e-4):
        e = values - self.center(psi, *values.shape)
        s = np.sum(e * e, axis=1)
        t = tau * self.scale
        lse = t * logsumexp(s / t) - t * np.log(s.size)
        return self.params["R"] ** 2 - lse, -(softmax(s / t)[:, None] * 2 * e)


class TubeEvent(_SquaredEvent):
    """sup_t |f(t) - center(t)| <= r (center defaults to psi)."""

    family = "tube"
    keys = ("r", "center")

    def __init__(self, r, center="psi"):
        if not r > 0:
            raise ParameterError("r must be positive")
        super().__init__(r=float(r), center=center)

    def contains_batch(self, values, dt, psi=None):
        e = values - self.center(psi, values.shape[1], values.shape[2])
        return np.max(np.sum(e * e, axis=2), axis=1) <= self.params["r"] ** 2

    def smooth(self, values, dt, psi=None, tau=1e-4):
        e = values - self.center(psi, *values.shape)
        s = np.sum(e * e, axis=1)
        t = tau * self.scale
        return t * logsumexp(s / t) - self.params["r"] ** 2, softmax(s / t)[:, None] * 2 * e


class _HolderEvent(_SquaredEvent):
    keys = ("alpha", "r", "center")

    def __init__(self, alpha, r, center="psi"):
        if not 0 < alpha < 0.5:
            raise ParameterError("alpha must lie in (0, 1/2)")
        if not r > 0:
            raise ParameterError("r must be positive")
        super().__init__(alpha=float(alpha), r=float(r), center=center)

    def _norms(self, values, dt, psi):
        e = values - self.center(psi, values.shape[1], values.shape[2])
        lm = lag_max(np.ascontiguousarray(e))
        lags = np.arange(1, lm.shape[1] + 1) * dt
        return np.max(lm / lags ** self.params["alpha"], axis=1)

    def _quotients(self, values, dt, psi):
        e = values - self.center(psi, *values.shape)
        n = e.shape[0]
        i, j = np.triu_indices(n, 1)
        diff = e[j] - e[i]
        w = ((j - i) * dt) ** (-2 * self.params["alpha"])
        return i, j, diff, w * np.sum(diff * diff, axis=1), w

    def _lse_grad(self, values, dt, psi, tau):
        i, j, diff, q, w = self._quotients(values, dt, psi)
        t = tau * self.scale
        lse = t * logsumexp(q / t)
        p = softmax(q / t)
        coef = (2 * p * w)[:, None] * diff
        grad = np.zeros_like(values)
        np.add.at(grad, j, coef)
        np.add.at(grad, i, -coef)
        return lse, grad, t * np.log(q.size)


class HolderBallEvent(_HolderEvent):
    """||f - center||_alpha <= r"""

    family = "holder-ball"

    def contains_batch(self, values, dt, psi=None):
        return self._norms(values, dt, psi) <= self.params["r"]

    def smooth(self, values, dt, psi=None, tau=1e-4):
        lse, grad, _ = self._lse_grad(values, dt, psi, tau)
        return lse - self.params["r"] ** 2, grad


class HolderOutEvent(_HolderEvent):
    """||f - center||_alpha >= r"""

    family = "holder-out"

    def contains_batch(self, values, dt, psi=None):
        return self._norms(values, dt, psi) >= self.params["r"]

    def smooth(self, values, dt, psi=None, tau=1e-4):
        lse, grad, shift = self._lse_grad(values, dt, psi, tau)
        return self.params["r"] ** 2 - (lse - shift), -grad


FAMILIES = {cls.family: cls for cls in (TerminalEvent, ExitEvent, TubeEvent, HolderBallEvent, HolderOutEvent)}


def parse_event(text):
    """Parse 'family:key=value,...'; vector values use ';' between components."""
    if isinstance(text, EventSpec):
        return text
    try:
        family, _, body = str(text).strip().partition(":")
        cls = FAMILIES[family]
    except KeyError:
        raise ConfigError(f"unknown event family '{text}'; choose from {sorted(FAMILIES)}") from None
    params = {}
    for item in filter(None, body.split(",")):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in cls.keys:
            raise ConfigError(f"unknown event key '{key}' for family {family}")
        params[key] = val.strip()
    try:
        if cls is TerminalEvent:
            return cls(_vector(params["v"]), float(params["c"]))
        kw = {k: (v if k == "center" else float(v)) for k, v in params.items()}
        if kw.get("center", "zero") not in ("psi", "zero"):
            raise ConfigError("center must be psi or zero")
        return cls(**kw)
    except KeyError as exc:
        raise ConfigError(f"event {family} is missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad event specification '{text}': {exc}") from None
