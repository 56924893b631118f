"""Discretized paths, Cameron-Martin controls and path-space norms."""
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from ._kernels import lag_max
from .exceptions import DomainError, ParameterError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k T / n on [0, T]."""

    horizon: float
    n_steps: int

    def __post_init__(self):
        if not self.horizon > 0 or not np.isfinite(self.horizon):
            raise ParameterError("horizon must be positive and finite")
        if int(self.n_steps) < 1:
            raise ParameterError("n_steps must be >= 1")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self):
        return self.horizon / self.n_steps

    @property
    def times(self):
        return np.arange(self.n_steps + 1) * self.dt

    def index_of(self, t):
        """Nearest node index to time t."""
        if t < -1e-12 or t > self.horizon * (1 + 1e-12):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
        return int(np.clip(np.rint(t / self.dt), 0, self.n_steps))


def _as_values(values):
    v = np.array(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] < 3:
        raise DomainError("path values must have shape (n+1, d) with n >= 2")
    if not np.all(np.isfinite(v)):
        raise DomainError("path values must be finite")
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class Path:
    """Continuous path sampled on a uniform grid, piecewise-linear in between."""

    horizon: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise ParameterError("horizon must be positive")
        object.__setattr__(self, "values", _as_values(self.values))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_steps(self):
        return self.values.shape[0] - 1

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def grid(self):
        return TimeGrid(self.horizon, self.n_steps)

    @property
    def times(self):
        return self.grid.times

    def __eq__(self, other):
        return (isinstance(other, Path) and self.horizon == other.horizon
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __sub__(self, other):
        _check_same_grid(self, other)
        return Path(self.horizon, self.values - other.values)

    def __add__(self, other):
        _check_same_grid(self, other)
        return Path(self.horizon, self.values + other.values)

    def __rmul__(self, c):
        return Path(self.horizon, float(c) * self.values)

    def prefix(self, t):
        """Node values on [0, t] with t snapped to the grid."""
        return self.values[: self.grid.index_of(t) + 1]


def _check_same_grid(a, b):
    if a.horizon != b.horizon or a.values.shape != b.values.shape:
        raise DomainError("paths live on different grids")


@dataclass(frozen=True, eq=False)
class CameronMartinPath:
    """h(t) = int_0^t hdot, with hdot constant on each of n cells."""

    horizon: float
    derivative: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.array(self.derivative, dtype=float)
        if d.ndim == 1:
            d = d[:, None]
        if d.ndim != 2 or d.shape[0] < 1 or not np.all(np.isfinite(d)):
            raise DomainError("derivative must be a finite (n, d') array")
        d.setflags(write=False)
        object.__setattr__(self, "derivative", d)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n_steps(self):
        return self.derivative.shape[0]

    @property
    def dim(self):
        return self.derivative.shape[1]

    @property
    def dt(self):
        return self.horizon / self.n_steps

    def energy(self):
        """||hdot||^2 in L^2(0, T)."""
        return float(np.sum(self.derivative ** 2) * self.dt)

    def to_path(self):
        return cm_to_path(self)

    @classmethod
    def zero(cls, horizon, n_steps, dim=1):
        return cls(horizon, np.zeros((n_steps, dim)))

    @classmethod
    def from_path(cls, path):
        """Cell-wise forward differences of a grid path starting at 0."""
        if np.any(path.values[0] != 0):
            raise DomainError("Cameron-Martin paths start at the origin")
        return cls(path.horizon, np.diff(path.values, axis=0) / path.grid.dt)


def cm_to_path(h):
    """Node values of a Cameron-Martin path."""
    v = np.zeros((h.n_steps + 1, h.dim))
    np.cumsum(h.derivative * h.dt, axis=0, out=v[1:])
    return Path(h.horizon, v)


# norms ----------------------------------------------------------------------

def _stack(paths):
    if isinstance(paths, Path):
        return paths.values[None], paths.horizon
    arr = np.asarray(paths, dtype=float)
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr, None


def sup_norm(path):
    """max_k |f(t_k)|."""
    return float(np.max(np.linalg.norm(path.values, axis=1)))


def sup_norm_batch(values):
    """Sup norms of a stack of paths with shape (P, n+1, d) or (P, n+1)."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        return np.max(np.abs(v), axis=1)
    return np.sqrt(np.max(np.sum(v * v, axis=2), axis=1))


def lag_maxima(values):
    """M[p, k-1] = max_i |f(t_{i+k}) - f(t_i)| for every lag k."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[..., None]
    return lag_max(np.ascontiguousarray(v))


def holder_from_lag_maxima(lagmax, dt, alpha):
    """Discrete alpha-Hölder seminorm from per-lag increment maxima."""
    lags = np.arange(1, lagmax.shape[-1] + 1) * dt
    return np.max(lagmax / lags ** alpha, axis=-1)


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")


def holder_norm(path, alpha):
    """Exact discrete Hölder quotient max over all grid pairs."""
    _check_alpha(alpha)
    return float(holder_from_lag_maxima(lag_maxima(path.values[None])[0], path.grid.dt, alpha))


def holder_norm_batch(values, dt, alpha):
    _check_alpha(alpha)
    return holder_from_lag_maxima(lag_maxima(values), dt, alpha)


def restricted_norms(path, t, alpha):
    """(sup, Hölder) norms of the path on [0, t]."""
    _check_alpha(alpha)
    v = path.prefix(t)
    sup = float(np.max(np.linalg.norm(v, axis=1)))
    if v.shape[0] < 2:
        return sup, 0.0
    return sup, float(holder_from_lag_maxima(lag_maxima(v[None])[0], path.grid.dt, alpha))


@dataclass(frozen=True)
class SchauderCoefficients:
    """W_pm for p = 0..levels, m = 1..2^p; coeffs[p] has shape (2^p, d).

    endpoint holds |f(T) - f(0)|, the coefficient of the linear basis element.
    """

    levels: int
    coeffs: tuple
    endpoint: np.ndarray

    @property
    def count(self):
        return sum(len(c) for c in self.coeffs)

    @property
    def flat(self):
        return np.concatenate(self.coeffs, axis=0)


def schauder_decompose(path, levels=None):
    """Dyadic second differences 2^{p/2} |2 f(mid) - f(left) - f(right)| on [0, T]."""
    n = path.n_steps
    top = int(np.log2(n)) - 1 if levels is None else int(levels)
    if top < 0 or n % 2 ** (top + 1):
        raise ParameterError("grid size must be a multiple of 2^(P+1)")
    v = path.values
    levels = []
    for p in range(top + 1):
        stride = n // 2 ** p
        left = v[0:n:stride]
        right = v[stride::stride]
        mid = v[stride // 2::stride]
        levels.append(2 ** (p / 2) * np.abs(2 * mid - left - right))
    return SchauderCoefficients(top, tuple(levels), np.abs(v[-1] - v[0]))


def schauder_holder_estimate(coeffs, alpha):
    """max(|f(T) - f(0)|, sup_{p,m} 2^{p(alpha - 1/2)} W_pm)."""
    _check_alpha(alpha)
    best = float(np.max(coeffs.endpoint))
    for p, c in enumerate(coeffs.coeffs):
        best = max(best, 2 ** (p * (alpha - 0.5)) * float(np.max(c)))
    return best


# serialization --------------------------------------------------------------

def path_to_csv(path):
    """CSV text with header t,x_1..x_d and round-trippable floats."""
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"x_{i + 1}" for i in range(path.dim)]) + "\n")
    for t, row in zip(path.times, path.values):
        buf.write(",".join(repr(float(x)) for x in (t, *row)) + "\n")
    return buf.getvalue()


def path_from_csv(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[0] != "t" or len(header) < 2:
        raise DomainError("path CSV must start with a t column")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    if data.shape[0] < 2:
        raise DomainError("path CSV needs at least two rows")
    t = data[:, 0]
    n = len(t) - 1
    if not np.allclose(t, np.arange(n + 1) * (t[-1] / n), rtol=1e-12, atol=1e-12):
        raise DomainError("path CSV time column is not a uniform grid")
    return Path(t[-1], data[:, 1:])


_HEADER = struct.Struct("<dqq")


def path_to_bytes(path):
    """Binary layout: T (f64), n (i64), d (i64), then (n+1) x d f64 row-major."""
    return _HEADER.pack(path.horizon, path.n_steps, path.dim) + np.ascontiguousarray(
        path.values, dtype="<f8").tobytes()


def path_from_bytes(blob):
    T, n, d = _HEADER.unpack_from(blob)
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if body.size != (n + 1) * d:
        raise DomainError("binary path payload has the wrong length")
    return Path(T, body.reshape(n + 1, d))


def write_path(path, filename):
    if str(filename).endswith(".csv"):
        with open(filename, "w") as fh:
            fh.write(path_to_csv(path))
    else:
        with open(filename, "wb") as fh:
            fh.write(path_to_bytes(path))


def read_path(filename):
    if str(filename).endswith(".csv"):
        with open(filename) as fh:
            return path_from_csv(fh.read())
    with open(filename, "rb") as fh:
        return path_from_bytes(fh.read())
