"""Empirical measures on R^d, Wasserstein distances and the measure vector operations."""
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist

from .exceptions import DomainError, ParameterError, UnsupportedConfigurationError

ASSIGNMENT_CAP = 2048


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted particle cloud; atoms has shape (N, d)."""

    atoms: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        w = np.array(self.weights, dtype=float).ravel()
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[0] != w.size:
            raise DomainError("atoms must be (N, d) with one weight per atom")
        if not np.all(np.isfinite(a)):
            raise DomainError("atoms must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be nonnegative and sum to 1")
        a.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, atoms):
        a = np.asarray(atoms, dtype=float)
        n = a.shape[0]
        return cls(a, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, point):
        return cls(np.atleast_1d(np.asarray(point, dtype=float))[None, :], np.ones(1))

    @property
    def dim(self):
        return self.atoms.shape[1]

    @property
    def size(self):
        return self.atoms.shape[0]

    def is_uniform(self):
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self):
        return self.weights @ self.atoms

    def second_moment(self):
        return float(self.weights @ np.sum(self.atoms ** 2, axis=1))

    def pushforward(self, fn):
        """Law of fn(X); fn maps an (N, d) array row-wise."""
        return EmpiricalMeasure(fn(self.atoms), self.weights)


def _fast_uniform(atoms):
    # internal: skip validation for clouds produced by the solvers
    m = object.__new__(EmpiricalMeasure)
    object.__setattr__(m, "atoms", atoms)
    object.__setattr__(m, "weights", np.full(atoms.shape[0], 1.0 / atoms.shape[0]))
    return m


def _check_dims(mu, nu):
    if mu.dim != nu.dim:
        raise DomainError(f"dimension mismatch: {mu.dim} vs {nu.dim}")


def _quantile_coupling(xa, wa, xb, wb):
    """Pieces (x_i, y_j, mass) of the monotone coupling of two 1-d laws."""
    ia, ib = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, wa, xb, wb = xa[ia], wa[ia], xb[ib], wb[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    cuts = np.union1d(ca, cb)
    mass = np.diff(np.concatenate([[0.0], cuts]))
    mid = cuts - 0.5 * mass
    i = np.minimum(np.searchsorted(ca, mid), xa.size - 1)
    j = np.minimum(np.searchsorted(cb, mid), xb.size - 1)
    return xa[i], xb[j], mass


def _w2_sorted_uniform(a, b):
    """Batched 1-d W2 between equal-size uniform clouds along the last axis."""
    return np.sqrt(np.mean((np.sort(a, axis=-1) - np.sort(b, axis=-1)) ** 2, axis=-1))


def _assignment_cost(mu, nu, cost):
    n = mu.size
    if nu.size != n or not (mu.is_uniform() and nu.is_uniform()):
        raise UnsupportedConfigurationError(
            "exact transport in d >= 2 needs equal-size uniform clouds")
    if n > ASSIGNMENT_CAP:
        raise UnsupportedConfigurationError(
            f"assignment limited to {ASSIGNMENT_CAP} atoms; subsample explicitly")
    c = cost(cdist(mu.atoms, nu.atoms))
    r, s = linear_sum_assignment(c)
    return float(np.mean(c[r, s]))


def wasserstein2(mu, nu):
    """Exact W2 between two empirical measures."""
    _check_dims(mu, nu)
    if mu.size == 1 or nu.size == 1:
        # only one coupling exists
        d2 = np.sum((mu.atoms[:, None, :] - nu.atoms[None, :, :]) ** 2, axis=2)
        return float(np.sqrt(mu.weights @ d2 @ nu.weights))
    if mu.dim == 1 and mu.size == nu.size and mu.is_uniform() and nu.is_uniform():
        return float(_w2_sorted_uniform(mu.atoms[:, 0], nu.atoms[:, 0]))
    if mu.dim == 1:
        x, y, m = _quantile_coupling(mu.atoms[:, 0], mu.weights, nu.atoms[:, 0], nu.weights)
        return float(np.sqrt(np.sum(m * (x - y) ** 2)))
    return float(np.sqrt(_assignment_cost(mu, nu, np.square)))


def wasserstein2_assignment(mu, nu):
    """W2 through the assignment solver in any dimension (uniform equal-size clouds)."""
    _check_dims(mu, nu)
    return float(np.sqrt(_assignment_cost(mu, nu, np.square)))


def wasserstein2_to_dirac(mu, point):
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if p.size != mu.dim:
        raise DomainError("point dimension differs from the measure")
    return float(np.sqrt(mu.weights @ np.sum((mu.atoms - p) ** 2, axis=1)))


def modified_wasserstein(mu, nu, lp_cap=65536):
    """Transport cost with the truncated metric min(1, |x - y|).

    The truncated cost is not convex, so the monotone coupling is not optimal
    in general; equal uniform clouds use assignment, everything else the
    transport linear program.
    """
    _check_dims(mu, nu)
    trunc = lambda d: np.minimum(1.0, d)
    if mu.size == 1 or nu.size == 1:
        c = trunc(cdist(mu.atoms, nu.atoms))
        return float(mu.weights @ c @ nu.weights)
    if mu.size == nu.size and mu.is_uniform() and nu.is_uniform():
        return _assignment_cost(mu, nu, trunc)
    n, m = mu.size, nu.size
    if n * m > lp_cap:
        raise UnsupportedConfigurationError("transport program too large")
    c = trunc(cdist(mu.atoms, nu.atoms)).ravel()
    rows = np.kron(np.eye(n), np.ones(m))
    cols = np.kron(np.ones(n), np.eye(m))
    res = linprog(c, A_eq=np.vstack([rows, cols]), b_eq=np.concatenate([mu.weights, nu.weights]),
                  bounds=(0, None), method="highs")
    return float(min(1.0, max(0.0, res.fun)))


def measure_add(mu, nu):
    """Law of X + Y for independent X ~ mu, Y ~ nu (product cloud, no merging)."""
    _check_dims(mu, nu)
    atoms = (mu.atoms[:, None, :] + nu.atoms[None, :, :]).reshape(-1, mu.dim)
    w = np.outer(mu.weights, nu.weights).ravel()
    return EmpiricalMeasure(atoms, w / w.sum())


def measure_scale(c, mu):
    """Law of c X; c is a nonzero scalar or a vector of nonzero per-axis factors."""
    c = np.asarray(c, dtype=float)
    if np.any(c == 0) or not np.all(np.isfinite(c)):
        raise ParameterError("scaling factor must be finite and nonzero")
    return EmpiricalMeasure(mu.atoms * c, mu.weights)


def path_marginal(cloud, t):
    """Uniform measure on the time-t values of a path cloud.

    cloud is a sequence of Path objects or an array (N, n+1, d) on [0, 1].
    """
    if len(cloud) == 0:
        raise DomainError("empty path cloud")
    if hasattr(cloud[0], "values"):
        grid = cloud[0].grid
        if any(p.horizon != grid.horizon or p.n_steps != grid.n_steps for p in cloud):
            raise DomainError("paths must share a grid")
        k = grid.index_of(t)
        return EmpiricalMeasure.uniform(np.array([p.values[k] for p in cloud]))
    arr = np.asarray(cloud, dtype=float)
    if arr.ndim == 2:
        arr = arr[..., None]
    n = arr.shape[1] - 1
    k = int(np.clip(np.rint(t * n), 0, n))
    return EmpiricalMeasure.uniform(arr[:, k])


def sup_time_w2(cloud_a, cloud_b):
    """max over grid times of W2 between the time marginals of two path clouds.

    Clouds are arrays (N, n+1, d) with uniform weights.
    """
    a, b = np.asarray(cloud_a, dtype=float), np.asarray(cloud_b, dtype=float)
    if a.shape[1:] != b.shape[1:]:
        raise DomainError("clouds live on different grids")
    if a.shape[2] == 1 and a.shape[0] == b.shape[0]:
        return float(np.max(_w2_sorted_uniform(a[:, :, 0].T, b[:, :, 0].T)))
    return max(wasserstein2(_fast_uniform(a[:, k]), _fast_uniform(b[:, k]))
               for k in range(a.shape[1]))


def measure_to_csv(mu):
    buf = io.StringIO()
    buf.write(",".join(["weight"] + [f"x_{i + 1}" for i in range(mu.dim)]) + "\n")
    for w, row in zip(mu.weights, mu.atoms):
        buf.write(",".join(repr(float(v)) for v in (w, *row)) + "\n")
    return buf.getvalue()


def measure_from_csv(text):
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines[0].startswith("weight"):
        raise DomainError("measure CSV must start with a weight column")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return EmpiricalMeasure(data[:, 1:], data[:, 0])
