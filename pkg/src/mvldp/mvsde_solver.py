"""Interacting particles and Picard iteration for McKean-Vlasov SDEs."""
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .brownian import BrownianDriver
from .exceptions import DomainError, NonFiniteStateError, ParameterError
from .measure_ops import EmpiricalMeasure, _fast_uniform, sup_time_w2
from .path_space import Path, TimeGrid
from .rng import CounterStream

# the solver requests Brownian increments in blocks of this many replica-steps
_NOISE_BLOCK = 1 << 22


class GaussianInitialLaw:
    """Initial states mean + std * Z; every moment is finite."""

    moment_order = np.inf

    def __init__(self, mean, std):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.std = float(std)
        if self.std < 0:
            raise ParameterError("std must be nonnegative")

    @property
    def dim(self):
        return self.mean.size

    def sample(self, seed, replicas):
        z = CounterStream(seed, "initial").gaussian(replicas, self.dim)
        return self.mean + self.std * z


def initial_states(x0, n, dim, seed, replicas):
    """(n, d) initial cloud from a point, an explicit array or a sampler."""
    if hasattr(x0, "sample"):
        return np.asarray(x0.sample(seed, replicas), dtype=float)
    a = np.asarray(x0, dtype=float)
    if a.ndim == 2:
        if a.shape != (n, dim):
            raise DomainError(f"explicit initial cloud must have shape {(n, dim)}")
        return a.copy()
    a = np.atleast_1d(a)
    if a.size != dim:
        raise DomainError("initial point has the wrong dimension")
    return np.tile(a, (n, 1))


@dataclass(frozen=True, eq=False)
class ParticleSystem:
    """N particle paths on a shared grid; paths has shape (N, n+1, d)."""

    paths: np.ndarray = field(repr=False)
    grid: TimeGrid
    epsilon: float

    @property
    def n_particles(self):
        return self.paths.shape[0]

    def path(self, i):
        return Path(self.grid.horizon, self.paths[i])

    def marginal(self, t):
        return EmpiricalMeasure.uniform(self.paths[:, self.grid.index_of(t)])

    def terminal(self):
        return self.paths[:, -1]


def _noise_blocks(driver, replicas, n_steps):
    """Yield (k0, k1, dW[:, k0:k1]) blocks of Brownian increments."""
    width = max(1, min(n_steps, _NOISE_BLOCK // max(1, len(replicas) * driver.dim)))
    for k0 in range(0, n_steps, width):
        k1 = min(n_steps, k0 + width)
        yield k0, k1, driver.increments(replicas, k0, k1)


def tamed_euler(cs, start, grid, epsilon, driver, replicas, measure_at, record=True, record_at=None):
    """Tamed Euler recursion; measure_at(k, x_k) gives the law used at step k.

    Returns the (N, n+1, d) path array, the states at the sorted node indices
    record_at, or only the terminal states if record is False.
    """
    x = np.array(start, dtype=float)
    N, d = x.shape
    dt = grid.dt
    slots = None
    if record_at is not None:
        record_at = np.asarray(record_at, dtype=np.int64)
        slots = {int(k): i for i, k in enumerate(record_at)}
        out = np.empty((N, record_at.size, d))
        record = True
        if 0 in slots:
            out[:, slots[0]] = x
    elif record:
        out = np.empty((N, grid.n_steps + 1, d))
        out[:, 0] = x
    scale = np.sqrt(epsilon)
    blocks = _noise_blocks(driver, replicas, grid.n_steps) if epsilon > 0 else \
        [(0, grid.n_steps, None)]
    for k0, k1, dw in blocks:
        for k in range(k0, k1):
            t = k * dt
            mu = measure_at(k, x)
            b = cs.b(t, x, mu)
            nb = np.sqrt(np.sum(b * b, axis=1, keepdims=True))
            step = b * (dt / (1.0 + dt * nb))
            if epsilon > 0:
                sig = cs.sigma(t, x, mu)
                step = step + scale * np.einsum("nij,nj->ni", sig, dw[:, k - k0])
            x = x + step
            if not np.all(np.isfinite(x)):
                raise NonFiniteStateError(f"non-finite state at step {k + 1}", step=k + 1)
            if slots is not None:
                if k + 1 in slots:
                    out[:, slots[k + 1]] = x
            elif record:
                out[:, k + 1] = x
    return out if record else x


def simulate_particles(cs, x0, n_particles, grid, epsilon, seed, replicas=None,
                       tag="particles", record=True):
    """Interacting particle system driven by the empirical law of the cloud.

    replicas selects the noise streams (default 0..N-1); particle i uses the
    Brownian path keyed by replicas[i].
    """
    if n_particles < 1:
        raise ParameterError("need at least one particle")
    if epsilon < 0:
        raise ParameterError("epsilon must be nonnegative")
    reps = np.arange(n_particles) if replicas is None else np.asarray(replicas, dtype=np.int64)
    if reps.size != n_particles:
        raise DomainError("one replica index per particle")
    start = initial_states(x0, n_particles, cs.dim_x, seed, reps)
    driver = BrownianDriver(seed, cs.dim_w, grid.horizon, grid.n_steps, tag=tag)
    paths = tamed_euler(cs, start, grid, epsilon, driver, reps,
                        lambda k, x: _fast_uniform(x), record=record)
    if not record:
        return paths
    return ParticleSystem(paths, grid, float(epsilon))


def simulate_frozen(cs, x0, flow, grid, epsilon, seed, replicas, tag="particles", record=True):
    """Decoupled copies driven by a prescribed law flow; flow[k] is an EmpiricalMeasure."""
    reps = np.asarray(replicas, dtype=np.int64)
    start = initial_states(x0, reps.size, cs.dim_x, seed, reps)
    driver = BrownianDriver(seed, cs.dim_w, grid.horizon, grid.n_steps, tag=tag)
    return tamed_euler(cs, start, grid, epsilon, driver, reps, lambda k, x: flow[k], record=record)


@dataclass(frozen=True, eq=False)
class PicardSolution:
    iterations: int
    law_flow: list = field(repr=False)
    final_paths: np.ndarray = field(repr=False)
    convergence_trace: list
    converged: bool
    grid: TimeGrid = None

    def marginal(self, t, iteration=-1):
        return EmpiricalMeasure.uniform(self.law_flow[iteration][:, self.grid.index_of(t)])


def solve_picard(cs, x0, M, grid, epsilon, tol=1e-3, max_iter=20, seed=0, tag="picard",
                 keep_history=True):
    """Iterate Y^k with the law frozen at the previous iterate's M-path cloud.

    Every iteration reuses the same Brownian streams. law_flow[0] is the initial
    cloud held constant in time; trace[k-1] = sup_t W2(law_k(t), law_{k-1}(t)).
    """
    if M < 2:
        raise ParameterError("M must be >= 2")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    reps = np.arange(M)
    start = initial_states(x0, M, cs.dim_x, seed, reps)
    driver = BrownianDriver(seed, cs.dim_w, grid.horizon, grid.n_steps, tag=tag)
    dw = driver.increments(reps) if epsilon > 0 else None

    class _Cached:
        def increments(self, replicas, k0, k1):
            return dw[:, k0:k1]
        dim = driver.dim

    prev = np.repeat(start[:, None, :], grid.n_steps + 1, axis=1)
    history = [prev]
    trace = []
    converged = False
    for _ in range(max_iter):
        frozen = prev
        cur = tamed_euler(cs, start, grid, epsilon, _Cached(), reps,
                          lambda k, x: _fast_uniform(frozen[:, k]))
        trace.append(sup_time_w2(cur, prev))
        prev = cur
        if keep_history:
            history.append(cur)
        else:
            history = [history[0], cur]
        if trace[-1] <= tol:
            converged = True
            break
    return PicardSolution(len(trace), history, prev, trace, converged, grid)


def moment_diagnostic(ps, p):
    """Monte Carlo E[sup_t |Y(t)|^p] with its standard error."""
    if p not in (2, 4, 6, 8):
        raise ParameterError("p must be one of 2, 4, 6, 8")
    s = np.max(np.sum(ps.paths ** 2, axis=2), axis=1) ** (p / 2)
    return float(s.mean()), float(s.std(ddof=1) / np.sqrt(s.size)) if s.size > 1 else 0.0


def moment_bound(C, p, initial_moment, T):
    """Gronwall-type right side C (1 + E|Y0|^p) e^{C T}."""
    return C * (1.0 + initial_moment) * np.exp(C * T)


@dataclass(frozen=True)
class ContinuityFit:
    slope: float
    half_width: float
    intercept: float
    lags: np.ndarray
    mean_sq: np.ndarray


def continuity_diagnostic(ps, lags=None):
    """Least-squares slope of log E|Y(t+h) - Y(t)|^2 against log h.

    lags are step counts; the mean is over particles and all start nodes.
    """
    n = ps.grid.n_steps
    if lags is None:
        lags = sorted({int(k) for k in np.geomspace(1, max(1, n // 8), 8).round()})
    lags = np.asarray(sorted(set(int(k) for k in lags)))
    if lags.size < 5 or lags.min() < 1 or lags.max() > n:
        raise DomainError("need at least 5 distinct lags within the grid")
    msd = np.array([np.mean(np.sum((ps.paths[:, k:] - ps.paths[:, :-k]) ** 2, axis=2)) for k in lags])
    if np.any(msd <= 0):
        raise DomainError("degenerate lags: zero mean-square increment")
    x = np.log(lags * ps.grid.dt)
    y = np.log(msd)
    fit = stats.linregress(x, y)
    hw = float(stats.t.ppf(0.975, x.size - 2) * fit.stderr)
    return ContinuityFit(float(fit.slope), hw, float(fit.intercept), lags, msd)
