"""Contraction systems, rescaled long-horizon paths and the iterated-log limit set.

Z_u(t) = Gamma_{phi(u)}(Y(u t)) with phi(u) = sqrt(u log log u).  The limit set
K = {Phi(h) : ||hdot||^2 <= 2} is explored by optimization only, so every
reported distance to K is an upper bound.
"""
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .brownian import BrownianDriver
from .exceptions import DomainError, ParameterError, UnsupportedConfigurationError
from .measure_ops import _fast_uniform
from .model import CoefficientSet, ModelLibraryEntry, get_model
from .mvsde_solver import initial_states, tamed_euler
from .path_space import Path, TimeGrid, holder_norm_batch
from .rng import CounterStream, parallel_map
from .skeleton_rate import DiracFlow, _integrate

ENERGY_MAX = 2.0


def phi(u):
    """sqrt(u log log u), defined for u > 3."""
    u = float(u)
    if not u > 3:
        raise ParameterError("phi(u) needs u > 3")
    return math.sqrt(u * math.log(math.log(u)))


# contraction systems ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ContractionSystem:
    """A family of maps Gamma_a on R^d fixing center; apply(a, y) acts on (N, d) rows.

    jacobian(a, y) -> (N, d, d) and hessian(a, y) -> (N, d, d, d) with entry
    [n, i, j, k] = d^2 Gamma_i / dy_j dy_k are needed for transformed_coefficients.
    """

    center: np.ndarray
    apply: Callable
    jacobian: Optional[Callable] = None
    hessian: Optional[Callable] = None
    is_linear: bool = False
    name: str = "custom"

    def __post_init__(self):
        c = np.atleast_1d(np.array(self.center, dtype=float))
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.center.size

    def __call__(self, a, y):
        if not a > 0:
            raise ParameterError("contraction index must be positive")
        y = np.asarray(y, dtype=float)
        shape = y.shape
        return np.asarray(self.apply(a, y.reshape(-1, self.dim)), dtype=float).reshape(shape)


def linear_contraction(center=0.0):
    """Gamma_a(y) = (y - x) / a + x."""
    x = np.atleast_1d(np.array(center, dtype=float))
    d = x.size

    def apply(a, y):
        return (y - x) / a + x

    def jac(a, y):
        return np.broadcast_to(np.eye(d) / a, (y.shape[0], d, d)).copy()

    def hess(a, y):
        return np.zeros((y.shape[0], d, d, d))

    return ContractionSystem(x, apply, jac, hess, is_linear=True, name="linear")


@dataclass(frozen=True)
class ContractionProbe:
    name: str
    checks: dict
    samples: int

    @property
    def passed(self):
        return all(ok for _, ok in self.checks.values())

    def as_dict(self):
        return {"name": self.name, "samples": self.samples, "passed": self.passed,
                "checks": {k: {"worst": w, "passed": ok} for k, (w, ok) in self.checks.items()}}


def probe_contraction(gamma, samples=1000, box_radius=5.0, seed=0, tol=1e-10):
    """Random checks of the contraction-system axioms.

    Center fixed and Gamma_1 = id on log-uniform indices; inversion
    Gamma_a(Gamma_{1/a}(y)) = y; second differences of Gamma_a dominated by
    those of Gamma_b whenever a >= b.
    """
    st = CounterStream(seed, f"contraction:{gamma.name}")
    d = gamma.dim
    x = gamma.center
    u = st.uniforms(np.arange(samples), np.arange(1), block=0)[:, 0, :]
    a = np.exp(u[:, 0] * np.log(1e6 / 1e-3) + np.log(1e-3))
    b = np.exp(u[:, 1] * np.log(1e6 / 1e-3) + np.log(1e-3))
    a, b = np.maximum(a, b), np.minimum(a, b)
    pts = box_radius * (2 * st.uniforms(np.arange(samples), np.arange(2 * d), block=1).reshape(samples, 4 * d) - 1)
    y1, y2, z1, z2 = (x + pts[:, i * d:(i + 1) * d] for i in range(4))
    scale = 1.0 + np.abs(x).max() + box_radius

    fixed = max(float(np.max(np.abs(gamma.apply(ai, x[None]) - x))) for ai in a)
    ident = float(np.max(np.abs(gamma.apply(1.0, y1) - y1)))
    inv_idx = np.exp(u[:, 0] * np.log(1e4) - np.log(1e2))
    inv = max(float(np.max(np.abs(gamma.apply(ai, gamma.apply(1.0 / ai, y1[i:i + 1])) - y1[i:i + 1])))
              for i, ai in enumerate(inv_idx))

    def second(idx):
        out = np.empty(samples)
        for i, ai in enumerate(idx):
            q = gamma.apply(ai, np.stack([y1[i], y2[i], z1[i], z2[i]]))
            out[i] = np.linalg.norm(q[0] - q[1] - q[2] + q[3])
        return out

    lhs, rhs = second(a), second(b)
    excess = float(np.max(lhs - rhs - 1e-12 * (1 + rhs)))
    checks = {
        "center_fixed": (fixed, fixed <= tol * scale),
        "identity_at_one": (ident, ident <= tol * scale),
        "inversion": (inv, inv <= tol * scale),
        "second_difference": (max(excess, 0.0), excess <= 0.0),
    }
    return ContractionProbe(gamma.name, checks, samples)


# long-horizon paths and rescaling ----------------------------------------------

@dataclass(frozen=True, eq=False)
class LongHorizonSample:
    """Values of R trajectories of Y on [0, U] at a sorted subset of grid nodes."""

    horizon: float
    n_per_unit: int
    nodes: np.ndarray
    values: np.ndarray

    @property
    def n_steps(self):
        return int(round(self.horizon * self.n_per_unit))

    def at(self, index):
        index = np.asarray(index, dtype=np.int64)
        pos = np.searchsorted(self.nodes, index)
        if np.any(pos >= self.nodes.size) or np.any(self.nodes[np.minimum(pos, self.nodes.size - 1)] != index):
            raise DomainError("requested node was not recorded")
        return self.values[:, pos]


def _steps_per_unit(y):
    if isinstance(y, LongHorizonSample):
        return y.n_per_unit
    spu = y.n_steps / y.horizon
    if abs(spu - round(spu)) > 1e-9:
        raise DomainError("long-horizon grid needs an integer number of steps per unit time")
    return int(round(spu))


def grid_unit(n_per_unit, n_z):
    """Smallest integer u step for which u t_k lands on the long grid for every t_k = k/n_z."""
    return n_z // math.gcd(n_z, n_per_unit)


def rescale_nodes(u, n_per_unit, n_z):
    num = int(round(u)) * n_per_unit
    if abs(u - round(u)) > 1e-12 or num % n_z:
        raise DomainError(f"u={u} is not grid-compatible; use multiples of {grid_unit(n_per_unit, n_z)}")
    return np.arange(n_z + 1, dtype=np.int64) * (num // n_z)


def rescale(gamma, y, u, n_z=64):
    """Z_u on [0, 1] with n_z steps: Z_u(t_k) = Gamma_{phi(u)}(Y(u t_k)).

    y is a Path on [0, U] or a LongHorizonSample (returns one Path per
    trajectory).  u must be grid-compatible so no interpolation is needed.
    """
    a = phi(u)
    if u > y.horizon * (1 + 1e-12):
        raise DomainError("u exceeds the simulated horizon")
    idx = rescale_nodes(u, _steps_per_unit(y), n_z)
    if isinstance(y, LongHorizonSample):
        vals = gamma(a, y.at(idx))
        return [Path(1.0, v) for v in vals]
    return Path(1.0, gamma(a, y.values[idx]))


@dataclass(frozen=True, eq=False)
class RescaledFamily:
    base: object
    u_values: tuple
    rescaled: dict = field(repr=False)


def rescaled_family(gamma, y, u_values, n_z=64):
    return RescaledFamily(y, tuple(u_values), {u: rescale(gamma, y, u, n_z) for u in u_values})


def simulate_long_horizon(cs, x, U, n_per_unit, nodes, n_traj, seed, epsilon=1.0, tag="strassen"):
    """Y on [0, U] recorded at the given grid nodes for n_traj trajectories.

    Pure-noise models are sampled exactly at the requested nodes through the
    bridge driver; other models run the tamed Euler particle scheme over the
    whole grid with the trajectories as the interacting cloud.
    """
    n_steps = int(round(U * n_per_unit))
    if abs(U * n_per_unit - n_steps) > 1e-9 or n_steps < 1:
        raise ParameterError("U * n_per_unit must be a positive integer")
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    reps = np.arange(n_traj)
    start = initial_states(x, n_traj, cs.dim_x, seed, reps)
    driver = BrownianDriver(seed, cs.dim_w, float(U), n_steps, tag=tag)
    if cs.pure_noise:
        sig = cs.sigma(0.0, start[:1], _fast_uniform(start))[0]
        w = driver.values(reps, nodes)
        vals = start[:, None, :] + math.sqrt(epsilon) * np.einsum("ij,rkj->rki", sig, w)
    else:
        grid = TimeGrid(float(U), n_steps)
        vals = tamed_euler(cs, start, grid, epsilon, driver, reps,
                           lambda k, xk: _fast_uniform(xk), record_at=nodes)
    return LongHorizonSample(float(U), int(n_per_unit), nodes, vals)


# transformed coefficients -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransformedCoefficients:
    u: float
    points: np.ndarray
    sigma_hat: np.ndarray
    b_hat: np.ndarray
    sigma_limit: Optional[np.ndarray] = None
    b_limit: Optional[np.ndarray] = None
    specialization_error: Optional[float] = None

    def limit_errors(self):
        if self.sigma_limit is None:
            return None
        return (float(np.max(np.abs(self.sigma_hat - self.sigma_limit))),
                float(np.max(np.abs(self.b_hat - self.b_limit))))


def declared_limits(gamma, cs):
    """(b_hat, sigma_hat) for systems with a known limit, else None.

    The linear system applied to a pure-noise model leaves sigma unchanged and
    kills the drift; other combinations need user-supplied limits.
    """
    if gamma.is_linear and cs.pure_noise:
        def b_hat(t, y, mu):
            return np.zeros_like(y)

        def s_hat(t, y, mu):
            return cs.sigma(t, y, mu)
        return b_hat, s_hat
    return None


def transformed_coefficients(gamma, cs, u, probe_points, measure=None, t=0.0, limit=None):
    """sigma_hat_u = a J sigma and b_hat_u = u (J b + 0.5 H : sigma sigma^T) at Gamma_{1/a} y, a = phi(u).

    measure is the law on the Z scale (default: uniform on the probe points);
    its preimage under Gamma_a feeds the coefficients.
    """
    if gamma.jacobian is None or gamma.hessian is None:
        raise UnsupportedConfigurationError("contraction system must provide first and second derivatives")
    a = phi(u)
    y = np.atleast_2d(np.asarray(probe_points, dtype=float))
    if y.shape[1] != cs.dim_x or gamma.dim != cs.dim_x:
        raise DomainError("probe points, contraction and model dimensions differ")
    mu = _fast_uniform(y) if measure is None else measure
    pre = gamma(1.0 / a, y)
    mu_pre = mu.pushforward(lambda z: gamma(1.0 / a, z))
    J = np.asarray(gamma.jacobian(a, pre), dtype=float)
    H = np.asarray(gamma.hessian(a, pre), dtype=float)
    sig = cs.sigma(t, pre, mu_pre)
    b = cs.b(t, pre, mu_pre)
    s_hat = a * np.einsum("nij,njk->nik", J, sig)
    diff = np.einsum("nik,njk->nij", sig, sig)
    b_hat = u * (np.einsum("nij,nj->ni", J, b) + 0.5 * np.einsum("nijk,njk->ni", H, diff))

    spec_err = None
    if gamma.is_linear and np.all(gamma.center == 0):
        direct_b = (u / a) * cs.b(t, a * y, mu_pre)
        spec_err = float(np.max(np.abs(b_hat - direct_b)))
        sig_const = np.allclose(sig, sig[:1], rtol=0, atol=0)
        if sig_const:
            spec_err = max(spec_err, float(np.max(np.abs(s_hat - sig))))
    lim = declared_limits(gamma, cs) if limit is None else limit
    s_lim = b_lim = None
    if lim is not None:
        b_lim = np.asarray(lim[0](t, y, mu), dtype=float)
        s_lim = np.asarray(lim[1](t, y, mu), dtype=float)
    return TransformedCoefficients(float(u), y, s_hat, b_hat, s_lim, b_lim, spec_err)


def coefficient_convergence(gamma, cs, u_values, probe_points, limit=None):
    """Sup errors |sigma_hat_u - sigma_hat|, |b_hat_u - b_hat| along increasing u."""
    rows = []
    for u in sorted(u_values):
        rep = transformed_coefficients(gamma, cs, u, probe_points, limit=limit)
        errs = rep.limit_errors()
        if errs is None:
            raise UnsupportedConfigurationError("no declared limit for this system and model")
        rows.append((float(u),) + errs)
    arr = np.array(rows)
    tail = arr[-1, 1:]
    converged = bool(np.all(np.diff(arr[:, 1]) <= 1e-12) and np.all(np.diff(arr[:, 2]) <= 1e-12)
                     and np.all(tail < 1e-6 + 0.5 * (arr[0, 1:] + 1e-300)))
    return arr, converged


# the limit set K ------------------------------------------------------------------

class LimitSetK:
    """{Phi(h) : ||hdot||^2 <= 2} for the skeleton of (b_hat, sigma_hat) started at x."""

    def __init__(self, generator, x, horizon=1.0, energy_max=ENERGY_MAX):
        self.generator = generator
        self.x = np.atleast_1d(np.asarray(x, dtype=float))
        self.horizon = float(horizon)
        self.energy_max = float(energy_max)
        self.members = []
        self._flows = {}

    @classmethod
    def for_model(cls, cs, gamma, limit=None):
        lim = declared_limits(gamma, cs) if limit is None else limit
        if lim is None:
            raise UnsupportedConfigurationError("no declared (b_hat, sigma_hat); pass limit=(b_hat, sigma_hat)")
        gen = CoefficientSet(f"{cs.name}_limit", cs.dim_x, cs.dim_w, lim[0], lim[1],
                             cs.lipschitz_L, cs.poly_degree_q, cs.diffusion_bound_M,
                             pure_noise=cs.pure_noise and gamma.is_linear)
        return cls(gen, gamma.center)

    def flow(self, n):
        if n not in self._flows:
            self._flows[n] = DiracFlow(self.generator, self.x, TimeGrid(self.horizon, n))
        return self._flows[n]

    def skeleton(self, h):
        """Phi(h) node values for a CameronMartinPath h."""
        return _integrate(self.generator, self.flow(h.n_steps), h.derivative, h.n_steps)[0]

    def add_member(self, h):
        if h.energy() > self.energy_max * (1 + 1e-12):
            raise DomainError("member violates the energy constraint")
        p = Path(self.horizon, self.skeleton(h))
        self.members.append(p)
        return p


@dataclass(frozen=True, eq=False)
class DistanceResult:
    value: float
    control: np.ndarray
    upper_bound: bool = True
    exhausted: bool = False
    iterations: int = 0


def _project(z, cell, emax):
    en = cell * float(z @ z)
    return z if en <= emax else z * math.sqrt(emax / en)


class _HolderObjective:
    """tau S log sum exp(q_ij / (tau S)) of squared Hölder quotients of z - Phi(h)."""

    def __init__(self, K, z, alpha):
        self.K = K
        self.z = z.values
        n = z.n_steps
        self.n, self.dt = n, z.grid.dt
        self.dw = K.generator.dim_w
        i, j = np.triu_indices(n + 1, 1)
        self.i, self.j = i, j
        self.wq = 1.0 / ((j - i) * self.dt) ** (2 * alpha)
        self.alpha = alpha
        self.linear = K.generator.pure_noise
        if self.linear:
            self.sig = K.generator.sigma(0.0, K.x[None], _fast_uniform(K.x[None]))[0]
        else:
            self.flow = K.flow(n)
        self.tau = 1e-1
        self.scale = 1.0

    def values(self, u):
        c = u.reshape(self.n, self.dw)
        if self.linear:
            v = np.empty((self.n + 1, self.K.x.size))
            v[0] = self.K.x
            v[1:] = self.K.x + np.cumsum(c @ self.sig.T, axis=0) * self.dt
            return v, None
        v, S = _integrate(self.K.generator, self.flow, c, self.n, sens=True)
        return v[0], S

    def residual(self, u):
        return self.z - self.values(u)[0]

    def exact(self, u):
        return float(holder_norm_batch(self.residual(u)[None], self.dt, self.alpha)[0])

    def __call__(self, u):
        v, S = self.values(u)
        e = self.z - v
        de = e[self.j] - e[self.i]
        q = np.sum(de * de, axis=1) * self.wq
        s = self.tau * self.scale
        m = q.max()
        w = np.exp((q - m) / s)
        tot = w.sum()
        val = m + s * math.log(tot)
        coef = (2.0 * w / tot * self.wq)[:, None] * de
        ge = np.zeros_like(e)
        for k in range(e.shape[1]):
            ge[:, k] = (np.bincount(self.j, coef[:, k], minlength=e.shape[0])
                        - np.bincount(self.i, coef[:, k], minlength=e.shape[0]))
        # e = z - Phi(h): chain rule through the skeleton
        if self.linear:
            tail = np.cumsum(ge[::-1], axis=0)[::-1][1:]
            grad = -(tail @ self.sig) * self.dt
            return val, grad.ravel()
        return val, -np.einsum("kd,kdp->p", ge, S)


def _spg(obj, u0, cell, emax, budget, memory=8, gamma_ls=1e-4):
    """Nonmonotone spectral projected gradient on the energy ball."""
    u = _project(u0, cell, emax)
    f, g = obj(u)
    hist = [f]
    lam = 1.0 / max(np.max(np.abs(g)), 1e-12)
    best_u, best = u, obj.exact(u)
    it = 0
    for it in range(1, budget + 1):
        d = _project(u - lam * g, cell, emax) - u
        if np.max(np.abs(d)) < 1e-12:
            return best_u, best, it, False
        gd = float(g @ d)
        ref = max(hist[-memory:])
        t = 1.0
        while True:
            un = u + t * d
            fn, gn = obj(un)
            if fn <= ref + gamma_ls * t * gd or t < 1e-10:
                break
            t *= 0.5
        s, yv = un - u, gn - g
        sy = float(s @ yv)
        lam = min(max(float(s @ s) / sy, 1e-10), 1e10) if sy > 0 else 1e10
        u, f, g = un, fn, gn
        hist.append(f)
        ex = obj.exact(u)
        if ex < best:
            best_u, best = u, ex
    return best_u, best, it, True


def distance_to_K(z, K, alpha, budget=200, starts=3, seed=0, taus=(1e-1, 1e-2, 1e-3)):
    """Upper bound on inf ||z - Phi(h)||_alpha over ||hdot||^2 <= 2 (Hölder seminorm).

    Smoothed max of squared quotients minimized by projected spectral gradient
    steps with tau annealing; starts are the projected increments of z, zero,
    the straight line to z(1), then seeded perturbations.  The value returned
    is the exact discrete seminorm at the best iterate.
    """
    if not 0 < alpha < 0.5:
        raise ParameterError("alpha must lie in (0, 1/2)")
    if z.horizon != K.horizon or z.dim != K.x.size:
        raise DomainError("path and limit set live on different spaces")
    obj = _HolderObjective(K, z, alpha)
    n, dw, cell = obj.n, obj.dw, obj.dt
    sig0 = K.generator.sigma(0.0, K.x[None], _fast_uniform(K.x[None]))[0]
    pinv = np.linalg.pinv(sig0)
    inc = np.diff(z.values, axis=0) / cell @ pinv.T
    line = np.tile(pinv @ (z.values[-1] - K.x) / K.horizon, (n, 1))
    inits = [inc.ravel(), np.zeros(n * dw), line.ravel()]
    if starts > 3:
        noise = CounterStream(seed, "k-starts").gaussian(np.arange(starts - 3), n * dw)
        spread = math.sqrt(ENERGY_MAX / K.horizon)
        inits += [line.ravel() + spread * noise[i] for i in range(starts - 3)]
    inits = inits[:max(starts, 1)]

    best, best_u, total, exhausted = np.inf, None, 0, False
    for u0 in inits:
        u = _project(np.asarray(u0, dtype=float), cell, K.energy_max)
        obj.scale = max(float(obj(u)[0]), 1e-300)
        cand_u, cand = u, obj.exact(u)
        for tau in taus:
            obj.tau = tau
            u, val, its, ex = _spg(obj, u, cell, K.energy_max, budget)
            total += its
            exhausted = exhausted or ex
            if val < cand:
                cand_u, cand = u, val
            u = cand_u
        if cand < best:
            best, best_u = cand, cand_u
    return DistanceResult(float(best), best_u.reshape(n, dw), True, exhausted, total)


# the experiment ----------------------------------------------------------------------

@dataclass
class StrassenReport:
    model: str
    settings: dict
    levels: np.ndarray
    u_levels: np.ndarray
    d_alpha: Optional[np.ndarray]
    A: np.ndarray
    sup_values: np.ndarray
    checks: dict
    runtime: float

    @property
    def sample_max(self):
        return float(np.max(self.sup_values))

    def median_d(self):
        return None if self.d_alpha is None else np.median(self.d_alpha, axis=0)

    def median_A(self):
        return np.median(self.A, axis=0)

    def compactness_proxy(self):
        """median over trajectories of max_{j >= j0} d_alpha, for each j0."""
        if self.d_alpha is None:
            return None
        tail_max = np.maximum.accumulate(self.d_alpha[:, ::-1], axis=1)[:, ::-1]
        return np.median(tail_max, axis=0)

    def rows(self):
        md = self.median_d()
        ma = self.median_A()
        return [{"j": int(j), "u": float(u), "d_alpha_to_K": (None if md is None else float(md[k])),
                 "A_jc": float(ma[k])} for k, (j, u) in enumerate(zip(self.levels, self.u_levels))]

    def as_dict(self):
        cp = self.compactness_proxy()
        return {"model": self.model, "settings": self.settings, "levels": self.rows(),
                "sample_max_sup_Z1": self.sample_max,
                "sup_Z1_median": float(np.median(self.sup_values)),
                "compactness_proxy": None if cp is None else [float(v) for v in cp],
                "checks": self.checks, "runtime_s": self.runtime}


def _snap(v, unit):
    return max(unit, int(round(v / unit)) * unit)


def level_grid(c, U, unit, u_per_level=8):
    """Levels j with all of [c^{j-1}, c^j] above 3 and c^j <= U, plus the snapped u-values per level."""
    if not c > 1:
        raise ParameterError("c must exceed 1")
    levels, ends, members = [], [], []
    j = 1
    while True:
        lo, hi = c ** (j - 1), c ** j
        shi = _snap(hi, unit)
        if shi > U:
            break
        slo = _snap(lo, unit)
        if slo > 3 and lo > 3:
            us = np.unique([_snap(v, unit) for v in np.geomspace(lo, hi, max(u_per_level, 2))] + [slo, shi])
            us = us[(us >= slo) & (us <= shi) & (us > 3)]
            levels.append(j)
            ends.append(shi)
            members.append([int(v) for v in us])
        j += 1
    return np.array(levels), np.array(ends, dtype=np.int64), members


def _resolve_model(model):
    if isinstance(model, str):
        return get_model(model).coefficients
    if isinstance(model, ModelLibraryEntry):
        return model.coefficients
    return model


def strassen_experiment(model, gamma=None, U=1_000_000, c=2.0, alpha=0.25, seed=20240611, n_traj=64,
                        n_per_unit=64, n_z=64, u_per_level=8, tail_levels=1, epsilon=1.0, x0=None,
                        distances=True, dist_budget=200, dist_starts=3, limit=None, min_levels=8,
                        threads=1):
    """Rescaled-family statistics along the levels u = c^j.

    Per trajectory: d_alpha(Z_{c^j}, K) (upper bounds), A_{j,c} over the u-grid
    of each level, and sup_u Z_u(1) (first coordinate) over the level ends of
    the last tail_levels levels.
    """
    t0 = time.perf_counter()
    cs = _resolve_model(model)
    if not 0 < alpha < 0.5:
        raise ParameterError("alpha must lie in (0, 1/2)")
    x = np.zeros(cs.dim_x) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    gamma = linear_contraction(x) if gamma is None else gamma
    unit = grid_unit(n_per_unit, n_z)
    levels, ends, members = level_grid(c, U, unit, u_per_level)
    if levels.size < min_levels:
        raise DomainError(f"horizon U={U} gives {levels.size} levels; need at least {min_levels}")
    all_u = sorted({u for m in members for u in m})
    nodes = np.unique(np.concatenate([rescale_nodes(u, n_per_unit, n_z) for u in all_u]))
    Y = simulate_long_horizon(cs, x, U, n_per_unit, nodes, n_traj, seed, epsilon)
    dt = 1.0 / n_z

    Z_end = {int(u): gamma(phi(u), Y.at(rescale_nodes(u, n_per_unit, n_z))) for u in ends}
    A = np.zeros((n_traj, levels.size))
    for k, (cj, us) in enumerate(zip(ends, members)):
        base = gamma(1.0 / phi(cj), Z_end[int(cj)])
        for u in us:
            Zu = gamma(phi(u), Y.at(rescale_nodes(u, n_per_unit, n_z)))
            ref = gamma(phi(u), base)
            A[:, k] = np.maximum(A[:, k], holder_norm_batch(Zu - ref, dt, alpha))

    tail = ends[-max(int(tail_levels), 1):]
    sup_values = np.max(np.stack([Z_end[int(u)][:, -1, 0] for u in tail]), axis=0)

    d_alpha = None
    if distances:
        K = LimitSetK.for_model(cs, gamma, limit)
        K.x = x

        def one(r):
            return [distance_to_K(Path(1.0, Z_end[int(u)][r]), K, alpha, dist_budget, dist_starts,
                                  seed=seed + r).value for u in ends]
        d_alpha = np.array(parallel_map(one, list(range(n_traj)), threads))

    checks = {}
    last = min(5, levels.size)
    if d_alpha is not None:
        md = np.median(d_alpha, axis=0)[-last:]
        checks["median_d_nonincreasing_last5"] = bool(np.all(np.diff(md) <= 0))
        cp = np.median(np.maximum.accumulate(d_alpha[:, ::-1], axis=1)[:, ::-1], axis=0)
        checks["compactness_proxy_nonincreasing"] = bool(np.all(np.diff(cp) <= 1e-15))
    ma = np.median(A, axis=0)[-last:]
    checks["median_A_nonincreasing_last5"] = bool(np.all(np.diff(ma) <= 0))
    settings = {"U": U, "c": c, "alpha": alpha, "seed": seed, "n_traj": n_traj, "n_per_unit": n_per_unit,
                "n_z": n_z, "u_per_level": u_per_level, "tail_levels": tail_levels, "epsilon": epsilon,
                "gamma": gamma.name}
    return StrassenReport(cs.name, settings, levels, ends, d_alpha, A, sup_values, checks,
                          time.perf_counter() - t0)
