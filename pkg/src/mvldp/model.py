"""Coefficient sets (b, sigma), small-noise families and assumption probes."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DomainError, ParameterError
from .measure_ops import EmpiricalMeasure, _fast_uniform, wasserstein2
from .rng import CounterStream


@dataclass(frozen=True)
class CoefficientSet:
    """Drift b(t, x, mu) -> (N, d) and diffusion sigma(t, x, mu) -> (N, d, d').

    x is always a stacked (N, d) array; mu is an EmpiricalMeasure shared by
    all rows.  Optional Jacobians: drift_jacobian -> (N, d, d) with entry
    [i, j] = d b_i / d x_j, diffusion_jacobian -> (N, d, d', d).
    pure_noise marks b = 0 with constant sigma, where X = x + sqrt(eps) sigma W.
    """

    name: str
    dim_x: int
    dim_w: int
    drift: Callable
    diffusion: Callable
    lipschitz_L: float
    poly_degree_q: int
    diffusion_bound_M: Optional[float] = None
    time_holder_beta: Optional[float] = None
    drift_jacobian: Optional[Callable] = None
    diffusion_jacobian: Optional[Callable] = None
    law_free: bool = False
    pure_noise: bool = False

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_w < 1:
            raise ParameterError("dimensions must be positive")
        if not self.lipschitz_L > 0 or self.poly_degree_q < 2:
            raise ParameterError("need L > 0 and q >= 2")
        if self.diffusion_bound_M is not None and not self.diffusion_bound_M > 0:
            raise ParameterError("M must be positive")
        if self.time_holder_beta is not None and not 0 < self.time_holder_beta <= 1:
            raise ParameterError("beta must lie in (0, 1]")

    def b(self, t, x, mu):
        return np.asarray(self.drift(t, np.atleast_2d(x), mu), dtype=float)

    def sigma(self, t, x, mu):
        return np.asarray(self.diffusion(t, np.atleast_2d(x), mu), dtype=float)

    def b_jac(self, t, x, mu, step=1e-6):
        if self.drift_jacobian is not None:
            return np.asarray(self.drift_jacobian(t, x, mu), dtype=float)
        return _fd_jacobian(lambda y: self.b(t, y, mu), x, step)

    def sigma_jac(self, t, x, mu, step=1e-6):
        if self.diffusion_jacobian is not None:
            return np.asarray(self.diffusion_jacobian(t, x, mu), dtype=float)
        return _fd_jacobian(lambda y: self.sigma(t, y, mu), x, step)


def _fd_jacobian(fn, x, step):
    # central differences, last axis indexes the perturbed coordinate
    cols = []
    for j in range(x.shape[1]):
        e = np.zeros_like(x)
        e[:, j] = step * (1.0 + np.abs(x[:, j]))
        cols.append((fn(x + e) - fn(x - e)) / (2 * e[:, j]).reshape(-1, *([1] * (fn(x).ndim - 1))))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class EpsilonFamily:
    """(b_eps, sigma_eps) converging uniformly to base with declared gap eta(eps)."""

    base: CoefficientSet
    perturbed: Callable
    eta: Callable

    @classmethod
    def constant(cls, base):
        return cls(base, lambda eps: base, lambda eps: 0.0)

    @classmethod
    def drift_offset(cls, base, g, sup_g):
        """b_eps = b + eps * g(t, x, mu) where sup |g| <= sup_g."""
        def perturbed(eps):
            return CoefficientSet(
                f"{base.name}+eps*g", base.dim_x, base.dim_w,
                lambda t, x, mu: base.b(t, x, mu) + eps * np.asarray(g(t, x, mu), dtype=float),
                base.diffusion, base.lipschitz_L, base.poly_degree_q,
                base.diffusion_bound_M, base.time_holder_beta)
        return cls(base, perturbed, lambda eps: eps * sup_g)


# built-in models ------------------------------------------------------------

def _zeros(t, x, mu):
    return np.zeros_like(x)


def _identity_sigma(d):
    def sig(t, x, mu):
        return np.broadcast_to(np.eye(d), (x.shape[0], d, d)).copy()
    return sig


def _zero_jac(d, dw=None):
    def jac(t, x, mu):
        shape = (x.shape[0], d, d) if dw is None else (x.shape[0], d, dw, d)
        return np.zeros(shape)
    return jac


def brownian(d=1):
    return CoefficientSet("brownian", d, d, _zeros, _identity_sigma(d), 1.0, 2, float(np.sqrt(d)), 1.0,
                          _zero_jac(d), _zero_jac(d, d), law_free=True, pure_noise=True)


def mean_field_ou(a=1.0, s=1.0):
    """b = a (mean(mu) - x), sigma = s."""
    def drift(t, x, mu):
        return a * (mu.mean() - x)

    def diffusion(t, x, mu):
        return np.full((x.shape[0], 1, 1), s)

    def jac(t, x, mu):
        return np.full((x.shape[0], 1, 1), -a)

    return CoefficientSet("mfou", 1, 1, drift, diffusion, max(a, 1.0), 2, abs(s), 1.0, jac, _zero_jac(1, 1))


def double_well(a=1.0, s=1.0):
    """b = -V'(x) - F' * mu with V = x^4/4 - x^2/2 and F = a x^2 / 2."""
    def drift(t, x, mu):
        return -(x ** 3 - x) - a * (x - mu.mean())

    def diffusion(t, x, mu):
        return np.full((x.shape[0], 1, 1), s)

    def jac(t, x, mu):
        return (-(3 * x ** 2 - 1) - a)[:, :, None]

    L = max(1.5, abs(1 - a), a)
    return CoefficientSet("double_well", 1, 1, drift, diffusion, L, 3, abs(s), 1.0, jac, _zero_jac(1, 1))


def mean_field_ou_state_noise(a=1.0):
    """b = a (mean - x), sigma = 1 + tanh(x - mean) / 2 (state and law dependent noise)."""
    def drift(t, x, mu):
        return a * (mu.mean() - x)

    def diffusion(t, x, mu):
        return (1.0 + 0.5 * np.tanh(x - mu.mean()))[:, :, None]

    def jac(t, x, mu):
        return np.full((x.shape[0], 1, 1), -a)

    def sjac(t, x, mu):
        return (0.5 / np.cosh(x - mu.mean()) ** 2)[:, :, None, None]

    return CoefficientSet("mfou_state_noise", 1, 1, drift, diffusion, max(a, 1.0), 2, 1.5, 1.0, jac, sjac)


def linear_drift(k=-1.0, s=1.0):
    """Law-free b = k x with constant noise s."""
    def drift(t, x, mu):
        return k * x

    def diffusion(t, x, mu):
        return np.full((x.shape[0], 1, 1), s)

    def jac(t, x, mu):
        return np.full((x.shape[0], 1, 1), k)

    return CoefficientSet("linear", 1, 1, drift, diffusion, max(abs(k), 1e-12), 2, max(abs(s), 1e-12),
                          1.0, jac, _zero_jac(1, 1), law_free=True)


@dataclass(frozen=True)
class ModelLibraryEntry:
    """A named model with its card: closed-form facts and experiment settings."""

    name: str
    coefficients: CoefficientSet
    facts: dict = field(default_factory=dict)
    card: dict = field(default_factory=dict)


def _library():
    ou_var = lambda eps, T=1.0: 0.5 * eps * (1 - np.exp(-2 * T))
    return {
        "brownian": ModelLibraryEntry(
            "brownian", brownian(1),
            facts={
                "terminal_variance": (lambda eps, T=1.0: eps * T, "DERIVED: Brownian variance"),
                "terminal_event_rate": (lambda delta: 0.5 * delta ** 2, "DERIVED: Cameron-Martin calculus"),
                # pinned oracle: numpy default_rng(20240611), N=1e5, direct cumsum walk, (mean, SE, sd);
                # continuous-time value 2 * Catalan = 1.8319 minus the grid bias of the discrete sup
                "E_sup_W2_n10000": ((1.8203, 0.0051, 1.6095), "DERIVED: brute-force Monte Carlo oracle, pinned"),
                "E_sup_W2_n1024": ((1.7782, 0.0050, 1.5736), "DERIVED: brute-force Monte Carlo oracle, pinned"),
            },
            card={"particles": 10000, "picard_scale": 1.0, "ldp_band": 0.2, "moment_C": 4.0}),
        "mfou": ModelLibraryEntry(
            "mfou", mean_field_ou(),
            facts={
                "terminal_mean": (lambda m0: m0, "DERIVED: m'(t) = 0"),
                "terminal_variance": (ou_var, "DERIVED: OU variance with frozen mean"),
                "exit_rate": (lambda R, T=1.0: R ** 2 / (1 - np.exp(-2 * T)), "DERIVED: minimum energy to reach level R"),
            },
            card={"particles": 10000, "picard_scale": 1.0, "ldp_band": 0.2, "moment_C": 4.0}),
        "double_well": ModelLibraryEntry(
            "double_well", double_well(), facts={},
            card={"particles": 10000, "picard_scale": 1.5, "ldp_band": 0.25, "moment_C": 8.0}),
        "mfou_state_noise": ModelLibraryEntry(
            "mfou_state_noise", mean_field_ou_state_noise(), facts={},
            card={"particles": 10000, "picard_scale": 1.5, "ldp_band": 0.25, "moment_C": 8.0}),
    }


LIBRARY = _library()


def get_model(name):
    try:
        return LIBRARY[name]
    except KeyError:
        raise DomainError(f"unknown model '{name}'; choose from {sorted(LIBRARY)}") from None


# probes ---------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeReport:
    name: str
    statistic: float
    declared: float
    passed: bool
    samples: int
    worst: dict

    def as_dict(self):
        return {"name": self.name, "statistic": self.statistic, "declared": self.declared,
                "passed": self.passed, "samples": self.samples, "worst": self.worst}


class _ProbeDraws:
    """Random (t, s, x, x', mu, mu') tuples from a counter stream."""

    def __init__(self, cs, samples, box_radius, seed, tag, horizon=1.0, atoms=8):
        if samples < 1:
            raise ParameterError("samples must be >= 1")
        d = cs.dim_x
        width = 2 + 2 * d + 2 * atoms * d
        u = CounterStream(seed, f"probe:{tag}").uniforms(np.arange(samples), np.arange((width + 1) // 2))
        u = u.reshape(samples, -1)[:, :width]
        self.t = horizon * u[:, 0]
        self.s = horizon * u[:, 1]
        box = lambda v: box_radius * (2 * v - 1)
        self.x = box(u[:, 2:2 + d])
        self.xp = box(u[:, 2 + d:2 + 2 * d])
        off = 2 + 2 * d
        self.mu = box(u[:, off:off + atoms * d]).reshape(samples, atoms, d)
        self.mup = box(u[:, off + atoms * d:]).reshape(samples, atoms, d)


def _report(name, quotients, declared, draws, rtol=1e-9):
    q = np.asarray(quotients, dtype=float)
    k = int(np.nanargmax(q)) if q.size else 0
    stat = float(q[k]) if q.size else 0.0
    worst = {"t": float(draws.t[k]), "x": draws.x[k].tolist(), "x_prime": draws.xp[k].tolist()}
    return ProbeReport(name, stat, float(declared), bool(stat <= declared * (1 + rtol) + 1e-12),
                       int(q.size), worst)


def probe_monotonicity(cs, samples=10000, box_radius=5.0, seed=0):
    """max <x - x', b(t,x,mu) - b(t,x',mu)> / |x - x'|^2 against L."""
    dr = _ProbeDraws(cs, samples, box_radius, seed, "monotone")
    q = np.empty(samples)
    for i in range(samples):
        mu = _fast_uniform(dr.mu[i])
        bb = cs.b(dr.t[i], np.stack([dr.x[i], dr.xp[i]]), mu)
        dx = dr.x[i] - dr.xp[i]
        q[i] = dx @ (bb[0] - bb[1]) / max(dx @ dx, 1e-300)
    return _report("monotonicity", q, cs.lipschitz_L, dr)


def probe_lipschitz_sigma(cs, samples=10000, box_radius=5.0, seed=0):
    """max |sigma(t,x,mu) - sigma(t,x',mu')| / (|x - x'| + W2(mu, mu')) against L."""
    dr = _ProbeDraws(cs, samples, box_radius, seed, "lipschitz_sigma")
    q = np.empty(samples)
    for i in range(samples):
        mu, mup = _fast_uniform(dr.mu[i]), _fast_uniform(dr.mup[i])
        a = cs.sigma(dr.t[i], dr.x[i][None], mu)[0]
        b = cs.sigma(dr.t[i], dr.xp[i][None], mup)[0]
        q[i] = np.linalg.norm(a - b) / (np.linalg.norm(dr.x[i] - dr.xp[i]) + wasserstein2(mu, mup))
    return _report("lipschitz_sigma", q, cs.lipschitz_L, dr)


def probe_drift_measure_lipschitz(cs, samples=10000, box_radius=5.0, seed=0):
    """max |b(t,x,mu) - b(t,x,mu')| / W2(mu, mu') against L."""
    dr = _ProbeDraws(cs, samples, box_radius, seed, "drift_measure")
    q = np.empty(samples)
    for i in range(samples):
        mu, mup = _fast_uniform(dr.mu[i]), _fast_uniform(dr.mup[i])
        x = dr.x[i][None]
        q[i] = np.linalg.norm(cs.b(dr.t[i], x, mu) - cs.b(dr.t[i], x, mup)) / max(wasserstein2(mu, mup), 1e-300)
    return _report("drift_measure_lipschitz", q, cs.lipschitz_L, dr)


def probe_polynomial_growth(cs, samples=10000, box_radius=5.0, seed=0):
    """max |b(x) - b(x')| / ((1 + |x|^{q-1} + |x'|^{q-1}) |x - x'|) against L."""
    dr = _ProbeDraws(cs, samples, box_radius, seed, "poly_growth")
    q = np.empty(samples)
    e = cs.poly_degree_q - 1
    for i in range(samples):
        mu = _fast_uniform(dr.mu[i])
        bb = cs.b(dr.t[i], np.stack([dr.x[i], dr.xp[i]]), mu)
        nx, nxp = np.linalg.norm(dr.x[i]), np.linalg.norm(dr.xp[i])
        q[i] = np.linalg.norm(bb[0] - bb[1]) / ((1 + nx ** e + nxp ** e) * max(np.linalg.norm(dr.x[i] - dr.xp[i]), 1e-300))
    return _report("polynomial_growth", q, cs.lipschitz_L, dr)


def probe_diffusion_bound(cs, samples=10000, box_radius=5.0, seed=0):
    """max |sigma(t,x,mu)| (Frobenius) against M."""
    dr = _ProbeDraws(cs, samples, box_radius, seed, "sigma_bound")
    q = np.empty(samples)
    for i in range(samples):
        q[i] = np.linalg.norm(cs.sigma(dr.t[i], dr.x[i][None], _fast_uniform(dr.mu[i]))[0])
    declared = np.inf if cs.diffusion_bound_M is None else cs.diffusion_bound_M
    return _report("diffusion_bound", q, declared, dr)


def probe_time_holder(cs, samples=10000, box_radius=5.0, seed=0):
    """max (|b(t,x,mu) - b(s,x,mu)| + |sigma(t,..) - sigma(s,..)|) / |t - s|^beta against L."""
    dr = _ProbeDraws(cs, samples, box_radius, seed, "time_holder")
    beta = 1.0 if cs.time_holder_beta is None else cs.time_holder_beta
    q = np.empty(samples)
    for i in range(samples):
        mu = _fast_uniform(dr.mu[i])
        x = dr.x[i][None]
        num = (np.linalg.norm(cs.b(dr.t[i], x, mu) - cs.b(dr.s[i], x, mu))
               + np.linalg.norm(cs.sigma(dr.t[i], x, mu) - cs.sigma(dr.s[i], x, mu)))
        q[i] = num / max(abs(dr.t[i] - dr.s[i]) ** beta, 1e-300)
    return _report("time_holder", q, cs.lipschitz_L, dr)


ALL_PROBES = (probe_monotonicity, probe_lipschitz_sigma, probe_drift_measure_lipschitz,
              probe_polynomial_growth, probe_diffusion_bound, probe_time_holder)


def probe_all(cs, samples=10000, box_radius=5.0, seed=0):
    return [p(cs, samples, box_radius, seed) for p in ALL_PROBES]


@dataclass(frozen=True)
class ConvergenceProbe:
    eps: tuple
    gaps: tuple
    etas: tuple
    within_eta: bool
    monotone: bool

    @property
    def passed(self):
        return self.within_eta and self.monotone


def probe_uniform_convergence(fam, eps_list, samples=2000, box_radius=5.0, seed=0):
    """Sampled sup |b_eps - b| + |sigma_eps - sigma| per eps against eta(eps)."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError("eps_list must be strictly decreasing")
    cs = fam.base
    dr = _ProbeDraws(cs, samples, box_radius, seed, "uniform_convergence")
    gaps = []
    for eps in eps_list:
        pe = fam.perturbed(eps)
        g = 0.0
        for i in range(samples):
            mu = _fast_uniform(dr.mu[i])
            x = dr.x[i][None]
            g = max(g, float(np.linalg.norm(pe.b(dr.t[i], x, mu) - cs.b(dr.t[i], x, mu))),
                    float(np.linalg.norm(pe.sigma(dr.t[i], x, mu) - cs.sigma(dr.t[i], x, mu))))
        gaps.append(g)
    etas = [float(fam.eta(e)) for e in eps_list]
    within = all(g <= e * (1 + 1e-9) + 1e-15 for g, e in zip(gaps, etas))
    mono = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(gaps, gaps[1:]))
    return ConvergenceProbe(tuple(eps_list), tuple(gaps), tuple(etas), within, mono)
