"""Monte Carlo checks of the small-noise asymptotics and the Gaussian path bounds."""
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import log_ndtr

from .brownian import BrownianDriver
from .events import TerminalEvent, parse_event
from .exceptions import ParameterError, UnsupportedConfigurationError
from .model import get_model
from .mvsde_solver import simulate_frozen, simulate_particles
from .path_space import TimeGrid, holder_from_lag_maxima, lag_maxima, sup_norm_batch
from .rng import chunk_ranges, parallel_map
from .skeleton_rate import DiracFlow, _fm_batch, rate_of_event

# Pinned by calibrate_holder_constant(); see the README for the sweep settings.
HOLDER_TAIL_C = 16.0


def wilson_interval(hits, n, conf=0.95):
    """Two-sided Wilson score interval for a binomial proportion."""
    z = stats.norm.ppf(0.5 + conf / 2)
    p = hits / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - half), min(1.0, mid + half)


def wilson_upper(hits, n, conf=0.95):
    """One-sided Wilson upper bound."""
    z = stats.norm.ppf(conf)
    p = hits / n
    den = 1 + z * z / n
    return min(1.0, (p + z * z / (2 * n) + z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))) / den)


def _neg_eps_log(eps, p):
    return np.inf if p <= 0 else -eps * np.log(p)


@dataclass
class LdpExperiment:
    model: str
    event: object
    eps_schedule: tuple
    replicas: int
    norm: str = "sup"
    alpha: float = None
    seed: int = 0
    n_steps: int = 256
    x0: float = 0.0
    horizon: float = 1.0
    particles: int = None
    exact_tail: bool = False

    def __post_init__(self):
        eps = [float(e) for e in self.eps_schedule]
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ParameterError("eps_schedule must be positive and strictly decreasing")
        self.eps_schedule = tuple(eps)
        if self.norm not in ("sup", "holder"):
            raise ParameterError("norm must be sup or holder")
        if self.norm == "holder" and not (self.alpha is not None and 0 < self.alpha < 0.5):
            raise ParameterError("holder norm needs alpha in (0, 1/2)")
        if not self.exact_tail and self.replicas < 100:
            raise ParameterError("need at least 100 replicas")
        self.event = parse_event(self.event)


@dataclass
class LdpEstimate:
    eps: list
    hits: list
    replicas: int
    p_hat: list
    wilson: list
    wilson99: list
    rate_hat: list
    censored: list
    extrapolated: float
    reference: float
    exact: bool = False
    rate_bounds: list = field(default_factory=list)

    def as_dict(self):
        return {k: getattr(self, k) for k in ("eps", "hits", "replicas", "p_hat", "wilson", "wilson99",
                                              "rate_hat", "censored", "extrapolated", "reference",
                                              "exact", "rate_bounds")}


def gaussian_terminal_rate(c, eps, x=0.0, T=1.0):
    """-eps log P[x + sqrt(eps) W(T) >= c] from the exact Gaussian tail."""
    return -eps * float(log_ndtr(-(c - x) / np.sqrt(eps * T)))


def extrapolate_linear(eps, values):
    """Intercept of a least-squares line through the last three finite points."""
    pts = [(e, v) for e, v in zip(eps, values) if np.isfinite(v)][-3:]
    if len(pts) < 2:
        return np.nan
    e, v = np.array(pts).T
    return float(np.polyfit(e, v, 1)[1])


def _exact_probability(exp, cs):
    ev = exp.event
    if not (cs.pure_noise and isinstance(ev, TerminalEvent)):
        raise UnsupportedConfigurationError("exact tail only for pure-noise models with terminal events")
    v = ev.params["v"]
    x = np.atleast_1d(np.asarray(exp.x0, dtype=float)) * np.ones(cs.dim_x)
    nv = np.linalg.norm(v)
    return [float(np.exp(log_ndtr(-(ev.params["c"] - v @ x) / (np.sqrt(e * exp.horizon) * nv))))
            for e in exp.eps_schedule], [(ev.params["c"] - v @ x) / nv for _ in exp.eps_schedule]


def estimate_event_probability(exp, reference=None, threads=1, family=None):
    """-eps log p per eps, by plain Monte Carlo over particle systems or the exact tail."""
    entry = get_model(exp.model)
    cs = entry.coefficients
    ev = exp.event
    if reference is None:
        reference = rate_of_event(cs, exp.x0, ev, horizon=exp.horizon, seed=exp.seed, threads=threads).value
    if exp.exact_tail:
        probs, dist = _exact_probability(exp, cs)
        rates = [-e * float(log_ndtr(-d / np.sqrt(e * exp.horizon))) for e, d in zip(exp.eps_schedule, dist)]
        return LdpEstimate(list(exp.eps_schedule), [None] * len(probs), 0, probs, [(p, p) for p in probs],
                           [(p, p) for p in probs], rates, [False] * len(probs),
                           extrapolate_linear(exp.eps_schedule, rates), float(reference), exact=True,
                           rate_bounds=[(r, r) for r in rates])
    grid = TimeGrid(exp.horizon, exp.n_steps)
    psi = DiracFlow(cs, exp.x0, grid).nodes
    N = min(exp.particles or entry.card.get("particles", 10000), exp.replicas)
    chunks = chunk_ranges(exp.replicas, N)
    hits, p_hat, wil, wil99, rates, cens, bounds = [], [], [], [], [], [], []
    for i, eps in enumerate(exp.eps_schedule):
        cse = cs if family is None else family.perturbed(eps)

        def batch(rng):
            a, b = rng
            ps = simulate_particles(cse, exp.x0, b - a, grid, eps, exp.seed,
                                    replicas=np.arange(a, b), tag=f"ldp/{i}")
            return int(np.count_nonzero(ev.contains_batch(ps.paths, grid.dt, psi)))

        k = sum(parallel_map(batch, chunks, threads))
        n = exp.replicas
        p = k / n
        lo, hi = wilson_interval(k, n)
        hits.append(k)
        p_hat.append(p)
        wil.append((lo, hi))
        wil99.append(wilson_interval(k, n, 0.99))
        cens.append(k == 0)
        if k == 0:
            hi = wilson_upper(0, n)
        rates.append(_neg_eps_log(eps, p))
        bounds.append((_neg_eps_log(eps, hi), _neg_eps_log(eps, lo)))
    return LdpEstimate(list(exp.eps_schedule), hits, exp.replicas, p_hat, wil, wil99, rates, cens,
                       extrapolate_linear(exp.eps_schedule, rates), float(reference), rate_bounds=bounds)


def sandwich_checks(est, band):
    """(monotone toward reference, final point within relative band)."""
    dist = [abs(r - est.reference) for r in est.rate_hat]
    monotone = all(np.isfinite(d) for d in dist) and all(b <= a for a, b in zip(dist, dist[1:]))
    final = dist[-1] <= band * est.reference
    return monotone, final


# Gaussian path bounds -------------------------------------------------------

def holder_tail_bound(u, v, alpha, C=HOLDER_TAIL_C):
    """C max(1, (u/v)^{1/alpha}) exp(-u^{1/alpha} / (C v^{1/alpha - 2}))."""
    ia = 1.0 / alpha
    return C * max(1.0, (u / v) ** ia) * np.exp(-u ** ia / (C * v ** (ia - 2)))


def _brownian_batches(seed, tag, replicas, n, dim=1, horizon=1.0, batch=10000):
    drv = BrownianDriver(seed, dim, horizon, n, tag=tag)
    for a, b in chunk_ranges(replicas, batch):
        yield drv.path(np.arange(a, b))


def holder_sup_statistics(replicas, n, seed, v_max, tag="holder-bound", batch=10000, threads=1):
    """Sup norms of all Brownian replicas and lag maxima for those with sup <= v_max."""
    drv = BrownianDriver(seed, 1, 1.0, n, tag=tag)

    def work(rng):
        w = drv.path(np.arange(*rng))
        s = sup_norm_batch(w)
        keep = s <= v_max
        return s, s[keep], lag_maxima(w[keep])

    parts = parallel_map(work, chunk_ranges(replicas, batch), threads)
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
            np.concatenate([p[2] for p in parts]))


@dataclass
class BoundCheck:
    name: str
    params: dict
    hits: int
    replicas: int
    p_hat: float
    wilson: tuple
    bound: float
    exact: float = None

    @property
    def passed(self):
        return self.p_hat <= self.bound

    def as_dict(self):
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def check_holder_event_grid(us, vs, alphas, replicas, n, seed, C=HOLDER_TAIL_C, threads=1):
    """P[||W||_alpha >= u, ||W||_inf <= v] against the Hölder tail bound on a grid."""
    sups, kept_sups, lm = holder_sup_statistics(replicas, n, seed, max(vs), threads=threads)
    out = []
    dt = 1.0 / n
    for a in alphas:
        hn = holder_from_lag_maxima(lm, dt, a) if lm.size else np.zeros(0)
        for v in vs:
            inside = kept_sups <= v
            for u in us:
                k = int(np.count_nonzero(inside & (hn >= u)))
                out.append(BoundCheck("holder_event", {"u": u, "v": v, "alpha": a, "n": n, "C": C},
                                      k, replicas, k / replicas, wilson_interval(k, replicas),
                                      float(holder_tail_bound(u, v, a, C))))
    return out


def check_holder_event_bound(u, v, alpha, replicas, grid_n, seed, C=HOLDER_TAIL_C, threads=1):
    return check_holder_event_grid([u], [v], [alpha], replicas, grid_n, seed, C, threads)[0]


def calibrate_holder_constant(replicas=20000, n=512, seed=20240611,
                              us=(1.5, 2.0, 3.0, 4.0), vs=(0.5, 0.75, 1.0, 1.5),
                              alphas=(0.15, 0.2, 0.3, 0.4, 0.45),
                              candidates=tuple(2.0 ** k for k in range(-2, 9))):
    """Smallest candidate C whose bound dominates the 99% Wilson upper limit of every cell with hits."""
    checks = check_holder_event_grid(us, vs, alphas, replicas, n, seed, C=1.0)
    for C in candidates:
        if all(holder_tail_bound(c.params["u"], c.params["v"], c.params["alpha"], C)
               >= wilson_interval(c.hits, c.replicas, 0.99)[1] for c in checks if c.hits):
            return C
    return np.inf


def brownian_sup_exit_exact(a, terms=50):
    """P[sup_{t<=1} |W(t)| >= a] for scalar W, by the alternating image series."""
    if a <= 0:
        return 1.0
    k = np.arange(-terms, terms + 1)
    stay = np.sum((-1.0) ** k * (stats.norm.cdf((2 * k + 1) * a) - stats.norm.cdf((2 * k - 1) * a)))
    return float(min(1.0, max(0.0, 1.0 - stay)))


def brownian_sup_exit_eigen(a, terms=200):
    """Same probability from the heat-kernel eigen-expansion (independent oracle)."""
    if a <= 0:
        return 1.0
    k = np.arange(terms)
    stay = 4 / np.pi * np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-(2 * k + 1) ** 2 * np.pi ** 2 / (8 * a * a)))
    return float(min(1.0, max(0.0, 1.0 - stay)))


def sup_tail_bound(delta, eps, tau, d_w):
    """4 d' exp(-delta^2 / (2 d' tau eps))."""
    return 4 * d_w * np.exp(-delta ** 2 / (2 * d_w * tau * eps))


def check_brownian_sup_bound(delta, eps, tau, d_w, replicas, seed, n=1024, threads=1):
    """P[sup_{t<=tau} |sqrt(eps) W(t)| >= delta] against the sup tail bound."""
    if min(delta, eps, tau) <= 0 or d_w < 1:
        raise ParameterError("parameters must be positive")
    drv = BrownianDriver(seed, d_w, tau, n, tag=f"sup-bound/{d_w}")

    def work(rng):
        w = drv.path(np.arange(*rng))
        return int(np.count_nonzero(np.sqrt(eps) * sup_norm_batch(w) >= delta))

    k = sum(parallel_map(work, chunk_ranges(replicas, 10000), threads))
    exact = brownian_sup_exit_exact(delta / np.sqrt(eps * tau)) if d_w == 1 else None
    return BoundCheck("sup_tail", {"delta": delta, "eps": eps, "tau": tau, "d_w": d_w, "n": n},
                      k, replicas, k / replicas, wilson_interval(k, replicas),
                      float(sup_tail_bound(delta, eps, tau, d_w)), exact)


def check_sup_grid(deltas, epss, replicas, seed, n=1024, tau=1.0, d_w=1, threads=1):
    """All (delta, eps) cells from a single set of Brownian paths."""
    drv = BrownianDriver(seed, d_w, tau, n, tag=f"sup-bound/{d_w}")
    sups = np.concatenate(parallel_map(lambda r: sup_norm_batch(drv.path(np.arange(*r))),
                                       chunk_ranges(replicas, 10000), threads))
    out = []
    for e in epss:
        for dl in deltas:
            k = int(np.count_nonzero(np.sqrt(e) * sups >= dl))
            exact = brownian_sup_exit_exact(dl / np.sqrt(e * tau)) if d_w == 1 else None
            out.append(BoundCheck("sup_tail", {"delta": dl, "eps": e, "tau": tau, "d_w": d_w, "n": n},
                                  k, replicas, k / replicas, wilson_interval(k, replicas),
                                  float(sup_tail_bound(dl, e, tau, d_w)), exact))
    return out


# exponential equivalence ----------------------------------------------------

@dataclass
class GapReport:
    eps: list
    m: list
    delta: float
    replicas: int
    hits: np.ndarray
    eps_log_p: np.ndarray
    upper: np.ndarray
    xy_hits: list
    xy_eps_log_p: list
    trend_in_m: bool
    trend_in_eps: bool
    informative: int

    def as_dict(self):
        return {"eps": self.eps, "m": self.m, "delta": self.delta, "replicas": self.replicas,
                "hits": self.hits.tolist(), "eps_log_p": self.eps_log_p.tolist(),
                "eps_log_p_upper": self.upper.tolist(), "xy_hits": self.xy_hits,
                "xy_eps_log_p": self.xy_eps_log_p, "trend_in_m": self.trend_in_m,
                "trend_in_eps": self.trend_in_eps, "informative": self.informative}


def _decreasing(a_val, a_cens, b_val, b_up, b_cens):
    """Is cell b below cell a?  None when censoring makes the pair inconclusive."""
    if a_cens and b_cens:
        return None
    if b_cens:
        return True if b_up < a_val else None
    if a_cens:
        return None
    return b_val < a_val


def exponential_equivalence_gap(model, eps_schedule, m_schedule, replicas, seed, delta=0.25,
                                n_steps=256, x0=0.0, particles=None, threads=1):
    """eps log P[||Y_eps - Y_eps,m||_inf > delta] over (eps, m), plus the X_eps vs Y_eps gap.

    Y_eps freezes the law at delta_psi; Y_eps,m = F^m(sqrt(eps) W); X_eps is the
    particle system.  All three share the Brownian path of each replica.
    """
    entry = get_model(model)
    cs = entry.coefficients
    eps_schedule = [float(e) for e in eps_schedule]
    m_schedule = [int(m) for m in m_schedule]
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ParameterError("eps_schedule must be decreasing")
    if any(b <= a for a, b in zip(m_schedule, m_schedule[1:])):
        raise ParameterError("m_schedule must be increasing")
    grid = TimeGrid(1.0, n_steps)
    flow = DiracFlow(cs, x0, grid)
    psi = flow.nodes
    dirac_flow = [m[0] for m in flow.mus] + [flow.mus[-1][3]]
    N = min(particles or entry.card.get("particles", 10000), replicas)
    hits = np.zeros((len(eps_schedule), len(m_schedule)), dtype=int)
    xy = []
    for i, eps in enumerate(eps_schedule):
        tag = f"gap/{i}"

        def batch(rng):
            reps = np.arange(*rng)
            drv = BrownianDriver(seed, cs.dim_w, 1.0, n_steps, tag=tag)
            w = drv.path(reps)
            y = simulate_frozen(cs, x0, dirac_flow, grid, eps, seed, reps, tag=tag)
            row = [int(np.count_nonzero(sup_norm_batch(y - _fm_batch(cs, x0, np.sqrt(eps) * w, m, psi, 1.0))
                                        > delta)) for m in m_schedule]
            if cs.law_free:
                xyk = 0
            else:
                xp = simulate_particles(cs, x0, reps.size, grid, eps, seed, replicas=reps, tag=tag).paths
                xyk = int(np.count_nonzero(sup_norm_batch(xp - y) > delta))
            return row, xyk

        parts = parallel_map(batch, chunk_ranges(replicas, N), threads)
        hits[i] = np.sum([p[0] for p in parts], axis=0)
        xy.append(int(sum(p[1] for p in parts)))
    eps_arr = np.array(eps_schedule)[:, None]
    with np.errstate(divide="ignore"):
        elp = np.where(hits > 0, eps_arr * np.log(np.maximum(hits, 1) / replicas), -np.inf)
    upper = eps_arr * np.log(np.vectorize(lambda k: wilson_upper(k, replicas))(hits))
    cens = hits == 0
    pairs_m = [_decreasing(elp[i, j], cens[i, j], elp[i, j + 1], upper[i, j + 1], cens[i, j + 1])
               for i in range(len(eps_schedule)) for j in range(len(m_schedule) - 1)]
    last = len(m_schedule) - 1
    pairs_e = [_decreasing(elp[i, last], cens[i, last], elp[i + 1, last], upper[i + 1, last], cens[i + 1, last])
               for i in range(len(eps_schedule) - 1)]
    trend_m = all(p is not False for p in pairs_m) and any(p for p in pairs_m)
    trend_e = all(p is not False for p in pairs_e) and any(p for p in pairs_e)
    xy_elp = [float(e * np.log(k / replicas)) if k else None for e, k in zip(eps_schedule, xy)]
    return GapReport(eps_schedule, m_schedule, float(delta), int(replicas), hits, elp, upper, xy, xy_elp,
                     bool(trend_m), bool(trend_e), int(np.count_nonzero(~cens)))


# Hölder-topology spot check -------------------------------------------------

def select_tube_radius(rho, alpha, R, energy, C=HOLDER_TAIL_C):
    """Tube radius delta making the Hölder tail exponent rho^{1/a} / (C delta^{1/a-2}) exceed R + energy."""
    ia = 1.0 / alpha
    return (rho ** ia / (C * (R + energy))) ** (1.0 / (ia - 2.0))


def holder_tube_check(eps_schedule, replicas, seed, alpha=0.3, rho=1.0, R=1.0, n=1024,
                             delta=None, threads=1):
    """P[||sqrt(eps) W - h||_alpha >= rho, ||sqrt(eps) W - h||_inf <= delta] for h(t) = t.

    With b = 0 and sigma = 1 the skeleton of h is h itself.
    """
    energy = 1.0
    delta = select_tube_radius(rho, alpha, R, energy) if delta is None else float(delta)
    drv = BrownianDriver(seed, 1, 1.0, n, tag="holder-prop")
    line = np.linspace(0.0, 1.0, n + 1)[None, :, None]
    rows = []
    for eps in eps_schedule:
        def work(rng):
            e = np.sqrt(eps) * drv.path(np.arange(*rng)) - line
            tube = sup_norm_batch(e) <= delta
            if not np.any(tube):
                return 0, 0
            hn = holder_from_lag_maxima(lag_maxima(e[tube]), 1.0 / n, alpha)
            return int(np.count_nonzero(hn >= rho)), int(np.count_nonzero(tube))

        parts = parallel_map(work, chunk_ranges(replicas, 10000), threads)
        k = sum(p[0] for p in parts)
        rows.append({"eps": eps, "hits": k, "tube": sum(p[1] for p in parts), "p_hat": k / replicas,
                     "wilson_upper": wilson_upper(k, replicas), "bound": float(np.exp(-R / eps))})
    return {"alpha": alpha, "rho": rho, "R": R, "delta": delta, "n": n, "replicas": replicas, "rows": rows}
