"""Skeleton ODEs, the frozen-coefficient map F^m and rate functions.

psi solves psi' = b(t, psi, delta_psi).  The controlled skeleton
Phi(h)' = b(t, Phi, delta_psi) + sigma(t, Phi, delta_psi) hdot uses the Dirac
flow recorded while integrating psi, stage by stage, so Phi(0) reproduces
psi bit for bit.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .events import parse_event
from .exceptions import DomainError, ParameterError, RefinementError
from .measure_ops import _fast_uniform
from .path_space import CameronMartinPath, Path, TimeGrid, cm_to_path
from .rng import CounterStream

ATTAIN_TOL = 1e-6
_NODES = (0.0, 0.5, 0.5, 1.0)


def _dirac(y):
    return _fast_uniform(np.array(y, dtype=float).reshape(1, -1))


def _rhs(cs, t, y, mu, u):
    # y (R, d), u (d',) or None
    f = cs.b(t, y, mu)
    if u is not None:
        f = f + cs.sigma(t, y, mu) @ u
    return f


class DiracFlow:
    """psi on a grid with the Dirac measures at every RK4 stage."""

    def __init__(self, cs, x, grid):
        self.cs = cs
        self.grid = grid
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.size != cs.dim_x:
            raise DomainError("initial point has the wrong dimension")
        h = grid.dt
        nodes = np.empty((grid.n_steps + 1, cs.dim_x))
        nodes[0] = x
        mus = []
        y = x[None, :]
        zero = np.zeros(cs.dim_w)
        for k in range(grid.n_steps):
            t = k * h
            stage = []
            y1 = y
            m1 = _dirac(y1)
            k1 = _rhs(cs, t, y1, m1, zero)
            y2 = y + (0.5 * h) * k1
            m2 = _dirac(y2)
            k2 = _rhs(cs, t + 0.5 * h, y2, m2, zero)
            y3 = y + (0.5 * h) * k2
            m3 = _dirac(y3)
            k3 = _rhs(cs, t + 0.5 * h, y3, m3, zero)
            y4 = y + h * k3
            m4 = _dirac(y4)
            k4 = _rhs(cs, t + h, y4, m4, zero)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise RefinementError(f"psi became non-finite at step {k + 1}",
                                      suggested_steps=2 * grid.n_steps)
            mus.append((m1, m2, m3, m4))
            nodes[k + 1] = y[0]
        self.mus = mus
        self.nodes = nodes
        self.x = x

    def mid_atoms(self):
        """psi at cell midpoints (average of the two RK4 midpoint stages)."""
        return np.array([0.5 * (m[1].atoms[0] + m[2].atoms[0]) for m in self.mus])


def _integrate(cs, flow, control, n_ctrl, sens=False):
    """RK4 for Phi with control constant on n_ctrl cells; rows of y integrate together.

    control: (n_ctrl, d') or (R, n_ctrl, d') for R controls sharing the flow.
    Returns values (R, n+1, d) and, if sens, S (n+1, d, n_ctrl*d') for R == 1.
    """
    grid = flow.grid
    n, h = grid.n_steps, grid.dt
    u = np.asarray(control, dtype=float)
    if u.ndim == 2:
        u = u[None]
    R = u.shape[0]
    if n % n_ctrl:
        raise DomainError("integration grid must be a multiple of the control grid")
    per = n // n_ctrl
    d, dw = cs.dim_x, cs.dim_w
    y = np.tile(flow.x, (R, 1))
    out = np.empty((R, n + 1, d))
    out[:, 0] = y
    P = n_ctrl * dw
    if sens:
        if R != 1:
            raise ParameterError("sensitivities need a single control")
        S = np.zeros((d, P))
        S_out = np.zeros((n + 1, d, P))
    for k in range(n):
        t = k * h
        c = k // per
        uk = u[:, c]
        mus = flow.mus[k]
        if R == 1:
            stage = lambda s, yy: _rhs(cs, t + _NODES[s] * h, yy, mus[s], uk[0])
        else:
            stage = lambda s, yy: (cs.b(t + _NODES[s] * h, yy, mus[s])
                                   + np.einsum("rij,rj->ri", cs.sigma(t + _NODES[s] * h, yy, mus[s]), uk))
        if not sens:
            k1 = stage(0, y)
            k2 = stage(1, y + (0.5 * h) * k1)
            k3 = stage(2, y + (0.5 * h) * k2)
            k4 = stage(3, y + h * k3)
        else:
            cols = slice(c * dw, (c + 1) * dw)

            def dstage(s, yy, SS):
                ts = t + _NODES[s] * h
                J = cs.b_jac(ts, yy, mus[s])[0] + np.einsum("ijk,j->ik", cs.sigma_jac(ts, yy, mus[s])[0], uk[0])
                dS = J @ SS
                dS[:, cols] += cs.sigma(ts, yy, mus[s])[0]
                return dS
            k1 = stage(0, y)
            l1 = dstage(0, y, S)
            y2, S2 = y + (0.5 * h) * k1, S + (0.5 * h) * l1
            k2 = stage(1, y2)
            l2 = dstage(1, y2, S2)
            y3, S3 = y + (0.5 * h) * k2, S + (0.5 * h) * l2
            k3 = stage(2, y3)
            l3 = dstage(2, y3, S3)
            y4, S4 = y + h * k3, S + h * l3
            k4 = stage(3, y4)
            l4 = dstage(3, y4, S4)
            S = S + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
            S_out[k + 1] = S
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[:, k + 1] = y
    if not np.all(np.isfinite(out)):
        raise RefinementError("skeleton became non-finite", suggested_steps=2 * n)
    return (out, S_out) if sens else out


@dataclass(frozen=True, eq=False)
class SkeletonSolution:
    path: Path
    driver: CameronMartinPath
    residual: float


def _default_tol(values):
    return 1e-6 * (1.0 + float(np.max(np.abs(values))))


def _check_defect(coarse, fine, tol, n):
    defect = float(np.max(np.abs(coarse - fine[::2])))
    limit = _default_tol(coarse) if tol is None else tol
    if defect > limit:
        raise RefinementError(f"step-halving defect {defect:.3e} exceeds {limit:.3e}; try n_steps={4 * n}",
                              defect=defect, suggested_steps=4 * n)
    return defect


def solve_psi(cs, x, grid, tol=None, check=True):
    """psi' = b(t, psi, delta_psi) by RK4, with a step-halving accuracy check."""
    flow = DiracFlow(cs, x, grid)
    residual = 0.0
    if check:
        fine = DiracFlow(cs, x, TimeGrid(grid.horizon, 2 * grid.n_steps))
        residual = _check_defect(flow.nodes, fine.nodes, tol, grid.n_steps)
    zero = CameronMartinPath.zero(grid.horizon, grid.n_steps, cs.dim_w)
    return SkeletonSolution(Path(grid.horizon, flow.nodes), zero, residual)


def _refine_control(u, factor):
    return np.repeat(u, factor, axis=0)


def solve_skeleton(cs, x, h, grid=None, tol=None, check=True, flow=None):
    """Phi^x(h) on grid (default: the control grid of h)."""
    grid = TimeGrid(h.horizon, h.n_steps) if grid is None else grid
    if grid.horizon != h.horizon or grid.n_steps % h.n_steps:
        raise DomainError("solver grid must refine the control grid of h")
    if h.dim != cs.dim_w:
        raise DomainError("control dimension differs from the noise dimension")
    flow = DiracFlow(cs, x, grid) if flow is None else flow
    vals = _integrate(cs, flow, h.derivative, h.n_steps)[0]
    residual = 0.0
    if check:
        fgrid = TimeGrid(grid.horizon, 2 * grid.n_steps)
        fine = _integrate(cs, DiracFlow(cs, x, fgrid), h.derivative, h.n_steps)[0]
        residual = _check_defect(vals, fine, tol, grid.n_steps)
    return SkeletonSolution(Path(grid.horizon, vals), h, residual)


def _fm_batch(cs, x, g, m, psi_nodes, horizon):
    """F^m for a stack of driving paths g with shape (R, n+1, d')."""
    R, n1, dw = g.shape
    n = n1 - 1
    if m < 1 or n % m:
        raise DomainError("grid size must be a multiple of m")
    per = n // m
    dt = horizon / n
    out = np.empty((R, n1, cs.dim_x))
    y = np.tile(np.atleast_1d(np.asarray(x, dtype=float)), (R, 1))
    out[:, 0] = y
    frac = (np.arange(1, per + 1) * dt)[None, :, None]
    for k in range(m):
        i0 = k * per
        t = i0 * dt
        mu = _dirac(psi_nodes[i0])
        b = cs.b(t, y, mu)
        sig = cs.sigma(t, y, mu)
        dg = g[:, i0 + 1:i0 + per + 1] - g[:, i0:i0 + 1]
        out[:, i0 + 1:i0 + per + 1] = y[:, None, :] + b[:, None, :] * frac + np.einsum("rij,rkj->rki", sig, dg)
        y = out[:, i0 + per]
    return out


def discrete_skeleton_Fm(cs, x, g, m, psi=None):
    """Piecewise-frozen recursion with coefficients fixed at t_k = kT/m.

    g is a CameronMartinPath or any driving Path starting at 0.
    """
    gp = cm_to_path(g) if isinstance(g, CameronMartinPath) else g
    if gp.dim != cs.dim_w:
        raise DomainError("driver dimension differs from the noise dimension")
    if psi is None:
        psi = DiracFlow(cs, x, gp.grid).nodes
    return Path(gp.horizon, _fm_batch(cs, x, gp.values[None], m, psi, gp.horizon)[0])


# rate functions -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RateValue:
    value: float
    minimizer: Optional[CameronMartinPath] = None
    attainability_residual: float = 0.0
    infinite: bool = False
    upper_bound: bool = False
    feasible: bool = True
    diagnostics: dict = field(default_factory=dict)


def _cell_coefficients(cs, x, f, flow=None):
    fv = f.values
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if fv.shape[1] != cs.dim_x:
        raise DomainError("path dimension differs from the model")
    if np.max(np.abs(fv[0] - x)) > 1e-12 * (1 + np.max(np.abs(x))):
        raise DomainError("path does not start at x")
    grid = f.grid
    flow = DiracFlow(cs, x, grid) if flow is None else flow
    psi_mid = flow.mid_atoms()
    dt = grid.dt
    fdot = np.diff(fv, axis=0) / dt
    xm = 0.5 * (fv[1:] + fv[:-1])
    b = np.empty_like(fdot)
    sig = np.empty((grid.n_steps, cs.dim_x, cs.dim_w))
    for k in range(grid.n_steps):
        mu = _dirac(psi_mid[k])
        tm = (k + 0.5) * dt
        b[k] = cs.b(tm, xm[k][None], mu)[0]
        sig[k] = cs.sigma(tm, xm[k][None], mu)[0]
    return fdot, b, sig, dt


def rate_of_path(cs, x, f, flow=None):
    """I^x(f) of the piecewise-linear path f via per-cell minimum-norm controls."""
    fdot, b, sig, dt = _cell_coefficients(cs, x, f, flow)
    r = fdot - b
    hdot = np.einsum("kij,kj->ki", np.linalg.pinv(sig), r)
    resid = np.linalg.norm(np.einsum("kij,kj->ki", sig, hdot) - r, axis=1)
    excess = resid / (1.0 + np.linalg.norm(fdot, axis=1))
    worst = float(np.max(resid))
    if np.any(excess > ATTAIN_TOL):
        return RateValue(np.inf, None, worst, infinite=True)
    h = CameronMartinPath(f.horizon, hdot)
    return RateValue(0.5 * h.energy(), h, worst)


def rate_quadratic_form(cs, x, f, flow=None):
    """0.5 sum (fdot - b)^T (sigma sigma^T)^{-1} (fdot - b) dt for square invertible sigma."""
    if cs.dim_x != cs.dim_w:
        raise DomainError("quadratic form needs a square diffusion matrix")
    fdot, b, sig, dt = _cell_coefficients(cs, x, f, flow)
    r = fdot - b
    a = np.einsum("kij,klj->kil", sig, sig)
    return float(0.5 * dt * np.einsum("ki,ki->", r, np.linalg.solve(a, r[..., None])[..., 0]))


class RateObjective:
    """0.5 ||hdot||^2 + w s softplus(g(Phi(h)) / s) over piecewise-constant controls."""

    def __init__(self, cs, x, event, grid, n_ctrl, weight=1.0, tau=1e-4, hinge=1e-4, flow=None):
        self.cs = cs
        self.event = parse_event(event)
        self.grid = grid
        self.n_ctrl = int(n_ctrl)
        self.flow = DiracFlow(cs, x, grid) if flow is None else flow
        self.psi = self.flow.nodes
        self.weight = float(weight)
        self.tau = float(tau)
        self.width = hinge * self.event.scale
        self.cell = grid.horizon / self.n_ctrl

    def controls(self, z):
        return np.asarray(z, dtype=float).reshape(self.n_ctrl, self.cs.dim_w)

    def path_values(self, z):
        return _integrate(self.cs, self.flow, self.controls(z), self.n_ctrl)[0]

    def energy(self, z):
        return 0.5 * float(np.sum(np.asarray(z) ** 2)) * self.cell

    def feasible(self, z):
        return self.event.contains(self.path_values(z), self.grid.dt, self.psi)

    def constraint(self, z):
        return self.event.smooth(self.path_values(z), self.grid.dt, self.psi, self.tau)[0]

    def value_and_grad(self, z):
        z = np.asarray(z, dtype=float).ravel()
        vals, S = _integrate(self.cs, self.flow, self.controls(z), self.n_ctrl, sens=True)
        g, dg = self.event.smooth(vals[0], self.grid.dt, self.psi, self.tau)
        s = self.width
        a = g / s
        soft = np.logaddexp(0.0, a)
        val = self.energy(z) + self.weight * s * soft
        grad = z * self.cell + self.weight * expit(a) * np.einsum("kd,kdp->p", dg, S)
        return val, grad

    def linear_guess(self):
        """Cheapest control for the event under the dynamics linearized at h = 0.

        Union-type events (exit, Hölder complement) are scanned node by node
        or pair by pair; convex events start from the zero control.
        """
        from .events import ExitEvent, HolderOutEvent, TerminalEvent

        P = self.n_ctrl * self.cs.dim_w
        ev = self.event
        if not isinstance(ev, (TerminalEvent, ExitEvent, HolderOutEvent)):
            return np.zeros(P)
        psi, S = _integrate(self.cs, self.flow, np.zeros((self.n_ctrl, self.cs.dim_w)), self.n_ctrl, sens=True)
        psi = psi[0]
        if isinstance(ev, TerminalEvent):
            v = ev.params["v"]
            a = v @ S[-1]
            gap = ev.params["c"] - v @ psi[-1]
            return a * (gap / max(a @ a, 1e-300)) * 1.0001
        n1, d = psi.shape
        e = psi - ev.center(self.psi, n1, d)
        if isinstance(ev, ExitEvent):
            A = S
            D = e
            need = np.full(n1, ev.params["R"])
        else:
            i, j = np.triu_indices(n1, 1)
            A = S[j] - S[i]
            D = e[j] - e[i]
            need = ev.params["r"] * ((j - i) * self.grid.dt) ** ev.params["alpha"]
        best, best_z = np.inf, np.zeros(P)
        gram = np.einsum("kdp,kep->kde", A, A)
        for k in range(A.shape[0]):
            w, vecs = np.linalg.eigh(gram[k])
            if w[-1] <= 1e-14:
                continue
            dirs = [vecs[:, -1]]
            if np.linalg.norm(D[k]) > 0:
                dirs.append(D[k] / np.linalg.norm(D[k]))
            for u in dirs:
                for sgn in (1.0, -1.0):
                    r = sgn * need[k] * 1.0001 * u - D[k]
                    y = np.linalg.lstsq(gram[k], r, rcond=None)[0]
                    z = A[k].T @ y
                    en = 0.5 * self.cell * float(z @ z)
                    if en < best:
                        best, best_z = en, z
        return best_z


def rate_of_event(cs, x, event, init=None, budget=300, n_steps=64, n_ctrl=None, horizon=1.0,
                  seed=0, starts=5, taus=(1e-2, 1e-3, 1e-4), hinge=1e-4, doublings=12,
                  threads=1):
    """Upper bound on inf {0.5 ||hdot||^2 : Phi^x(h) in event} by penalized quasi-Newton.

    Starts from init plus starts-1 perturbations derived from (seed, start index).
    """
    from .rng import parallel_map

    event = parse_event(event)
    grid = TimeGrid(horizon, n_steps)
    n_ctrl = n_steps if n_ctrl is None else int(n_ctrl)
    flow = DiracFlow(cs, x, grid)
    if event.contains(flow.nodes, grid.dt, flow.nodes):
        zero = CameronMartinPath.zero(horizon, n_ctrl, cs.dim_w)
        return RateValue(0.0, zero, 0.0, upper_bound=True, diagnostics={"start": -1})
    def run(z_start):
        obj = RateObjective(cs, x, event, grid, n_ctrl, 1.0, taus[0], hinge, flow)
        evals = 0
        # each weight level restarts from the start point: a collapsed iterate
        # at h = 0 is a stationary point that no weight increase can leave
        for _ in range(doublings + 1):
            z = z_start
            for tau in taus:
                obj.tau = tau
                res = minimize(obj.value_and_grad, z, jac=True, method="L-BFGS-B",
                               options={"maxiter": budget, "gtol": 1e-10, "ftol": 1e-15})
                z, evals = res.x, evals + res.nfev
            if obj.feasible(z):
                break
            obj.weight *= 2.0
        ok = obj.feasible(z)
        return (obj.energy(z) if ok else np.inf), z, ok, obj.weight, evals

    if init is not None:
        if init.n_steps != n_ctrl or init.dim != cs.dim_w:
            raise DomainError("init must live on the control grid")
        z0 = init.derivative.ravel().copy()
    else:
        z0 = RateObjective(cs, x, event, grid, n_ctrl, flow=flow).linear_guess()
    spread = 0.1 * np.sqrt(np.mean(z0 ** 2)) + 0.05
    noise = CounterStream(seed, "rate-starts").gaussian(np.arange(1, starts), z0.size) if starts > 1 else None
    inits = [z0] + [z0 + spread * noise[i] for i in range(starts - 1)]

    results = parallel_map(run, inits, threads)
    feas = [(r[0], i) for i, r in enumerate(results) if r[2]]
    diag = {"values": [float(r[0]) for r in results], "weights": [r[3] for r in results],
            "evaluations": [int(r[4]) for r in results]}
    if not feas:
        return RateValue(np.inf, None, np.nan, upper_bound=True, feasible=False, diagnostics=diag)
    best, idx = min(feas)
    z = results[idx][1]
    h = CameronMartinPath(horizon, z.reshape(n_ctrl, cs.dim_w))
    diag["start"] = idx
    return RateValue(0.5 * h.energy(), h, 0.0, upper_bound=True, diagnostics=diag)
