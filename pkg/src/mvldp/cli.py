"""Command-line entry point: `mvldp <command> [--key value ...]`.

Exit codes: 0 when every assertion passes, 1 on a failed assertion or a
numerical failure, 2 on a configuration error.
"""
import argparse
import os
import sys
import time

import numpy as np

from .exceptions import (ConfigError, DomainError, NonFiniteStateError, ParameterError, RefinementError,
                         UnsupportedConfigurationError)
from .reporting import (ExperimentConfig, ExperimentReport, emit_plot_data, read_config_file, write_csv,
                        write_report)

STOCHASTIC = ("simulate", "picard", "ldp-verify", "strassen")


def _flist(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _ilist(text):
    return tuple(int(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _opt(kind):
    def conv(text):
        return None if str(text).strip().lower() in ("", "none") else kind(text)
    return conv


_MODEL = ("model", str, "mfou")
SCHEMAS = {
    "simulate": [_MODEL, ("x0", float, 0.0), ("particles", int, 2048), ("n_steps", int, 256),
                 ("horizon", float, 1.0), ("eps", float, 1.0), ("moment_p", int, 2)],
    "picard": [_MODEL, ("x0", float, 0.0), ("particles", int, 1024), ("n_steps", int, 256),
               ("horizon", float, 1.0), ("eps", float, 1.0), ("tol", float, 1e-3), ("max_iter", int, 20)],
    "skeleton": [_MODEL, ("x0", float, 0.0), ("control", _flist, (0.0,)), ("n_steps", int, 64),
                 ("horizon", float, 1.0), ("tol", _opt(float), None)],
    "rate": [_MODEL, ("x0", float, 0.0), ("event", str, None), ("n_steps", int, 64), ("horizon", float, 1.0),
             ("budget", int, 300), ("starts", int, 5), ("reference", _opt(float), None), ("rtol", float, 0.01)],
    "ldp-verify": [("mode", str, "sandwich"), _MODEL, ("event", str, "exit:R=0.7"), ("eps", _flist, (0.4, 0.2, 0.1)),
                   ("replicas", int, 100000), ("n_steps", int, 256), ("x0", float, 0.0),
                   ("exact_tail", _bool, False), ("band", _opt(float), None), ("n", int, 1024),
                   ("us", _flist, (2.0, 3.0, 4.0)), ("vs", _flist, (0.5, 1.0)), ("alphas", _flist, (0.2, 0.3, 0.4)),
                   ("deltas", _flist, (0.5, 1.0)), ("m", _ilist, (4, 16, 64)), ("delta", _opt(float), None),
                   ("alpha", float, 0.3), ("rho", float, 1.0), ("R", float, 1.0)],
    "strassen": [("model", str, "brownian"), ("U", int, 1_000_000), ("c", float, 2.0), ("alpha", float, 0.25),
                 ("seeds", int, 64), ("n_per_unit", int, 64), ("n_z", int, 64), ("u_per_level", int, 8),
                 ("tail_levels", int, 1), ("distances", _bool, True), ("dist_budget", int, 200),
                 ("band_lo", float, 1.15), ("band_hi", float, 1.67)],
    "probe": [_MODEL, ("samples", int, 10000), ("box", float, 5.0)],
    "selftest": [],
}
GLOBAL_KEYS = ("seed", "threads", "out", "precision", "config")
LDP_MODES = ("sandwich", "holder-bound", "sup-bound", "gap", "holder-prop")


def _parser():
    p = argparse.ArgumentParser(prog="mvldp", description="McKean-Vlasov small-noise experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, keys in SCHEMAS.items():
        sp = sub.add_parser(name)
        for key in GLOBAL_KEYS + tuple(k[0] for k in keys):
            flags = {f"--{key}", f"--{key.replace('_', '-')}"}
            sp.add_argument(*sorted(flags), dest=key, default=None)
    return p


def build_config(argv):
    """Parse argv into an ExperimentConfig: schema defaults, then the config file, then flags."""
    ns = _parser().parse_args(argv)
    cmd = ns.command
    schema = {k: (conv, default) for k, conv, default in SCHEMAS[cmd]}
    raw = {}
    if ns.config is not None:
        raw.update(read_config_file(ns.config))
    raw.update({k: v for k, v in vars(ns).items() if k not in ("command", "config") and v is not None})
    for key in raw:
        if key not in schema and key not in GLOBAL_KEYS:
            raise ConfigError(f"unknown key '{key}' for command '{cmd}'")
    values = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}': {exc}") from None
        else:
            values[key] = default
    try:
        seed = int(raw["seed"]) if "seed" in raw else None
        threads = int(raw.get("threads", 1))
        precision = int(raw.get("precision", 10))
    except ValueError as exc:
        raise ConfigError(f"bad global value: {exc}") from None
    if seed is None:
        if cmd in STOCHASTIC:
            raise ConfigError(f"missing required key 'seed' for command '{cmd}'")
        seed = 0
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if threads < 1 or not 1 <= precision <= 17:
        raise ConfigError("threads must be >= 1 and precision in 1..17")
    if cmd == "rate" and values["event"] is None:
        raise ConfigError("missing required key 'event' for command 'rate'")
    if cmd == "ldp-verify" and values["mode"] not in LDP_MODES:
        raise ConfigError(f"unknown mode '{values['mode']}'; choose from {list(LDP_MODES)}")
    return ExperimentConfig(cmd, values, seed, raw.get("out"), threads, precision)


# commands ------------------------------------------------------------------------------

def _grid(v):
    from .path_space import TimeGrid
    return TimeGrid(v["horizon"], v["n_steps"])


def _cmd_simulate(cfg, rep):
    from .measure_ops import measure_to_csv
    from .model import get_model
    from .mvsde_solver import continuity_diagnostic, moment_diagnostic, simulate_particles

    v = cfg.values
    entry = get_model(v["model"])
    ps = simulate_particles(entry.coefficients, v["x0"], v["particles"], _grid(v), v["eps"], cfg.seed)
    term = ps.terminal()
    m, se = moment_diagnostic(ps, v["moment_p"])
    res = {"terminal_mean": term.mean(axis=0), "terminal_variance": term.var(axis=0, ddof=1),
           "moment": {"p": v["moment_p"], "mean": m, "se": se}}
    if v["eps"] > 0:
        fit = continuity_diagnostic(ps)
        res["continuity"] = {"slope": fit.slope, "half_width": fit.half_width, "intercept": fit.intercept,
                             "log_lags": np.log(fit.lags * ps.grid.dt), "log_mean_sq": np.log(fit.mean_sq)}
    rep.results = res
    rep.check("states_finite", bool(np.all(np.isfinite(ps.paths))), True, None, np.all(np.isfinite(ps.paths)))
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        from .measure_ops import EmpiricalMeasure
        with open(os.path.join(cfg.out, "terminal.csv"), "w", encoding="utf-8") as fh:
            fh.write(measure_to_csv(EmpiricalMeasure.uniform(term)))
        if "continuity" in res:
            emit_plot_data(rep, "continuity-fit", cfg.out, cfg.precision)


def _cmd_picard(cfg, rep):
    from .model import get_model
    from .mvsde_solver import solve_picard

    v = cfg.values
    sol = solve_picard(get_model(v["model"]).coefficients, v["x0"], v["particles"], _grid(v), v["eps"],
                       tol=v["tol"], max_iter=v["max_iter"], seed=cfg.seed, keep_history=False)
    trace = list(sol.convergence_trace)
    term = sol.final_paths[:, -1]
    rep.results = {"iterations": sol.iterations, "convergence_trace": trace, "converged": sol.converged,
                   "terminal_mean": term.mean(axis=0), "terminal_variance": term.var(axis=0, ddof=1)}
    rep.check("converged", trace[-1] if trace else None, v["tol"], v["tol"], sol.converged)
    if cfg.out:
        emit_plot_data(rep, "picard-trace", cfg.out, cfg.precision)


def _cmd_skeleton(cfg, rep):
    from .model import get_model
    from .path_space import CameronMartinPath, write_path
    from .skeleton_rate import solve_skeleton

    v = cfg.values
    cs = get_model(v["model"]).coefficients
    ctrl = np.asarray(v["control"], dtype=float)
    if ctrl.size == cs.dim_w:
        ctrl = np.tile(ctrl, (v["n_steps"], 1))
    elif ctrl.size == v["n_steps"] * cs.dim_w:
        ctrl = ctrl.reshape(v["n_steps"], cs.dim_w)
    else:
        raise ConfigError("control needs dim_w values or one value per cell and noise dimension")
    h = CameronMartinPath(v["horizon"], ctrl)
    sol = solve_skeleton(cs, v["x0"], h, tol=v["tol"])
    rep.results = {"terminal": sol.path.values[-1], "energy": h.energy(), "defect": sol.residual,
                   "values": sol.path.values}
    rep.check("finite", True, True, None, bool(np.all(np.isfinite(sol.path.values))))
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_path(sol.path, os.path.join(cfg.out, "skeleton.csv"))


def _cmd_rate(cfg, rep):
    from .events import parse_event
    from .model import get_model
    from .skeleton_rate import rate_of_event

    v = cfg.values
    entry = get_model(v["model"])
    event = parse_event(v["event"])
    val = rate_of_event(entry.coefficients, v["x0"], event, budget=v["budget"], n_steps=v["n_steps"],
                        horizon=v["horizon"], seed=cfg.seed, starts=v["starts"], threads=cfg.threads)
    rep.results = {"event": event.to_string(), "value": val.value, "feasible": val.feasible,
                   "upper_bound": val.upper_bound,
                   "minimizer": None if val.minimizer is None else val.minimizer.derivative.ravel()}
    rep.check("feasible", val.feasible, True, None, val.feasible)
    ref = v["reference"]
    if ref is None:
        ref = _known_rate(entry, event, v["x0"], v["horizon"])
    if ref is not None:
        rep.check("value_vs_reference", val.value, ref, v["rtol"], abs(val.value - ref) <= v["rtol"] * abs(ref))


def _known_rate(entry, event, x0, horizon):
    """Closed-form event rates from the model card, when they apply."""
    from .events import ExitEvent, TerminalEvent

    p = event.params
    if entry.name == "brownian" and isinstance(event, TerminalEvent) and horizon == 1.0:
        v = np.atleast_1d(p["v"])
        gap = (p["c"] - float(v @ np.full(v.size, x0))) / np.linalg.norm(v)
        return 0.5 * max(gap, 0.0) ** 2
    if entry.name == "mfou" and isinstance(event, ExitEvent) and x0 == 0.0 and event.params.get("center") == "zero":
        return float(entry.facts["exit_rate"][0](p["R"], horizon))
    return None


def _cmd_ldp(cfg, rep):
    from . import ldp_harness as lh
    from .model import get_model

    v = cfg.values
    mode = v["mode"]
    if mode == "sandwich":
        exp = lh.LdpExperiment(v["model"], v["event"], v["eps"], v["replicas"], seed=cfg.seed,
                               n_steps=v["n_steps"], x0=v["x0"], exact_tail=v["exact_tail"])
        est = lh.estimate_event_probability(exp, threads=cfg.threads)
        band = v["band"] if v["band"] is not None else get_model(v["model"]).card.get("ldp_band", 0.2)
        mono, final = lh.sandwich_checks(est, band)
        rep.results = {"estimate": est.as_dict(), "band": band}
        rep.check("monotone_toward_reference", est.rate_hat, est.reference, None, mono)
        cells = [{"eps": e, "hits": k, "replicas": est.replicas, "p_hat": p, "wilson_lo": w[0], "wilson_hi": w[1],
                  "minus_eps_log_p": r, "censored": c, "reference": est.reference}
                 for e, k, p, w, r, c in zip(est.eps, est.hits, est.p_hat, est.wilson, est.rate_hat, est.censored)]
        rep.check("final_within_band", est.rate_hat[-1], est.reference, band, final)
        if cfg.out:
            emit_plot_data(rep, "ldp-curve", cfg.out, cfg.precision)
            _cells_csv(cfg, cells)
    elif mode == "holder-bound":
        cells = lh.check_holder_event_grid(v["us"], v["vs"], v["alphas"], v["replicas"], v["n"], cfg.seed,
                                           threads=cfg.threads)
        rep.results = {"cells": [c.as_dict() for c in cells], "C": lh.HOLDER_TAIL_C}
        if cfg.out:
            _cells_csv(cfg, [_flat_cell(c) for c in cells])
        for c in cells:
            rep.check(c.name, c.p_hat, c.bound, None, c.passed)
    elif mode == "sup-bound":
        cells = lh.check_sup_grid(v["deltas"], v["eps"], v["replicas"], cfg.seed, n=v["n"], threads=cfg.threads)
        rep.results = {"cells": [c.as_dict() for c in cells]}
        if cfg.out:
            _cells_csv(cfg, [_flat_cell(c) for c in cells])
        for c in cells:
            rep.check(c.name, c.p_hat, c.bound, None, c.passed)
    elif mode == "gap":
        gr = lh.exponential_equivalence_gap(v["model"], v["eps"], v["m"], v["replicas"], cfg.seed,
                                            delta=0.25 if v["delta"] is None else v["delta"],
                                            n_steps=v["n_steps"], x0=v["x0"], threads=cfg.threads)
        rep.results = gr.as_dict()
        rep.check("decreasing_in_m", gr.trend_in_m, True, None, gr.trend_in_m)
        rep.check("decreasing_in_eps", gr.trend_in_eps, True, None, gr.trend_in_eps)
        rep.check("informative_cells", gr.informative, 6, None, gr.informative >= 6)
        if cfg.out:
            _cells_csv(cfg, [{"eps": e, "m": m, "hits": int(gr.hits[i, j]), "replicas": gr.replicas,
                              "eps_log_p": float(gr.eps_log_p[i, j]), "eps_log_p_upper": float(gr.upper[i, j])}
                             for i, e in enumerate(gr.eps) for j, m in enumerate(gr.m)])
    else:
        out = lh.holder_tube_check(v["eps"], v["replicas"], cfg.seed, alpha=v["alpha"], rho=v["rho"],
                                          R=v["R"], n=v["n"], delta=v["delta"], threads=cfg.threads)
        rep.results = out
        for row in out["rows"]:
            rep.check(f"eps={row['eps']}", row["p_hat"], row["bound"], None, row["p_hat"] <= row["bound"])
        if cfg.out:
            _cells_csv(cfg, out["rows"])


def _flat_cell(c):
    row = dict(c.params)
    row.update(hits=c.hits, replicas=c.replicas, p_hat=c.p_hat, wilson_lo=c.wilson[0], wilson_hi=c.wilson[1],
               bound=c.bound, exact=c.exact, passed=c.passed)
    return row


def _cells_csv(cfg, rows):
    """One line per experiment cell in out/cells.csv, columns in first-seen order."""
    cols = list(dict.fromkeys(k for r in rows for k in r))
    write_csv(rows, cols, os.path.join(cfg.out, "cells.csv"), cfg.precision)


def _cmd_strassen(cfg, rep):
    from .strassen_lil import strassen_experiment

    v = cfg.values
    r = strassen_experiment(v["model"], U=v["U"], c=v["c"], alpha=v["alpha"], seed=cfg.seed, n_traj=v["seeds"],
                            n_per_unit=v["n_per_unit"], n_z=v["n_z"], u_per_level=v["u_per_level"],
                            tail_levels=v["tail_levels"], distances=v["distances"],
                            dist_budget=v["dist_budget"], threads=cfg.threads)
    d = r.as_dict()
    d.pop("runtime_s")
    rep.results = d
    lo, hi = v["band_lo"], v["band_hi"]
    rep.check("sample_max_sup_Z1_in_band", r.sample_max, [lo, hi], None, lo <= r.sample_max <= hi)
    for name, ok in r.checks.items():
        rep.check(name, ok, True, None, ok)
    if cfg.out:
        emit_plot_data(rep, "strassen-j-sweep", cfg.out, cfg.precision)
        write_csv(d["levels"], ("j", "u", "d_alpha_to_K", "A_jc"), os.path.join(cfg.out, "levels.csv"),
                  cfg.precision)


def _cmd_probe(cfg, rep):
    from .model import get_model, probe_all
    from .strassen_lil import linear_contraction, probe_contraction

    v = cfg.values
    cs = get_model(v["model"]).coefficients
    reports = probe_all(cs, v["samples"], v["box"], cfg.seed)
    rep.results = {"probes": [r.as_dict() for r in reports]}
    for r in reports:
        rep.check(r.name, r.statistic, r.declared, None, r.passed)
    cp = probe_contraction(linear_contraction(np.zeros(cs.dim_x)), seed=cfg.seed)
    rep.results["contraction"] = cp.as_dict()
    rep.check("contraction_linear", cp.passed, True, None, cp.passed)


def _cmd_selftest(cfg, rep):
    from .selftest import run_selftest

    rows = run_selftest()
    rep.results = {"examples": len(rows)}
    for name, observed, reference, tol, ok in rows:
        rep.check(name, observed, reference, tol, ok)


COMMANDS = {"simulate": _cmd_simulate, "picard": _cmd_picard, "skeleton": _cmd_skeleton, "rate": _cmd_rate,
            "ldp-verify": _cmd_ldp, "strassen": _cmd_strassen, "probe": _cmd_probe, "selftest": _cmd_selftest}


def run(argv, stdout=None):
    """Run one command; returns the exit code."""
    stdout = sys.stdout if stdout is None else stdout
    try:
        cfg = build_config(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    except (ConfigError, ParameterError, DomainError, OSError) as exc:
        print(f"mvldp: configuration error: {exc}", file=sys.stderr)
        return 2
    rep = ExperimentReport(cfg)
    t0 = time.perf_counter()
    try:
        COMMANDS[cfg.command](cfg, rep)
    except (ConfigError, ParameterError, DomainError, UnsupportedConfigurationError) as exc:
        print(f"mvldp: configuration error: {exc}", file=sys.stderr)
        return 2
    except (RefinementError, NonFiniteStateError) as exc:
        print(f"mvldp: numerical failure: {exc}", file=sys.stderr)
        rep.check("numerics", str(exc), None, None, False)
    rep.wall_clock = time.perf_counter() - t0
    if cfg.out:
        write_report(rep, cfg.out)
    stdout.write(rep.to_json() + "\n")
    for a in rep.assertions:
        if not a.passed:
            print(f"mvldp: assertion failed: {a.name}", file=sys.stderr)
    return 0 if rep.passed else 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
