"""Fast structural checks run by `mvldp selftest`."""
import math

import numpy as np

from ._kernels import philox_block
from .events import parse_event
from .ldp_harness import sup_tail_bound
from .measure_ops import (EmpiricalMeasure, measure_add, measure_scale, modified_wasserstein, path_marginal,
                          wasserstein2, wasserstein2_to_dirac)
from .model import (CoefficientSet, EpsilonFamily, brownian, get_model, linear_drift, probe_lipschitz_sigma,
                    probe_monotonicity, probe_uniform_convergence)
from .mvsde_solver import simulate_particles, solve_picard
from .path_space import (CameronMartinPath, Path, TimeGrid, cm_to_path, holder_norm, restricted_norms,
                         schauder_decompose, sup_norm)
from .reporting import PLOT_KINDS
from .skeleton_rate import discrete_skeleton_Fm, rate_of_event, rate_of_path, solve_psi, solve_skeleton
from .strassen_lil import (LimitSetK, distance_to_K, linear_contraction, phi, probe_contraction, rescale,
                           transformed_coefficients)


def _row(name, observed, reference, tol):
    ok = abs(observed - reference) <= tol
    return name, float(observed), float(reference), tol, bool(ok)


def run_selftest():
    """Rows (name, observed, reference, tolerance, passed)."""
    rows = []
    out = philox_block(np.zeros((1, 4), dtype=np.uint32), 0, 0)[0]
    rows.append(("philox_kat_zero", int(out[0]), 0x6627E8D5, 0,
                 bool(list(out) == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8])))

    t = np.linspace(0.0, 1.0, 65)
    line = Path(1.0, 2.0 * t)
    rows.append(_row("sup_norm_line", sup_norm(line), 2.0, 1e-15))
    rows.append(_row("holder_norm_line", holder_norm(line, 0.3), 2.0, 1e-12))

    mu = EmpiricalMeasure.uniform(np.array([[0.0], [2.0]]))
    nu = EmpiricalMeasure.uniform(np.array([[1.0], [3.0]]))
    rows.append(_row("w2_shifted_pair", wasserstein2(mu, nu), 1.0, 1e-12))
    rows.append(_row("w2_to_dirac", wasserstein2_to_dirac(mu, np.array([1.0])), 1.0, 1e-12))
    rows.append(_row("w0_diracs", modified_wasserstein(EmpiricalMeasure.dirac([0.0]),
                                                       EmpiricalMeasure.dirac([0.3])), 0.3, 1e-12))

    cs = brownian(1)
    psi = solve_psi(cs, [0.0], TimeGrid(1.0, 16)).path
    rows.append(_row("psi_brownian_constant", float(np.max(np.abs(psi.values))), 0.0, 0.0))
    for c in (0.5, 1.0, 2.0):
        rows.append(_row(f"rate_of_line_c={c}", rate_of_path(cs, [0.0], Path(1.0, c * t)).value, c * c / 2, 1e-9))

    ev = parse_event("terminal:v=1,c=1")
    rows.append(("event_roundtrip", 1.0, 1.0, 0, parse_event(ev.to_string()).to_string() == ev.to_string()))

    gamma = linear_contraction(0.0)
    rows.append(("contraction_probe", 1.0, 1.0, 0, probe_contraction(gamma, samples=200).passed))
    u = math.e ** math.e + 1
    rows.append(_row("phi_value", phi(u), math.sqrt(u * math.log(math.log(u))), 0.0))
    flat = Path(64.0, np.zeros((4097, 1)))
    z = rescale(gamma, flat, 8)
    rows.append(_row("rescale_center_fixed", float(np.max(np.abs(z.values))), 0.0, 0.0))
    K = LimitSetK.for_model(cs, gamma)
    h = CameronMartinPath(1.0, np.full((64, 1), math.sqrt(2.0)))
    rows.append(_row("distance_member", distance_to_K(K.add_member(h), K, 0.25).value, 0.0, 1e-4))
    rows.extend(_more_rows())
    return rows


def _flag(name, ok):
    return name, 1.0 if ok else 0.0, 1.0, 0, bool(ok)


def _more_rows():
    rows = []
    t = np.linspace(0.0, 1.0, 101)
    const = Path(1.0, np.full((11, 1), 3.0))
    rows.append(_row("sup_norm_constant", sup_norm(const), 3.0, 0.0))
    rows.append(_row("holder_seminorm_constant", holder_norm(const, 0.3), 0.0, 0.0))
    line = Path(1.0, t[:, None])
    rows.append(_row("sup_norm_identity", sup_norm(line), 1.0, 1e-15))
    s0, h0 = restricted_norms(line, 0.0, 0.3)
    rows.append(_flag("restricted_norms_at_zero", s0 == 0.0 and h0 == 0.0))
    sT = restricted_norms(line, 1.0, 0.3)
    rows.append(_flag("restricted_norms_at_T", np.allclose(sT, (sup_norm(line), holder_norm(line, 0.3)))))
    lin64 = Path(1.0, np.linspace(0, 1, 65)[:, None])
    rows.append(_row("schauder_line_zero", float(np.max(schauder_decompose(lin64).flat)), 0.0, 1e-14))
    zero64 = Path(1.0, np.zeros((65, 1)))
    rows.append(_row("schauder_zero_path", float(np.max(schauder_decompose(zero64).flat)), 0.0, 0.0))
    one = CameronMartinPath(1.0, np.ones(50))
    rows.append(_row("cm_unit_energy", one.energy(), 1.0, 1e-12))
    rows.append(_row("cm_unit_is_identity", float(np.max(np.abs(cm_to_path(one).values[:, 0]
                                                               - np.linspace(0, 1, 51)))), 0.0, 1e-12))
    rows.append(_row("cm_zero_path", float(np.max(np.abs(cm_to_path(CameronMartinPath.zero(1.0, 8)).values))),
                     0.0, 0.0))

    d0, d1, d5 = (EmpiricalMeasure.dirac([v]) for v in (0.0, 1.0, 5.0))
    rows.append(_row("w2_diracs", wasserstein2(d0, d1), 1.0, 1e-15))
    rows.append(_row("w2_to_own_dirac", wasserstein2_to_dirac(EmpiricalMeasure.dirac([2.5]), [2.5]), 0.0, 0.0))
    rows.append(_row("w0_saturates", modified_wasserstein(d0, d5), 1.0, 0.0))
    u01 = EmpiricalMeasure.uniform(np.array([[0.0], [1.0]]))
    rows.append(_row("w0_identical", modified_wasserstein(u01, u01), 0.0, 0.0))
    rows.append(_row("add_diracs", float(measure_add(EmpiricalMeasure.dirac([2.0]),
                                                     EmpiricalMeasure.dirac([3.0])).atoms[0, 0]), 5.0, 0.0))
    rows.append(_row("scale_by_one", wasserstein2(measure_scale(1.0, u01), u01), 0.0, 0.0))
    rows.append(_row("scale_dirac", float(measure_scale(2.0, EmpiricalMeasure.dirac([3.0])).atoms[0, 0]),
                     6.0, 0.0))
    two = np.stack([np.zeros((11, 1)), np.full((11, 1), 2.0)])
    rows.append(_row("marginal_two_constants", wasserstein2(path_marginal(two, 0.4),
                                                            EmpiricalMeasure.uniform(np.array([[0.0], [2.0]]))),
                     0.0, 0.0))
    rows.append(_row("marginal_single_path", float(path_marginal(two[:1] + 1.5, 0.7).atoms[0, 0]), 1.5, 0.0))

    lin = linear_drift(0.7)
    rows.append(_row("monotone_linear_quotient", probe_monotonicity(lin, samples=200).statistic, 0.7, 1e-12))
    rows.append(_row("lipschitz_const_sigma", probe_lipschitz_sigma(lin, samples=200).statistic, 0.0, 0.0))
    bm = brownian(1)
    fam = EpsilonFamily.constant(bm)
    rows.append(_row("uniform_gap_constant", max(probe_uniform_convergence(fam, [0.5, 0.1], 100).gaps),
                     0.0, 0.0))
    off = EpsilonFamily.drift_offset(bm, lambda t, x, mu: np.ones_like(x), 1.0)
    rows.append(_row("uniform_gap_offset", probe_uniform_convergence(off, [0.5], 100).gaps[0], 0.5, 1e-15))

    grid = TimeGrid(1.0, 32)
    pic = solve_picard(linear_drift(-1.0), 0.3, 64, grid, 1.0, seed=0)
    rows.append(_row("picard_law_free_iterations", pic.iterations, 2, 0))
    ps = simulate_particles(bm, 0.0, 8, grid, 0.0, seed=0)
    rows.append(_row("noiseless_brownian_moment", float(np.max(np.abs(ps.paths))), 0.0, 0.0))

    h = CameronMartinPath(1.0, np.sin(np.arange(32.0)))
    rows.append(_row("skeleton_pure_noise", float(np.max(np.abs(solve_skeleton(bm, [0.4], h).path.values
                                                               - 0.4 - cm_to_path(h).values))), 0.0, 1e-12))
    mfou = get_model("mfou").coefficients
    zero = CameronMartinPath.zero(1.0, 32)
    rows.append(_flag("skeleton_of_zero_is_psi", np.array_equal(solve_skeleton(mfou, [0.8], zero).path.values,
                                                                solve_psi(mfou, [0.8], grid).path.values)))
    g = cm_to_path(h)
    rows.append(_row("fm_telescopes", float(np.max(np.abs(discrete_skeleton_Fm(bm, [0.4], g, 4).values
                                                          - 0.4 - g.values))), 0.0, 1e-12))
    psi = solve_psi(mfou, [0.8], grid).path
    rows.append(_row("rate_of_psi", rate_of_path(mfou, [0.8], psi).value, 0.0, 0.0))
    still = CoefficientSet("still", 1, 1, lambda t, x, mu: np.zeros_like(x),
                           lambda t, x, mu: np.zeros((x.shape[0], 1, 1)), 1.0, 2)
    rows.append(_flag("rate_without_noise_infinite",
                      rate_of_path(still, [0.0], Path(1.0, np.linspace(0, 1, 33)[:, None])).infinite))
    rows.append(_row("rate_event_containing_psi", rate_of_event(mfou, 0.8, "tube:r=0.1").value, 0.0, 0.0))

    rows.append(_flag("sup_bound_vacuous_small_delta", sup_tail_bound(1e-3, 0.1, 1.0, 1) >= 1.0))

    gamma = linear_contraction(0.0)
    rows.append(_row("rescale_starts_at_center", float(rescale(gamma, Path(64.0, np.cumsum(
        np.r_[0.0, np.ones(4096)])[:, None] / 64), 16).values[0, 0]), 0.0, 0.0))
    rows.append(_row("b_hat_pure_noise", float(np.max(np.abs(transformed_coefficients(
        gamma, bm, 50.0, np.array([[1.0], [-2.0]])).b_hat))), 0.0, 0.0))
    K = LimitSetK.for_model(bm, gamma)
    rows.append(_row("distance_center_path", distance_to_K(Path(1.0, np.zeros((33, 1))), K, 0.25).value,
                     0.0, 0.0))
    rows.append(_flag("plot_schemas", PLOT_KINDS["ldp-curve"][0] == "eps"
                      and PLOT_KINDS["picard-trace"] == ("iteration", "sup_time_W2")
                      and PLOT_KINDS["strassen-j-sweep"] == ("j", "u", "d_alpha_to_K", "A_jc")))
    return rows
