"""Cross-checks of the analytic engine against the independent oracles."""

from __future__ import annotations

import numpy as np

from .analysis import svd_modes
from .geometry import evaluate_geometry
from .model import partition_dofs
from .oracle import (NonConvergence, OracleLog, brute_self_stress_count, fd_gradient,
                     fd_jacobian, minimize_energy, oracle_geometry)
from .solver import stepped_solve
from .statics import compatibility_matrix, cts_reference_tangent, evaluate_statics

GRAD_TOL = 1e-6
HESS_TOL = 1e-5
SYM_TOL = 1e-8
GEOM_TOL = 1e-9
CTS_TOL = 1e-10
MIN_TOL = 1e-5


def _statics_at(model, n, loads, rest):
    return evaluate_statics(n, model.topology, model.load_vector(loads), model.gravity, rest)


def check_derivatives(log: OracleLog, model, n, loads=None, rest=None, label=""):
    """Residual against the energy gradient and K_Taa against the residual Jacobian."""
    topo = model.topology
    n_a, n_b = partition_dofs(topo, n)
    if n_a.size == 0:
        return

    def state(x):
        return _statics_at(model, topo.assemble(x, n_b), loads, rest)

    st = state(n_a)
    grad = fd_gradient(lambda x: state(x).V, n_a)
    # near equilibrium the residual vanishes, so measure against the force level
    force = max(np.linalg.norm(topo.E_a.T @ (st.f - st.g)), float(np.abs(st.t_c).max(initial=0.0)))
    log.compare(f"{label}residual vs energy gradient", -st.P_a, grad, GRAD_TOL,
                scale=max(np.linalg.norm(grad), np.linalg.norm(st.P_a), force, 1e-300))
    jac = fd_jacobian(lambda x: -state(x).P_a, n_a)
    log.compare(f"{label}K_Taa vs residual Jacobian", st.K_Taa, jac, HESS_TOL)
    K = st.K_T
    log.check(f"{label}K_T symmetry", float(np.linalg.norm(K - K.T) / np.linalg.norm(K)),
              SYM_TOL, np.linalg.norm(K - K.T) <= SYM_TOL * np.linalg.norm(K))


def check_geometry(log: OracleLog, model, n, label=""):
    """Straight lengths, tangent points, contact angles and member lengths by construction."""
    topo = model.topology
    geo = evaluate_geometry(n, topo)
    positions = n.reshape(-1, 3)[list(topo.attachment_offset)]
    ref = oracle_geometry(model, positions)
    sid = topo.segment_ids
    log.compare(f"{label}straight lengths", geo.l_S, [ref.straight[s] for s in sid], GEOM_TOL)
    log.compare(f"{label}tangent points",
                np.concatenate([geo.tangent_start.ravel(), geo.tangent_end.ravel()]),
                np.concatenate([np.ravel([ref.tangent_start[s] for s in sid]),
                                np.ravel([ref.tangent_end[s] for s in sid])]),
                GEOM_TOL)
    log.compare(f"{label}member lengths", geo.l_C,
                [ref.member_length[m] for m in topo.member_ids], GEOM_TOL)
    ours, theirs, seen = [], [], {}
    for j in range(topo.n_junction):
        i = int(topo.junction_member[j])
        k = seen.get(i, 0)
        seen[i] = k + 1
        key = (int(topo.member_ids[i]), k)
        if topo.junction_radius[j] > 0 and key in ref.wraps:
            ours.append(geo.phi_C[j])
            theirs.append(ref.wraps[key])
    if ours:
        log.compare(f"{label}contact angles", ours, theirs, GEOM_TOL, scale=max(1.0, np.abs(theirs).max()))


def check_compatibility(log: OracleLog, model, n, loads=None, rest=None, label=""):
    """B_lc = A_2c^T exactly, and B_lc dn predicts dl_C to second order."""
    topo = model.topology
    st = _statics_at(model, n, loads, rest)
    geo = st.geometry
    _, B_lc = compatibility_matrix(st.A_2c, geo, topo)
    log.check(f"{label}B_lc equals A_2c^T bitwise", 0.0 if np.array_equal(B_lc, st.A_2c.T) else 1.0,
              0.0, np.array_equal(B_lc, st.A_2c.T))
    rng = np.random.default_rng(7)
    n_a, n_b = partition_dofs(topo, n)
    if n_a.size == 0:
        return
    d = rng.standard_normal(n_a.size)
    d *= 1e-3 * max(1.0, np.abs(n).max()) / np.linalg.norm(d)
    errs = []
    for k in range(4):
        dn_a = d / 2 ** k
        dn = topo.E_a @ dn_a
        l1 = evaluate_geometry(topo.assemble(n_a + dn_a, n_b), topo).l_C
        errs.append(np.linalg.norm(l1 - geo.l_C - B_lc @ dn))
    orders = [np.log2(a / b) for a, b in zip(errs[:-1], errs[1:]) if a > 0 and b > 0]
    order = float(np.mean(orders)) if orders else float("inf")
    log.check(f"{label}compatibility error order", order, 1.9, order >= 1.9 or max(errs) < 1e-14)


def check_degeneration(log: OracleLog, model, n, loads=None, rest=None, label=""):
    """Zero-radius models: K_T agrees with the classical clustered formula."""
    topo = model.topology
    if np.any(topo.R > 0):
        return
    st = _statics_at(model, n, loads, rest)
    ref = cts_reference_tangent(n, topo, st.t_c, rest, st.taut)
    log.compare(f"{label}K_T vs zero-radius reference", st.K_T, ref, CTS_TOL)
    log.check(f"{label}l_S equals l", 0.0 if np.array_equal(st.geometry.l_S, st.geometry.l) else 1.0,
              0.0, np.array_equal(st.geometry.l_S, st.geometry.l))


def check_self_stress(log: OracleLog, model, n, rank_tol=1e-10, label=""):
    topo = model.topology
    if np.any(topo.R > 0) or any(len(m.segments) != 1 for m in model.members):
        return
    st = _statics_at(model, n, None, None)
    modes = svd_modes(st.A_2c_free, rank_tol)
    exact = brute_self_stress_count(model)
    log.check(f"{label}self-stress count (svd {modes.self_stress_count}, exact {exact})",
              abs(modes.self_stress_count - exact), 0, modes.self_stress_count == exact)


def check_solution(log: OracleLog, deck, result, label=""):
    """Converged Newton state against direct energy minimization from a nearby start."""
    model = deck.model
    rec = result.substeps[-1]
    rest = {mid: float(v) for mid, v in zip(model.topology.member_ids, rec.rest_length)}
    scale = max(1.0, float(np.abs(rec.positions).max()))
    rng = np.random.default_rng(11)
    start = rec.positions.copy()
    for k, nd in enumerate(model.nodes):
        for d, ax in enumerate("xyz"):
            if ax not in nd.fixed:
                start[k, d] += 1e-4 * scale * rng.uniform(-1.0, 1.0)
    try:
        res = minimize_energy(model, start, loads=rec.loads, rest_lengths=rest)
    except NonConvergence as exc:
        log.check(f"{label}energy minimum ({exc})", float("inf"), MIN_TOL, False)
        return
    log.compare(f"{label}Newton state vs energy minimum", rec.positions, res.positions, MIN_TOL,
                scale=scale)


def verify_deck(deck, log: OracleLog = None, solve=True) -> OracleLog:
    """Run every applicable oracle check on a deck; returns the report log."""
    log = log or OracleLog()
    model = deck.model
    n0 = model.nodal_vector()
    check_geometry(log, model, n0, "initial: ")
    check_derivatives(log, model, n0, label="initial: ")
    check_compatibility(log, model, n0, label="initial: ")
    check_degeneration(log, model, n0, label="initial: ")
    check_self_stress(log, model, n0)
    if not solve:
        return log
    result = stepped_solve(model, deck.schedule, deck.config)
    ok = result.converged and result.error is None
    worst = max((r.relative_residual for r in result.substeps), default=float("inf"))
    log.check(f"Newton converged on all {deck.schedule.substeps} substeps", worst,
              deck.config.tol_rel, ok)
    if not ok:
        return log
    rec = result.substeps[-1]
    check_geometry(log, model, rec.n, "solved: ")
    check_derivatives(log, model, rec.n, rec.loads, rec.rest_length, "solved: ")
    check_degeneration(log, model, rec.n, rec.loads, rec.rest_length, "solved: ")
    check_solution(log, deck, result, "solved: ")
    return log
