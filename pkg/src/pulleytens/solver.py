"""Full Newton iteration on the free coordinates with substepped schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import GeometryError
from .model import StructureModel, TopologySet, partition_dofs
from .statics import StaticsState, evaluate_statics


class SolverError(RuntimeError):
    pass


class SingularTangent(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    tol_rel: float = 1e-6
    tol_abs: Optional[float] = None  # None: 1e-9 times the force scale
    max_iter: int = 100
    substeps: int = 1
    line_search: bool = True
    regularization: bool = True
    max_halvings: int = 10

    def __post_init__(self):
        if not (self.tol_rel > 0 and (self.tol_abs is None or self.tol_abs > 0)):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.substeps < 1:
            raise ValueError("max_iter and substeps must be at least 1")


def _lerp(a, b, k, count):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if count == 1:
        return b
    return a + (b - a) * (k / (count - 1))


@dataclass(frozen=True)
class Schedule:
    """Linear per-substep targets; both endpoints are solved.

    loads: (node id, start force, end force); rest_lengths: (member id, start,
    end); supports: (node id, start position, end position), of which only the
    fixed axes of that node are used.
    """

    substeps: int = 1
    loads: tuple = ()
    rest_lengths: tuple = ()
    supports: tuple = ()

    def __post_init__(self):
        if self.substeps < 1:
            raise ValueError("a schedule needs at least one substep")

    def load_case(self, model: StructureModel, k: int):
        scheduled = {int(nid): _lerp(a, b, k, self.substeps) for nid, a, b in self.loads}
        loads = [(nid, f) for nid, f in model.loads if nid not in scheduled]
        loads += sorted(scheduled.items())
        return loads

    def rest(self, model: StructureModel, k: int):
        out = np.array([m.rest_length for m in model.members], float)
        index = {m.id: i for i, m in enumerate(model.members)}
        for mid, a, b in self.rest_lengths:
            out[index[int(mid)]] = float(_lerp(a, b, k, self.substeps))
        return out

    def positions(self, model: StructureModel, k: int):
        x = model.positions()
        index = {nd.id: i for i, nd in enumerate(model.nodes)}
        for nid, a, b in self.supports:
            x[index[int(nid)]] = _lerp(a, b, k, self.substeps)
        return x


@dataclass
class SubstepRecord:
    index: int
    n: np.ndarray
    positions: np.ndarray
    n_a: np.ndarray
    residual_history: list
    iterations: int
    converged: bool
    residual_norm: float
    force_scale: float
    l_S: np.ndarray
    phi_C: np.ndarray
    t_c: np.ndarray
    l_C: np.ndarray
    rest_length: np.ndarray
    loads: list
    warnings: list = field(default_factory=list)

    @property
    def relative_residual(self) -> float:
        return self.residual_norm / self.force_scale if self.force_scale > 0 else self.residual_norm


@dataclass
class SolveResult:
    substeps: list
    converged: bool
    final: Optional[StaticsState]
    config: SolveConfig
    warnings: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def n_a(self):
        return [s.n_a for s in self.substeps]

    @property
    def residual_history(self):
        return [s.residual_history for s in self.substeps]

    @property
    def iterations(self):
        return [s.iterations for s in self.substeps]


def newton_step(K_Taa, P_a, regularization=True):
    """Correction dn_a solving K_Taa dn_a = P_a; returns (dn_a, regularized)."""
    K = np.asarray(K_Taa, float)
    P = np.asarray(P_a, float)
    if P.size == 0:
        return P.copy(), False
    if not np.any(P):
        return np.zeros_like(P), False

    def solvable(M):
        if not np.all(np.isfinite(M)):
            return False
        return np.linalg.cond(M) < 1e14

    if solvable(K):
        return np.linalg.solve(K, P), False
    if regularization:
        shift = 1e-12 * np.trace(K) / K.shape[0]
        if shift > 0:
            Kr = K + shift * np.eye(K.shape[0])
            if solvable(Kr):
                return np.linalg.solve(Kr, P), True
    raise SingularTangent("tangent stiffness is singular on the free coordinates")


def force_scale(state: StaticsState, topology: TopologySet) -> float:
    """Reference force for relative residuals: applied free load or largest member force."""
    applied = float(np.linalg.norm(topology.E_a.T @ (state.f - state.g)))
    inner = float(np.max(np.abs(state.t_c))) if state.t_c.size else 0.0
    return max(applied, inner)


def _threshold(state, topology, config):
    scale = force_scale(state, topology)
    tol_abs = 1e-9 * scale if config.tol_abs is None else config.tol_abs
    return max(tol_abs, config.tol_rel * scale), scale


def _solve_substep(topology: TopologySet, n, f, accel, rest, nb_target, config: SolveConfig):
    """Newton iterations for one set of targets. Returns (state, history, iterations, warnings)."""
    Ea, Eb = topology.E_a, topology.E_b
    n_a, n_b = partition_dofs(topology, n)
    warnings = []

    def evaluate(vec):
        return evaluate_statics(vec, topology, f, accel, rest)

    state = evaluate(n)
    nb_target = n_b if nb_target is None else np.asarray(nb_target, float)
    dnb = nb_target - n_b
    if dnb.size and np.any(dnb):
        # predictor including the boundary-motion term
        dn_a, reg = newton_step(state.K_Taa, state.P_a - state.K_Tab @ dnb, config.regularization)
        if reg:
            warnings.append("tangent regularized in the support-motion predictor")
        alpha = 1.0
        for _ in range(config.max_halvings + 1):
            try:
                state = evaluate(topology.assemble(n_a + alpha * dn_a, nb_target))
                break
            except GeometryError:
                alpha *= 0.5
        else:
            state = evaluate(topology.assemble(n_a, nb_target))
        n_a, n_b = n_a + alpha * dn_a, nb_target

    history = []
    for it in range(config.max_iter + 1):
        r = float(np.linalg.norm(state.P_a))
        history.append(r)
        thresh, _ = _threshold(state, topology, config)
        if r <= thresh:
            return state, history, it, warnings
        if it == config.max_iter:
            break
        dn_a, reg = newton_step(state.K_Taa, state.P_a, config.regularization)
        if reg:
            warnings.append(f"tangent regularized at iteration {it}")
        # energy slope along the step; the energy stays smooth where a string
        # turns slack, while the residual norm only stays continuous there
        slope = -float(state.P_a @ dn_a)
        alpha = 1.0
        accepted = None
        for h in range(config.max_halvings + 1):
            try:
                trial = evaluate(Ea @ (n_a + alpha * dn_a) + Eb @ n_b)
            except GeometryError:
                alpha *= 0.5
                continue
            decrease = np.linalg.norm(trial.P_a) < r or \
                (slope < 0 and trial.V <= state.V + 1e-4 * alpha * slope)
            if not config.line_search or decrease or h == config.max_halvings:
                accepted = trial
                break
            alpha *= 0.5
        if accepted is None:
            raise GeometryError("no valid geometry along the Newton direction after step halving")
        n_a = n_a + alpha * dn_a
        state = accepted
    raise MaxIterExceeded(f"no convergence in {config.max_iter} iterations "
                          f"(residual {history[-1]:.3e})")


def _record(k, state, topology, history, iterations, rest, loads, warnings, config):
    thresh, scale = _threshold(state, topology, config)
    geo = state.geometry
    n_a, _ = partition_dofs(topology, state.n)
    positions = state.n.reshape(-1, 3)[list(topology.attachment_offset)]
    warn = list(warnings) + list(state.warnings)
    return SubstepRecord(index=k, n=state.n.copy(), positions=positions.copy(), n_a=n_a,
                         residual_history=list(history), iterations=iterations,
                         converged=bool(history[-1] <= thresh), residual_norm=history[-1],
                         force_scale=scale, l_S=geo.l_S.copy(), phi_C=geo.phi_C.copy(),
                         t_c=state.t_c.copy(), l_C=geo.l_C.copy(), rest_length=np.array(rest),
                         loads=[(nid, tuple(map(float, f))) for nid, f in loads], warnings=warn)


def stepped_solve(model: StructureModel, schedule: Schedule, config: SolveConfig = None,
                  n0=None) -> SolveResult:
    """Solve every substep of a schedule, warm-starting from the previous one.

    A failing substep stops the trajectory; completed substeps are kept.
    """
    config = config or SolveConfig()
    topology = model.topology
    accel = model.gravity
    n = model.nodal_vector() if n0 is None else np.asarray(n0, float)
    records, warnings = [], []
    state = None
    prev_taut = None
    for k in range(schedule.substeps):
        loads = schedule.load_case(model, k)
        f = model.load_vector(loads)
        rest = schedule.rest(model, k)
        nb_target = partition_dofs(topology, model.nodal_vector(schedule.positions(model, k)))[1]
        try:
            state, history, its, warn = _solve_substep(topology, n, f, accel, rest, nb_target, config)
        except (SolverError, GeometryError, np.linalg.LinAlgError) as exc:
            return SolveResult(records, False, state, config, warnings,
                               f"substep {k}: {type(exc).__name__}: {exc}")
        if prev_taut is not None:
            for i in np.flatnonzero(prev_taut != state.taut):
                mid = topology.member_ids[i]
                warn.append(f"member {mid} became {'taut' if state.taut[i] else 'slack'}")
        prev_taut = state.taut.copy()
        rec = _record(k, state, topology, history, its, rest, loads, warn, config)
        warnings.extend(f"substep {k}: {w}" for w in warn)
        records.append(rec)
        n = state.n
    return SolveResult(records, all(r.converged for r in records), state, config, warnings)


def solve_equilibrium(model: StructureModel, config: SolveConfig = None, n0=None) -> SolveResult:
    """Equilibrium under the model's own loads, ramped over ``config.substeps`` increments."""
    config = config or SolveConfig()
    N = config.substeps
    if N == 1:
        schedule = Schedule(1)
    else:
        loads = tuple((nid, tuple(np.asarray(f) / N), f) for nid, f in model.loads)
        schedule = Schedule(N, loads=loads)
    return stepped_solve(model, schedule, config, n0)


def convergence_order(history, floor=0.0):
    """Order estimates log(r[k+1]/r[k]) / log(r[k]/r[k-1]) for residuals above ``floor``."""
    r = [v for v in history if v > floor]
    out = []
    for a, b, c in zip(r[:-2], r[1:-1], r[2:]):
        if a > 0 and b > 0 and c > 0 and b != a:
            out.append(math.log(c / b) / math.log(b / a))
    return out


def with_config(config: SolveConfig, **changes) -> SolveConfig:
    return replace(config, **changes)
