"""Slow, independent reference computations.

Nothing here imports the analytic geometry or statics code. Tangent lines are
found by bisection on the tangent direction, member lengths are summed from
explicit tangent points and arcs, and equilibria come from minimizing the
total potential energy directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

EPS = np.finfo(float).eps


class EvaluationFailure(RuntimeError):
    pass


class NoTangent(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleReport:
    name: str
    analytic: object
    oracle: object
    abs_err: float
    rel_err: float
    tol: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: rel_err={self.rel_err:.3e} abs_err={self.abs_err:.3e} tol={self.tol:.1e}"


@dataclass
class OracleLog:
    """Append-only collection of comparison reports."""

    reports: list = field(default_factory=list)

    def compare(self, name, analytic, oracle, tol, scale=None) -> OracleReport:
        a = np.asarray(analytic, float)
        o = np.asarray(oracle, float)
        abs_err = float(np.linalg.norm((a - o).ravel()))
        ref = float(np.linalg.norm(o.ravel())) if scale is None else float(scale)
        rel_err = abs_err / ref if ref > 0 else abs_err
        rep = OracleReport(name, analytic, oracle, abs_err, rel_err, tol, bool(rel_err <= tol))
        self.reports.append(rep)
        return rep

    def check(self, name, value, tol, passed) -> OracleReport:
        """Record a scalar diagnostic with an explicit verdict."""
        rep = OracleReport(name, value, None, float(value), float(value), tol, bool(passed))
        self.reports.append(rep)
        return rep

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def _default_step(x, factor=1e-6):
    # 1e-6 of the configuration scale sits near the cube root of machine epsilon,
    # where truncation and rounding errors of a central difference balance
    x = np.asarray(x, float)
    return factor * max(1.0, float(np.max(np.abs(x)))) if x.size else factor


def _probe(fn, x, step, stencil):
    h = step
    for _ in range(9):
        try:
            return stencil(fn, x, h)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError):
            h *= 0.5
    raise EvaluationFailure("function not evaluable near the point, even after halving the step")


def _extrapolated(central, extrapolate):
    # Richardson: (4 D(h/2) - D(h)) / 3 cancels the h^2 error of a central difference
    if not extrapolate:
        return central

    def stencil(f, x, h):
        return (4.0 * central(f, x, 0.5 * h) - central(f, x, h)) / 3.0

    return stencil


def fd_gradient(fn, x, step=None, extrapolate=True):
    """Central-difference gradient of a scalar function, Richardson-extrapolated by default."""
    x = np.asarray(x, float)
    h0 = _default_step(x) if step is None else step

    def central(f, x, h):
        g = np.empty(x.size)
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = h
            g[i] = (f(x + e) - f(x - e)) / (2 * h)
        return g

    return _probe(fn, x, h0, _extrapolated(central, extrapolate))


def fd_jacobian(fn, x, step=None, extrapolate=True):
    """Central-difference Jacobian of a vector function, rows = outputs."""
    x = np.asarray(x, float)
    h0 = _default_step(x) if step is None else step

    def central(f, x, h):
        cols = []
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = h
            cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
        return np.array(cols).T

    return _probe(fn, x, h0, _extrapolated(central, extrapolate))


def fd_hessian(fn, x, step=None):
    """Second-order central stencil Hessian of a scalar function.

    The default step is 1e-4 of the configuration scale, the usual balance
    point for second differences in double precision.
    """
    x = np.asarray(x, float)
    h0 = _default_step(x, 1e-4) if step is None else step

    def stencil(f, x, h):
        m = x.size
        H = np.empty((m, m))
        f0 = f(x)
        for i in range(m):
            ei = np.zeros(m)
            ei[i] = h
            H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / (h * h)
            for j in range(i + 1, m):
                ej = np.zeros(m)
                ej[j] = h
                H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                     + f(x - ei - ej)) / (4 * h * h)
        return H

    return _probe(fn, x, h0, stencil)


@dataclass(frozen=True)
class Tangency:
    start: np.ndarray
    end: np.ndarray
    length: float
    direction: float  # angle of the tangent line, rad


def brute_tangency(center1, r1, side1, center2, r2, side2, resolution=1e-10) -> Tangency:
    """Common tangent of two circles in the xy-plane, located by bisection.

    A side flag of +1 means the string passes with the circle on its left,
    -1 on its right, 0 means it is pinned at the center. The string travels
    from circle 1 to circle 2.
    """
    c1 = np.asarray(center1, float)
    c2 = np.asarray(center2, float)
    s1 = side1 * r1 if r1 > 0 else 0.0
    s2 = side2 * r2 if r2 > 0 else 0.0
    dx, dy = c2[0] - c1[0], c2[1] - c1[1]
    dist = math.hypot(dx, dy)
    offset = s2 - s1
    if dist == 0 or abs(offset) >= dist:
        raise NoTangent("circles admit no tangent of the requested kind")

    def normal(psi):
        return -math.sin(psi), math.cos(psi)

    def gap(psi):
        nx, ny = normal(psi)
        return nx * dx + ny * dy - offset

    base = math.atan2(dy, dx)
    lo, hi = base - math.pi / 2, base + math.pi / 2
    # gap(lo) > 0 > gap(hi); keep halving until the bracket stops shrinking
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo < min(resolution, 1e-15):
            break
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    psi = 0.5 * (lo + hi)
    nx, ny = normal(psi)
    p1 = c1 - s1 * np.array([nx, ny, 0.0])
    p2 = c2 - s2 * np.array([nx, ny, 0.0])
    length = math.cos(psi) * (p2[0] - p1[0]) + math.sin(psi) * (p2[1] - p1[1])
    return Tangency(p1, p2, length, psi)


def _wrap(center, side, arrive, leave):
    """Arc angle from the arrival to the departure tangent point, in [-pi/2, 3pi/2)."""
    a_in = math.atan2(arrive[1] - center[1], arrive[0] - center[0])
    a_out = math.atan2(leave[1] - center[1], leave[0] - center[0])
    d = (a_out - a_in) if side > 0 else (a_in - a_out)
    return (d + math.pi / 2) % (2 * math.pi) - math.pi / 2


@dataclass
class OracleGeometry:
    straight: dict  # segment id -> straight length
    tangent_start: dict
    tangent_end: dict
    wraps: dict  # (member id, junction index) -> arc angle (pulley junctions only)
    member_length: dict


def oracle_geometry(model, positions=None) -> OracleGeometry:
    """Member lengths of a model by explicit tangent construction."""
    pos = {nd.id: np.asarray(nd.position, float) for nd in model.nodes}
    if positions is not None:
        for nd, p in zip(model.nodes, np.asarray(positions, float).reshape(-1, 3)):
            pos[nd.id] = p
    atts = {nd.id: nd.attachments for nd in model.nodes}
    segs = {s.id: s for s in model.segments}

    def circle(ref):
        nid, j = ref
        att = atts[nid][j - 1]
        return pos[nid], att.radius, att.side

    straight, ts, te, wraps, lengths = {}, {}, {}, {}, {}
    for s in model.segments:
        c1, r1, k1 = circle(s.start)
        c2, r2, k2 = circle(s.end)
        if r1 == 0 and r2 == 0:
            straight[s.id] = float(np.linalg.norm(c2 - c1))
            ts[s.id], te[s.id] = c1.copy(), c2.copy()
        else:
            tg = brute_tangency(c1, r1, k1, c2, r2, k2)
            straight[s.id] = tg.length
            ts[s.id], te[s.id] = tg.start, tg.end
    for m in model.members:
        total = 0.0
        for s in m.segments:
            total += straight[s]
        for k, (a, b) in enumerate(zip(m.segments[:-1], m.segments[1:])):
            c, r, side = circle(segs[a].end)
            if r > 0:
                w = _wrap(c, side, te[a], ts[b])
                wraps[(m.id, k)] = w
                total += r * w
        lengths[m.id] = total
    return OracleGeometry(straight, ts, te, wraps, lengths)


def _free_layout(model):
    free = []
    for k, nd in enumerate(model.nodes):
        for d, ax in enumerate("xyz"):
            if ax not in nd.fixed:
                free.append((k, d))
    return free


def oracle_energy(model, loads=None, rest_lengths=None, accel=None):
    """Total potential energy as a function of the free coordinates.

    Returns (energy function, initial free coordinates, position builder).
    """
    base = np.array([nd.position for nd in model.nodes], float)
    free = _free_layout(model)
    rest = {m.id: m.rest_length for m in model.members}
    if rest_lengths is not None:
        rest.update(rest_lengths)
    load = np.zeros_like(base)
    index = {nd.id: k for k, nd in enumerate(model.nodes)}
    for nid, f in (model.loads if loads is None else loads):
        load[index[nid]] += np.asarray(f, float)
    a = np.asarray(model.gravity if accel is None else accel, float)
    kinds = {s.id: s.kind for s in model.segments}
    mass = np.array([nd.mass for nd in model.nodes], float)
    for s in model.segments:
        mass[index[s.start[0]]] += 0.5 * s.mass
        mass[index[s.end[0]]] += 0.5 * s.mass

    def place(x):
        p = base.copy()
        for v, (k, d) in zip(x, free):
            p[k, d] = v
        return p

    # loads and gravity are linear in the coordinates: exact gradient, zero Hessian
    body = mass[:, None] * a[None, :] - load
    linear = np.array([body[k, d] for k, d in free])

    def elastic(x):
        geo = oracle_geometry(model, place(x))
        V = 0.0
        for m in model.members:
            stretch = geo.member_length[m.id] - rest[m.id]
            if kinds[m.segments[0]] == "string" and stretch < 0:
                continue
            V += 0.5 * m.E * m.A / rest[m.id] * stretch * stretch
        return V

    def energy(x):
        return elastic(x) + float(np.sum(body * place(x)))

    def slack_margin(x):
        # distance of the nearest string from its slack kink; wider probes cross it
        geo = oracle_geometry(model, place(x))
        gaps = [abs(geo.member_length[m.id] - rest[m.id]) for m in model.members
                if kinds[m.segments[0]] == "string"]
        gaps = [g for g in gaps if g > 0]
        return min(gaps) if gaps else math.inf

    energy.elastic = elastic
    energy.linear = linear
    energy.slack_margin = slack_margin
    energy.force_scale = float(np.linalg.norm(load - mass[:, None] * a[None, :]))
    x0 = np.array([base[k, d] for k, d in free])
    return energy, x0, place


@dataclass
class MinimizeResult:
    positions: np.ndarray
    x: np.ndarray
    energy: float
    gradient_norm: float
    iterations: int
    converged: bool


def minimize_energy(model, start=None, loads=None, rest_lengths=None, accel=None,
                    gtol=1e-9, max_iter=200, raise_on_failure=True) -> MinimizeResult:
    """Damped Newton descent on the oracle energy using finite-difference derivatives.

    ``start`` gives physical node positions to begin from; ``gtol`` is relative
    to the largest force scale seen (applied forces or initial gradient). The
    target never drops below the rounding floor of the difference gradient.
    """
    if start is not None:
        model = model.with_positions(start)
    energy, x, place = oracle_energy(model, loads, rest_lengths, accel)
    if x.size == 0:
        return MinimizeResult(place(x), x, energy(x), 0.0, 0, True)

    def safe(v):
        try:
            return energy(v)
        except (ValueError, ArithmeticError):
            return math.inf

    def probe_step(v, factor):
        # stay inside the smooth region unless a string sits right at its slack point
        h = _default_step(v, factor)
        margin = 0.25 * energy.slack_margin(v)
        return margin if 1e-3 * h <= margin < h else h

    def gradient(v):
        h = probe_step(v, 1e-6)
        floor = 100 * EPS * max(abs(energy.elastic(v)), 1.0) / h * math.sqrt(v.size)
        return fd_gradient(energy.elastic, v, step=h) + energy.linear, floor

    scale = max(1.0, float(np.max(np.abs(x))))
    g, floor = gradient(x)
    fscale = max(float(np.linalg.norm(g)), energy.force_scale, 1.0)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if float(np.linalg.norm(g)) <= max(gtol * fscale, floor):
            converged = True
            break
        H = fd_hessian(energy.elastic, x, step=probe_step(x, 1e-4))
        H = 0.5 * (H + H.T)
        w = np.linalg.eigvalsh(H)
        shift = 0.0 if w[0] > 1e-10 * abs(w[-1]) else abs(w[0]) + 1e-8 * abs(w[-1])
        step = -np.linalg.solve(H + shift * np.eye(x.size), g)
        V0 = energy(x)
        alpha = 1.0
        accepted = False
        for _ in range(40):
            trial = x + alpha * step
            Vt = safe(trial)
            if Vt <= V0 + 1e-4 * alpha * float(g @ step) or \
                    (abs(Vt - V0) <= 1e-15 * max(1.0, abs(V0)) and alpha < 1):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        x = trial
        g, floor = gradient(x)
        if float(np.linalg.norm(alpha * step)) <= 1e-14 * scale:
            converged = float(np.linalg.norm(g)) <= max(gtol * fscale, floor)
            break
    res = MinimizeResult(place(x), x, energy(x), float(np.linalg.norm(g)), it, converged)
    if not converged and raise_on_failure:
        raise NonConvergence(f"energy minimization stalled with gradient norm {res.gradient_norm:.3e}")
    return res


def _exact_rank(rows):
    """Rank of a matrix of Fractions by Gaussian elimination."""
    M = [list(r) for r in rows]
    rank = 0
    ncols = len(M[0]) if M else 0
    for c in range(ncols):
        pivot = next((r for r in range(rank, len(M)) if M[r][c] != 0), None)
        if pivot is None:
            continue
        M[rank], M[pivot] = M[pivot], M[rank]
        for r in range(len(M)):
            if r != rank and M[r][c] != 0:
                q = M[r][c] / M[rank][c]
                M[r] = [x - q * y for x, y in zip(M[r], M[rank])]
        rank += 1
    return rank


def brute_self_stress_count(model) -> int:
    """Self-stress count of an unclustered pin-jointed model by exact elimination.

    Each equilibrium column is scaled by its member length so that entries are
    coordinate differences, which keeps the arithmetic rational.
    """
    if any(len(m.segments) != 1 for m in model.members):
        raise ValueError("exact count supports unclustered models only")
    if any(a.radius for nd in model.nodes for a in nd.attachments):
        raise ValueError("exact count supports zero-radius models only")
    pos = {nd.id: [Fraction(v) for v in nd.position] for nd in model.nodes}
    rows = [(nd.id, d) for nd in model.nodes for d, ax in enumerate("xyz") if ax not in nd.fixed]
    segs = {s.id: s for s in model.segments}
    cols = []
    for m in model.members:
        s = segs[m.segments[0]]
        a, b = s.start[0], s.end[0]
        col = []
        for nid, d in rows:
            diff = pos[b][d] - pos[a][d]
            col.append(diff if nid == b else (-diff if nid == a else Fraction(0)))
        cols.append(col)
    matrix = [list(r) for r in zip(*cols)] if rows else []
    return len(model.members) - (_exact_rank(matrix) if matrix else 0)
