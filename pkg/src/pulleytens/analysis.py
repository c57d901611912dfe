"""Self-stress and mechanism modes, stiffness spectra and pulley radius sweeps."""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelError, StructureModel
from .solver import Schedule, SolveConfig, SolveResult, stepped_solve
from .statics import evaluate_statics


class NotConverged(UserWarning):
    pass


@dataclass
class ModeDecomposition:
    W: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    rank: int
    V2: np.ndarray  # self-stress modes (columns)
    W2: np.ndarray  # mechanism modes (columns)
    rank_tol: float

    @property
    def self_stress_count(self) -> int:
        return self.V2.shape[1]

    @property
    def mechanism_count(self) -> int:
        return self.W2.shape[1]


def svd_modes(A_free, rank_tol=1e-10) -> ModeDecomposition:
    """SVD of the free equilibrium matrix; rank counts singular values above rank_tol·σ_max."""
    A = np.asarray(A_free, float)
    m, k = A.shape
    W, s, Vt = np.linalg.svd(A, full_matrices=True)
    smax = float(s[0]) if s.size else 0.0
    r = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    V = Vt.T
    return ModeDecomposition(W=W, sigma=s, V=V, rank=r, V2=V[:, r:], W2=W[:, r:], rank_tol=rank_tol)


@dataclass
class StiffnessSpectrum:
    eigenvalues: np.ndarray
    modes: np.ndarray  # columns
    asymmetry: float

    @property
    def minimal(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ratio(self) -> float:
        """λ1/λ2."""
        return float(self.eigenvalues[0] / self.eigenvalues[1])


def stiffness_spectrum(K_Taa, count=None, converged=True) -> StiffnessSpectrum:
    """Lowest eigenpairs of the symmetrized free tangent stiffness."""
    if not converged:
        warnings.warn("stiffness spectrum of a non-equilibrium state", NotConverged)
    K = np.asarray(K_Taa, float)
    norm = np.linalg.norm(K)
    asym = float(np.linalg.norm(K - K.T) / norm) if norm > 0 else 0.0
    w, v = np.linalg.eigh(0.5 * (K + K.T))
    count = len(w) if count is None else min(int(count), len(w))
    # fix the sign of each mode so the largest component is positive
    v = v[:, :count]
    for j in range(v.shape[1]):
        if v[np.argmax(np.abs(v[:, j])), j] < 0:
            v[:, j] = -v[:, j]
    return StiffnessSpectrum(w[:count], v, asym)


@dataclass
class SweepRow:
    radius: float
    status: str  # "ok" or "failed"
    result: Optional[SolveResult]
    lambda_min: list = field(default_factory=list)
    error: Optional[str] = None


@dataclass
class SweepTable:
    targets: list
    rows: list


def _threads(max_workers):
    if max_workers is not None:
        return max(1, int(max_workers))
    env = os.environ.get("PULLEYTENS_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def _sweep_point(model, targets, radius, schedule, config):
    try:
        m = model
        for nid, att in targets:
            m = m.with_radius(nid, att, radius)
        res = stepped_solve(m, schedule, config)
    except (ModelError, ValueError) as exc:
        return SweepRow(radius, "failed", None, [], f"{type(exc).__name__}: {exc}")
    lams = []
    topo = m.topology
    for rec in res.substeps:
        st = evaluate_statics(rec.n, topo, m.load_vector(rec.loads), m.gravity, rec.rest_length)
        lams.append(stiffness_spectrum(st.K_Taa, 1).minimal if st.K_Taa.size else float("nan"))
    status = "ok" if res.converged and res.error is None else "failed"
    return SweepRow(radius, status, res, lams, res.error)


def radius_sweep(model: StructureModel, targets, radii, schedule: Schedule = None,
                 config: SolveConfig = None, max_workers=None) -> SweepTable:
    """Solve the schedule once per radius value, each point from the model geometry.

    ``targets`` lists (node id, attachment index) pulleys that all take the
    swept radius. Rows keep the input order; failures are kept as rows.
    """
    schedule = schedule or Schedule(1)
    config = config or SolveConfig()
    targets = [(int(a), int(b)) for a, b in targets]
    radii = [float(r) for r in radii]
    workers = min(_threads(max_workers), max(1, len(radii)))
    if workers == 1:
        rows = [_sweep_point(model, targets, r, schedule, config) for r in radii]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda r: _sweep_point(model, targets, r, schedule, config), radii))
    return SweepTable(targets, rows)
