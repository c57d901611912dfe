"""Member forces, energies, equilibrium residual and stiffness matrices.

Quantities live on the repeated nodal vector ``n``; the free/fixed blocks are
obtained with the selection matrices of the topology.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryState, evaluate_geometry, z_cross
from .model import TopologySet

ZX = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])  # [z]x


class NonzeroRadius(ValueError):
    pass


def member_forces(l_C, topology: TopologySet, rest_length=None):
    """Axial member forces t_c (slack strings carry zero) and segment forces t = Sᵀ t_c.

    Returns (t_c, t, taut) where ``taut`` marks members whose material
    stiffness is active.
    """
    l0 = topology.rest_length if rest_length is None else np.asarray(rest_length, float)
    t_c = topology.E * topology.A * (np.asarray(l_C) - l0) / l0
    taut = ~(topology.is_string & (t_c < 0))
    t_c = np.where(taut, t_c, 0.0)
    return t_c, topology.S.T @ t_c, taut


def gravity_vector(topology: TopologySet, accel) -> np.ndarray:
    """Gradient of the gravitational potential on the repeated nodal vector.

    Segment masses are split half to each end attachment; point masses sit on
    the first attachment of their node. ``accel`` is the potential gradient
    per unit mass, so (0, 0, 9.81) models weight acting in the -z direction.
    """
    accel = np.asarray(accel, float)
    m = 0.5 * np.abs(topology.C).T @ topology.segment_mass
    first = np.array(topology.attachment_offset)
    m[first] += topology.point_mass
    return np.kron(m, accel)


def _segment_offsets(topology: TopologySet):
    """a_j = μ_end R_end − μ_start R_start for every segment."""
    return topology.C @ (topology.mu * topology.R)


def _kron_assemble(C: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Σ_j C_jᵀ C_j ⊗ blocks_j for 3x3 blocks."""
    na = C.shape[1]
    K = np.einsum("ja,jb,jxy->axby", C, C, blocks, optimize=True)
    return K.reshape(3 * na, 3 * na)


def stiffness_matrix(geometry: GeometryState, t, topology: TopologySet):
    """Stiffness K with K n equal to the internal nodal forces, plus its partitions."""
    l2 = geometry.l ** 2
    a = _segment_offsets(topology)
    blocks = (t * geometry.l_S / l2)[:, None, None] * np.eye(3) \
        - (t * a / l2)[:, None, None] * ZX
    K = _kron_assemble(topology.C, blocks)
    return K, topology.E_a.T @ K @ topology.E_a, topology.E_a.T @ K @ topology.E_b


def equilibrium_matrix(geometry: GeometryState, topology: TopologySet):
    """A_2c (derivative of member lengths, one column per member) and its free part."""
    a = _segment_offsets(topology)
    l2 = geometry.l ** 2
    g = (geometry.l_S / l2)[:, None] * geometry.h - (a / l2)[:, None] * z_cross(geometry.h)
    # column per segment, then summed over the members (C_jᵀ ⊗ g_j)
    na = topology.n_attach
    seg_cols = (topology.C.T[:, None, :] * g.T[None, :, :]).reshape(3 * na, -1)
    A2c = seg_cols @ topology.S.T
    return A2c, topology.E_a.T @ A2c


def compatibility_matrix(A2c: np.ndarray, geometry: GeometryState, topology: TopologySet):
    """Segment compatibility matrix B_l (rows ∂l_j/∂n) and member compatibility B_lc = A_2cᵀ."""
    na = topology.n_attach
    u = geometry.h / geometry.l[:, None]
    B_l = (topology.C[:, :, None] * u[:, None, :]).reshape(-1, 3 * na)
    return B_l, A2c.T.copy()


def tangent_stiffness(geometry: GeometryState, t, t_c, taut, A2c, topology: TopologySet,
                      rest_length=None):
    """Tangent stiffness K_T = K_g + K_e and its free/fixed partitions."""
    l0 = topology.rest_length if rest_length is None else np.asarray(rest_length, float)
    h, l, l_S = geometry.h, geometry.l, geometry.l_S
    R_bar = topology.R_bar
    a = _segment_offsets(topology)
    l2, l4 = l ** 2, l ** 4
    hh = h[:, :, None] * h[:, None, :]
    zh = z_cross(h)[:, :, None] * h[:, None, :]
    blocks = (l_S / l2)[:, None, None] * np.eye(3) \
        + ((R_bar ** 2 - l_S ** 2) / (l_S * l4))[:, None, None] * hh \
        - (a / l2)[:, None, None] * ZX \
        + (2 * a / l4)[:, None, None] * zh
    K_g = _kron_assemble(topology.C, t[:, None, None] * blocks)
    k_axial = np.where(taut, topology.E * topology.A / l0, 0.0)
    K_e = (A2c * k_axial) @ A2c.T
    K_T = K_g + K_e
    Ea, Eb = topology.E_a, topology.E_b
    return K_T, K_g, K_e, Ea.T @ K_T @ Ea, Ea.T @ K_T @ Eb


def strain_energy(l_C, topology: TopologySet, rest_length=None) -> float:
    """Elastic energy of all members; slack strings store nothing."""
    l0 = topology.rest_length if rest_length is None else np.asarray(rest_length, float)
    k = topology.E * topology.A / l0
    dl = np.asarray(l_C) - l0
    taut = ~(topology.is_string & (dl < 0))
    return float(np.sum(np.where(taut, 0.5 * k * dl * dl, 0.0)))


def residual(K, n, f, g, topology: TopologySet):
    """Out-of-balance force on the free coordinates, E_aᵀ(f − g − K n)."""
    return topology.E_a.T @ (np.asarray(f) - np.asarray(g) - K @ np.asarray(n))


def cts_reference_tangent(n, topology: TopologySet, t_c, rest_length=None, taut=None):
    """Tangent stiffness of a clustered structure without pulley radii.

    Written from the classical clustered formula (geometric force-density
    blocks plus the clustered material term) and used as a cross-check.
    """
    if np.any(topology.R != 0):
        raise NonzeroRadius("reference tangent requires all radii to be zero")
    l0 = topology.rest_length if rest_length is None else np.asarray(rest_length, float)
    X = np.asarray(n, float).reshape(-1, 3)
    C = topology.C
    H = C @ X
    l = np.linalg.norm(H, axis=1)
    t = topology.S.T @ np.asarray(t_c, float)
    ne, na = C.shape
    K_geo = np.zeros((3 * na, 3 * na))
    for j in range(ne):
        u = H[j] / l[j]
        K_geo += np.kron(np.outer(C[j], C[j]), t[j] / l[j] * (np.eye(3) - np.outer(u, u)))
    # A_2 = (Cᵀ ⊗ I3) b.d.(H) l̂⁻¹, then A_2c = A_2 Sᵀ
    bdH = np.zeros((3 * ne, ne))
    for j in range(ne):
        bdH[3 * j:3 * j + 3, j] = H[j]
    A2 = np.kron(C.T, np.eye(3)) @ bdH @ np.diag(1.0 / l)
    A2c = A2 @ topology.S.T
    if taut is None:
        taut = np.ones(topology.n_member, bool)
    k = np.where(taut, topology.E * topology.A / l0, 0.0)
    return K_geo + A2c @ np.diag(k) @ A2c.T


@dataclass
class StaticsState:
    n: np.ndarray
    geometry: GeometryState
    t_c: np.ndarray
    t: np.ndarray
    taut: np.ndarray
    V_e: float
    V_g: float
    V: float
    g: np.ndarray
    f: np.ndarray
    K: np.ndarray
    K_aa: np.ndarray
    K_ab: np.ndarray
    A_2c: np.ndarray
    A_2c_free: np.ndarray
    B_l: np.ndarray
    B_lc: np.ndarray
    K_T: np.ndarray
    K_g: np.ndarray
    K_e: np.ndarray
    K_Taa: np.ndarray
    K_Tab: np.ndarray
    P_a: np.ndarray
    warnings: list = field(default_factory=list)


def evaluate_statics(n, topology: TopologySet, f, accel=(0.0, 0.0, 0.0), rest_length=None,
                     tangent=True) -> StaticsState:
    """Full statics evaluation at the repeated nodal vector ``n``."""
    n = np.asarray(n, float)
    geo = evaluate_geometry(n, topology)
    t_c, t, taut = member_forces(geo.l_C, topology, rest_length)
    g = gravity_vector(topology, accel)
    f = np.asarray(f, float)
    K, K_aa, K_ab = stiffness_matrix(geo, t, topology)
    A2c, A2c_free = equilibrium_matrix(geo, topology)
    B_l, B_lc = compatibility_matrix(A2c, geo, topology)
    if tangent:
        K_T, K_g, K_e, K_Taa, K_Tab = tangent_stiffness(geo, t, t_c, taut, A2c, topology,
                                                        rest_length)
    else:
        K_T = K_g = K_e = K_Taa = K_Tab = None
    V_e = strain_energy(geo.l_C, topology, rest_length)
    V_g = float(g @ n)
    warnings = [f"string lifts off pulley at junction {k}" for k in geo.lifted]
    return StaticsState(n=n, geometry=geo, t_c=t_c, t=t, taut=taut, V_e=V_e, V_g=V_g,
                        V=V_e + V_g - float(f @ n), g=g, f=f, K=K, K_aa=K_aa, K_ab=K_ab,
                        A_2c=A2c, A_2c_free=A2c_free, B_l=B_l, B_lc=B_lc, K_T=K_T, K_g=K_g,
                        K_e=K_e, K_Taa=K_Taa, K_Tab=K_Tab,
                        P_a=residual(K, n, f, g, topology), warnings=warnings)
