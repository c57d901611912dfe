"""Configuration-dependent geometry of segments running between pulleys.

All functions take the repeated nodal vector ``n`` (3 entries per attachment)
and return per-segment or per-junction quantities together with their
derivatives with respect to ``n``. Gradient matrices have one row per
segment/junction and ``len(n)`` columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import TopologySet

Z_AXIS = np.array([0.0, 0.0, 1.0])
OVERLAP_TOL = 1e-9


class GeometryError(ValueError):
    pass


class ZeroLengthSegment(GeometryError):
    pass


class PulleyOverlap(GeometryError):
    pass


class DegenerateJunction(GeometryError):
    pass


def z_cross(v):
    """z × v for an array of 3-vectors."""
    v = np.asarray(v, float)
    out = np.zeros_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


def rotate_z(v, theta):
    """Rotate 3-vectors about the z axis by angles theta (row-wise)."""
    c, s = np.cos(theta), np.sin(theta)
    out = np.array(v, float, copy=True)
    out[..., 0] = c * v[..., 0] - s * v[..., 1]
    out[..., 1] = s * v[..., 0] + c * v[..., 1]
    return out


def segment_rows(C: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rows C_j ⊗ v_jᵀ, i.e. the derivative of a linear function of h_j."""
    ne, na = C.shape
    return (C[:, :, None] * v[:, None, :]).reshape(ne, 3 * na)


def center_lines(n, topology: TopologySet):
    """Center-line vectors h (end minus start) and their lengths."""
    n = np.asarray(n, float)
    X = n.reshape(-1, 3)
    h = topology.C @ X
    l = np.sqrt(np.einsum("ij,ij->i", h, h))
    scale = max(1.0, float(np.max(np.abs(n)))) if n.size else 1.0
    bad = np.flatnonzero(l <= 1e-12 * scale)
    if bad.size:
        ids = [topology.segment_ids[k] for k in bad]
        raise ZeroLengthSegment(f"segments {ids} have zero length")
    return h, l


def _check_overlap(l, R_bar):
    bad = np.flatnonzero((R_bar > 0) & (l <= R_bar * (1.0 + OVERLAP_TOL)))
    if bad.size:
        raise PulleyOverlap(f"segment rows {bad.tolist()}: center distance does not exceed"
                            " the effective radius")


def straight_lengths(l, R_bar):
    """Length of the tangent-line part of each segment."""
    l = np.asarray(l, float)
    R_bar = np.asarray(R_bar, float)
    _check_overlap(l, R_bar)
    return np.where(R_bar == 0, l, np.sqrt(np.maximum(l * l - R_bar * R_bar, 0.0)))


def straight_angles(h, R_bar, topology: TopologySet):
    """Angle between the center line and the tangent line, with its gradient."""
    h = np.asarray(h, float)
    l = np.sqrt(np.einsum("ij,ij->i", h, h))
    l_S = straight_lengths(l, R_bar)
    phi_S = np.arcsin(np.asarray(R_bar) / l)
    coef = -np.asarray(R_bar) / (l * l * l_S)
    return phi_S, segment_rows(topology.C, coef[:, None] * h)


def wrap_reference_angles(h, topology: TopologySet):
    """Angle between consecutive segments of a member measured on the wrap side.

    Returns (phi_R, eta, gradient) with one entry per interior junction.
    """
    h = np.asarray(h, float)
    ji, jo = topology.junction_in, topology.junction_out
    ndof = topology.n_dof
    if ji.size == 0:
        return np.zeros(0), np.zeros(0), np.zeros((0, ndof))
    a, b = h[ji], h[jo]
    la = np.sqrt(np.einsum("ij,ij->i", a, a))
    lb = np.sqrt(np.einsum("ij,ij->i", b, b))
    if np.any(la == 0) or np.any(lb == 0):
        raise DegenerateJunction("junction adjacent to a zero-length segment")
    mu = topology.C_end[ji] @ topology.mu
    # arccos(-a.b/(|a||b|)) evaluated through atan2 for accuracy near 0 and pi
    cross = np.cross(a, b)
    base = np.arctan2(np.sqrt(np.einsum("ij,ij->i", cross, cross)), -np.einsum("ij,ij->i", a, b))
    turn = np.einsum("ij,ij->i", z_cross(a), b)
    # a zero-radius sliding point has no wrap side; measure it on the side it turns to
    mu = np.where(mu != 0, mu, np.where(turn < 0, -1.0, 1.0))
    side = mu * turn
    eta = np.where(side < 0, -1.0, 1.0)
    phi_R = np.mod(eta * base, 2 * np.pi)
    phi_R = np.where(phi_R >= 2 * np.pi, 0.0, phi_R)

    ga = (mu / (la * la))[:, None] * z_cross(a)
    gb = -(mu / (lb * lb))[:, None] * z_cross(b)
    C = topology.C
    grad = segment_rows(C[ji], ga) + segment_rows(C[jo], gb)
    return phi_R, eta, grad


def contact_arc_angles(phi_R, phi_S, topology: TopologySet):
    """Arc over which the string touches each junction pulley.

    Returns (phi_C, lifted) where ``lifted`` lists junction indices with a
    negative arc (the string would leave the pulley).
    """
    ji, jo = topology.junction_in, topology.junction_out
    phi_C = np.pi - np.asarray(phi_R) + topology.xi_end[ji] * phi_S[ji] \
        + topology.xi_start[jo] * phi_S[jo]
    lifted = [int(k) for k in np.flatnonzero(phi_C < 0)]
    return phi_C, lifted


def member_lengths(l_S, phi_C, topology: TopologySet):
    """Total length of each member: straight parts plus arcs around pulleys."""
    l_C = topology.S @ np.asarray(l_S, float)
    if topology.n_junction:
        arcs = np.zeros(topology.n_member)
        np.add.at(arcs, topology.junction_member, topology.junction_radius * phi_C)
        l_C = l_C + arcs
    return l_C


def tangent_points(n, topology: TopologySet, phi_S):
    """Points where each straight part leaves its start pulley and meets its end pulley."""
    X = np.asarray(n, float).reshape(-1, 3)
    h, l = center_lines(n, topology)
    u = h / l[:, None]
    cs, ce = topology.C_start @ X, topology.C_end @ X
    mu_s, mu_e = topology.C_start @ topology.mu, topology.C_end @ topology.mu
    th_s = -mu_s * (np.pi / 2 - topology.xi_start * phi_S)
    th_e = mu_e * (np.pi / 2 - topology.xi_end * phi_S)
    start = cs + topology.R_start[:, None] * rotate_z(u, th_s)
    end = ce + topology.R_end[:, None] * rotate_z(-u, th_e)
    return start, end


def length_gradients(n, topology: TopologySet):
    """Derivatives of the center-line and straight lengths with respect to n."""
    h, l = center_lines(n, topology)
    l_S = straight_lengths(l, topology.R_bar)
    dl = segment_rows(topology.C, h / l[:, None])
    dl_S = segment_rows(topology.C, h / l_S[:, None])
    return dl, dl_S


@dataclass
class GeometryState:
    h: np.ndarray
    l: np.ndarray
    l_S: np.ndarray
    phi_S: np.ndarray
    phi_R: np.ndarray
    eta: np.ndarray
    phi_C: np.ndarray
    l_C: np.ndarray
    tangent_start: np.ndarray
    tangent_end: np.ndarray
    dphi_S: np.ndarray
    dphi_R: np.ndarray
    lifted: list = field(default_factory=list)
    z: np.ndarray = field(default_factory=lambda: Z_AXIS.copy())

    @property
    def H(self) -> np.ndarray:
        """Center lines as columns."""
        return self.h.T


def evaluate_geometry(n, topology: TopologySet) -> GeometryState:
    h, l = center_lines(n, topology)
    l_S = straight_lengths(l, topology.R_bar)
    phi_S, dphi_S = straight_angles(h, topology.R_bar, topology)
    phi_R, eta, dphi_R = wrap_reference_angles(h, topology)
    phi_C, lifted = contact_arc_angles(phi_R, phi_S, topology)
    l_C = member_lengths(l_S, phi_C, topology)
    ts, te = tangent_points(n, topology, phi_S)
    return GeometryState(h=h, l=l, l_S=l_S, phi_S=phi_S, phi_R=phi_R, eta=eta,
                         phi_C=phi_C, l_C=l_C, tangent_start=ts, tangent_end=te,
                         dphi_S=dphi_S, dphi_R=dphi_R, lifted=lifted)
