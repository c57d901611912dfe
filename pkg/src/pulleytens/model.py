"""Structural description and constant topology matrices.

Physical nodes are stored once. Every node owns an ordered list of
attachments (a pinned center with radius 0, or pulley wheels with a positive
radius). The "repeated" nodal vector used by the statics routines lists the
coordinates of every attachment, node-major and attachment-minor, and is
always generated from the physical positions by ``TopologySet.expand``.

Attachment indices in the public API are 1-based, matching the file format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

AXES = ("x", "y", "z")


class ModelError(ValueError):
    """Base class for malformed structural descriptions."""


class DuplicateSegmentInCluster(ModelError):
    pass


class UnsharedJunction(ModelError):
    pass


class BarOnPulley(ModelError):
    pass


class DofOutOfRange(ModelError):
    pass


class TerminalOnPulley(ModelError):
    """A member begins or ends on a pulley wheel instead of a pinned attachment."""


class NonPlanarModel(ModelError):
    pass


class UnknownReference(ModelError):
    pass


@dataclass(frozen=True)
class Attachment:
    radius: float = 0.0
    side: int = 0


@dataclass(frozen=True)
class PhysicalNode:
    id: int
    position: tuple
    attachments: tuple = (Attachment(),)
    fixed: frozenset = frozenset()
    mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "attachments", tuple(
            a if isinstance(a, Attachment) else Attachment(float(a[0]), int(a[1]))
            for a in self.attachments))
        object.__setattr__(self, "fixed", frozenset(self.fixed))


@dataclass(frozen=True)
class Segment:
    id: int
    start: tuple  # (node id, 1-based attachment index)
    end: tuple
    kind: str = "string"
    mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "start", (int(self.start[0]), int(self.start[1])))
        object.__setattr__(self, "end", (int(self.end[0]), int(self.end[1])))


@dataclass(frozen=True)
class Member:
    """A bar, a single string, or a clustered string running over pulleys."""

    id: int
    segments: tuple
    E: float
    A: float
    rest_length: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(int(s) for s in self.segments))


@dataclass(frozen=True)
class StructureModel:
    nodes: tuple
    segments: tuple
    members: tuple
    loads: tuple = ()  # (node id, (fx, fy, fz)) pairs
    gravity: tuple = (0.0, 0.0, 0.0)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "loads", tuple(
            (int(k), tuple(float(v) for v in f)) for k, f in self.loads))
        object.__setattr__(self, "gravity", tuple(float(v) for v in self.gravity))
        self.topology  # validate eagerly

    @cached_property
    def topology(self) -> "TopologySet":
        return build_topology(self.nodes, self.segments, self.members)

    def positions(self) -> np.ndarray:
        """Physical node positions, shape (number of nodes, 3)."""
        return np.array([nd.position for nd in self.nodes], dtype=float)

    def nodal_vector(self, positions=None) -> np.ndarray:
        x = self.positions() if positions is None else np.asarray(positions, float)
        return self.topology.expand(x.reshape(-1))

    def load_vector(self, loads=None) -> np.ndarray:
        """External force on the repeated nodal vector (placed on the first attachment)."""
        topo = self.topology
        f = np.zeros(topo.n_dof)
        for nid, force in (self.loads if loads is None else loads):
            k = topo.node_index[int(nid)]
            a = topo.attachment_offset[k]
            f[3 * a:3 * a + 3] += np.asarray(force, float)
        return f

    def with_radius(self, node_id: int, attachment: int, radius: float) -> "StructureModel":
        """Copy of the model with one attachment radius replaced."""
        nodes = []
        for nd in self.nodes:
            if nd.id == node_id:
                atts = list(nd.attachments)
                old = atts[attachment - 1]
                if radius > 0 and old.side == 0:
                    raise ModelError(f"node {node_id} attachment {attachment}: no wrap side"
                                     " to give a positive radius")
                # a zero radius turns the wheel into a sliding point
                atts[attachment - 1] = Attachment(float(radius), old.side if radius > 0 else 0)
                nd = PhysicalNode(nd.id, nd.position, tuple(atts), nd.fixed, nd.mass)
            nodes.append(nd)
        return StructureModel(tuple(nodes), self.segments, self.members, self.loads,
                              self.gravity, dict(self.meta))

    def with_rest_lengths(self, rest: dict) -> "StructureModel":
        members = tuple(Member(m.id, m.segments, m.E, m.A, rest.get(m.id, m.rest_length))
                        for m in self.members)
        return StructureModel(self.nodes, self.segments, members, self.loads,
                              self.gravity, dict(self.meta))

    def with_positions(self, positions) -> "StructureModel":
        x = np.asarray(positions, float).reshape(-1, 3)
        nodes = tuple(PhysicalNode(nd.id, tuple(x[k]), nd.attachments, nd.fixed, nd.mass)
                      for k, nd in enumerate(self.nodes))
        return StructureModel(nodes, self.segments, self.members, self.loads,
                              self.gravity, dict(self.meta))


@dataclass(frozen=True, eq=False)
class TopologySet:
    """Constant index matrices of a model. Rows of C follow the segment list order."""

    C: np.ndarray
    C_start: np.ndarray
    C_end: np.ndarray
    S: np.ndarray
    S_T: np.ndarray
    E_a: np.ndarray
    E_b: np.ndarray
    P: np.ndarray  # expansion: physical coordinates -> repeated nodal vector
    R: np.ndarray
    mu: np.ndarray
    xi_start: np.ndarray
    xi_end: np.ndarray
    R_bar: np.ndarray
    node_ids: tuple
    node_index: dict
    attachment_offset: tuple
    attachment_node: np.ndarray
    segment_ids: tuple
    member_ids: tuple
    member_kind: tuple
    member_segments: tuple  # per member, row indices into C in traversal order
    segment_member: np.ndarray
    # interior junctions, one entry per consecutive pair inside a member
    junction_member: np.ndarray
    junction_in: np.ndarray
    junction_out: np.ndarray
    junction_attachment: np.ndarray
    E: np.ndarray
    A: np.ndarray
    rest_length: np.ndarray
    segment_mass: np.ndarray
    point_mass: np.ndarray
    free_labels: tuple
    fixed_labels: tuple
    planar: bool  # True when any pulley radius is positive

    @property
    def n_attach(self) -> int:
        return self.C.shape[1]

    @property
    def n_dof(self) -> int:
        return 3 * self.C.shape[1]

    @property
    def n_seg(self) -> int:
        return self.C.shape[0]

    @property
    def n_member(self) -> int:
        return self.S.shape[0]

    @property
    def n_junction(self) -> int:
        return len(self.junction_in)

    @property
    def is_string(self) -> np.ndarray:
        return np.array([k == "string" for k in self.member_kind])

    @property
    def R_start(self) -> np.ndarray:
        return self.C_start @ self.R

    @property
    def R_end(self) -> np.ndarray:
        return self.C_end @ self.R

    @property
    def junction_radius(self) -> np.ndarray:
        return self.R[self.junction_attachment]

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Repeated nodal vector from stacked physical coordinates."""
        return self.P @ np.asarray(x, float)

    def assemble(self, n_a, n_b) -> np.ndarray:
        return self.E_a @ np.asarray(n_a, float) + self.E_b @ np.asarray(n_b, float)


def _ordered(seq, what):
    ids = [item.id for item in seq]
    if len(set(ids)) != len(ids):
        raise ModelError(f"duplicate {what} id")
    return {i: k for k, i in enumerate(ids)}


def _xi(R_s, R_e, mu_s, mu_e):
    """Signs that combine the two end radii into the effective radius.

    Same-side wraps use the external tangent (radius difference); the smaller
    radius receives the minus sign. With equal radii on the same side the end
    sign is negative so that the effective radius is zero.
    """
    same = mu_s * mu_e > 0
    xs = np.where(same & (R_s < R_e), -1, 1)
    xe = np.where(same & (R_e <= R_s), -1, 1)
    return xs.astype(float), xe.astype(float)


def build_topology(nodes: Sequence[PhysicalNode], segments: Sequence[Segment],
                   members: Sequence[Member]) -> TopologySet:
    """Validate a structure and build its connectivity, clustering and selection matrices."""
    if not nodes:
        raise ModelError("model has no nodes")
    if not segments:
        raise ModelError("model has no segments")
    node_index = _ordered(nodes, "node")
    seg_index = _ordered(segments, "segment")
    _ordered(members, "member")

    offsets, R, mu, owner = [], [], [], []
    for k, nd in enumerate(nodes):
        if len(nd.position) != 3:
            raise ModelError(f"node {nd.id}: position must have 3 components")
        if not nd.attachments:
            raise ModelError(f"node {nd.id}: needs at least one attachment")
        bad = set(nd.fixed) - set(AXES)
        if bad:
            raise DofOutOfRange(f"node {nd.id}: unknown fixed axis {sorted(bad)}")
        if nd.mass < 0:
            raise ModelError(f"node {nd.id}: negative mass")
        offsets.append(len(R))
        for j, att in enumerate(nd.attachments, start=1):
            if att.radius < 0 or not np.isfinite(att.radius):
                raise ModelError(f"node {nd.id} attachment {j}: invalid radius")
            if att.side not in (-1, 0, 1):
                raise ModelError(f"node {nd.id} attachment {j}: side must be -1, 0 or 1")
            if (att.radius == 0) != (att.side == 0):
                raise ModelError(f"node {nd.id} attachment {j}: side must be 0 exactly when radius is 0")
            R.append(float(att.radius))
            mu.append(float(att.side))
            owner.append(k)
    na = len(R)
    R = np.array(R)
    mu = np.array(mu)

    def locate(seg, end):
        nid, j = getattr(seg, end)
        if nid not in node_index:
            raise UnknownReference(f"segment {seg.id}: unknown node {nid}")
        nd = nodes[node_index[nid]]
        if not 1 <= j <= len(nd.attachments):
            raise DofOutOfRange(f"segment {seg.id}: node {nid} has no attachment {j}")
        return offsets[node_index[nid]] + j - 1

    ne = len(segments)
    C_start = np.zeros((ne, na))
    C_end = np.zeros((ne, na))
    for r, seg in enumerate(segments):
        if seg.kind not in ("bar", "string"):
            raise ModelError(f"segment {seg.id}: kind must be 'bar' or 'string'")
        if seg.mass < 0:
            raise ModelError(f"segment {seg.id}: negative mass")
        a, b = locate(seg, "start"), locate(seg, "end")
        if owner[a] == owner[b]:
            raise ModelError(f"segment {seg.id}: both ends on node {seg.start[0]}")
        if seg.kind == "bar" and (R[a] > 0 or R[b] > 0):
            raise BarOnPulley(f"segment {seg.id}: bars must attach to a pinned attachment")
        C_start[r, a] = 1.0
        C_end[r, b] = 1.0
    C = C_end - C_start

    nm = len(members)
    S = np.zeros((nm, ne))
    S_T = np.zeros((ne, ne))
    seg_member = -np.ones(ne, dtype=int)
    member_rows, kinds = [], []
    j_member, j_in, j_out, j_att = [], [], [], []
    stacked = 0
    for i, m in enumerate(members):
        if not m.segments:
            raise ModelError(f"member {m.id}: no segments")
        if not (m.E > 0 and m.A > 0 and m.rest_length > 0):
            raise ModelError(f"member {m.id}: E, A and rest length must be positive")
        rows = []
        for sid in m.segments:
            if sid not in seg_index:
                raise UnknownReference(f"member {m.id}: unknown segment {sid}")
            r = seg_index[sid]
            if seg_member[r] >= 0 or r in rows:
                raise DuplicateSegmentInCluster(f"segment {sid} used more than once")
            seg_member[r] = i
            rows.append(r)
        segs = [segments[r] for r in rows]
        kind_set = {s.kind for s in segs}
        if "bar" in kind_set and len(rows) > 1:
            raise ModelError(f"member {m.id}: bars cannot be clustered")
        kinds.append(segs[0].kind)
        first = int(np.argmax(C_start[rows[0]]))
        last = int(np.argmax(C_end[rows[-1]]))
        if R[first] > 0 or R[last] > 0:
            raise TerminalOnPulley(f"member {m.id}: must start and end on pinned attachments")
        for a_row, b_row in zip(rows[:-1], rows[1:]):
            ea = int(np.argmax(C_end[a_row]))
            sb = int(np.argmax(C_start[b_row]))
            if ea != sb:
                raise UnsharedJunction(
                    f"member {m.id}: segments {segments[a_row].id} and {segments[b_row].id}"
                    " do not meet at a common attachment")
            j_member.append(i)
            j_in.append(a_row)
            j_out.append(b_row)
            j_att.append(ea)
        for r in rows:
            S[i, r] = 1.0
            S_T[stacked, r] = 1.0
            stacked += 1
        member_rows.append(tuple(rows))
    missing = [segments[r].id for r in range(ne) if seg_member[r] < 0]
    if missing:
        raise ModelError(f"segments {missing} belong to no member")
    # a pulley wheel carries exactly one pass of one string
    for a in np.flatnonzero(R > 0):
        used = int(C_start[:, a].sum() + C_end[:, a].sum())
        if used not in (0, 2) or (used == 2 and a not in j_att):
            nd = nodes[owner[a]]
            raise TerminalOnPulley(f"node {nd.id}: pulley wheel must carry one string passing over it")

    planar = bool(np.any(R > 0))
    if planar:
        zs = {nd.position[2] for nd in nodes}
        if len(zs) != 1 or any("z" not in nd.fixed for nd in nodes):
            raise NonPlanarModel("models with pulleys must lie in a plane z = const with z fixed")

    # selection / expansion matrices over physical dofs
    nn = len(nodes)
    P = np.zeros((3 * na, 3 * nn))
    for a in range(na):
        for d in range(3):
            P[3 * a + d, 3 * owner[a] + d] = 1.0
    free_cols, fixed_cols, free_labels, fixed_labels = [], [], [], []
    for k, nd in enumerate(nodes):
        for d, ax in enumerate(AXES):
            col = 3 * k + d
            if ax in nd.fixed:
                fixed_cols.append(col)
                fixed_labels.append((nd.id, ax))
            else:
                free_cols.append(col)
                free_labels.append((nd.id, ax))
    E_a = P[:, free_cols]
    E_b = P[:, fixed_cols]

    mu_s, mu_e = C_start @ mu, C_end @ mu
    R_s, R_e = C_start @ R, C_end @ R
    xs, xe = _xi(R_s, R_e, mu_s, mu_e)
    R_bar = xs * R_s + xe * R_e

    return TopologySet(
        C=C, C_start=C_start, C_end=C_end, S=S, S_T=S_T, E_a=E_a, E_b=E_b, P=P,
        R=R, mu=mu, xi_start=xs, xi_end=xe, R_bar=R_bar,
        node_ids=tuple(nd.id for nd in nodes), node_index=node_index,
        attachment_offset=tuple(offsets), attachment_node=np.array(owner),
        segment_ids=tuple(s.id for s in segments),
        member_ids=tuple(m.id for m in members), member_kind=tuple(kinds),
        member_segments=tuple(member_rows), segment_member=seg_member,
        junction_member=np.array(j_member, dtype=int),
        junction_in=np.array(j_in, dtype=int), junction_out=np.array(j_out, dtype=int),
        junction_attachment=np.array(j_att, dtype=int),
        E=np.array([m.E for m in members], float), A=np.array([m.A for m in members], float),
        rest_length=np.array([m.rest_length for m in members], float),
        segment_mass=np.array([s.mass for s in segments], float),
        point_mass=np.array([nd.mass for nd in nodes], float),
        free_labels=tuple(free_labels), fixed_labels=tuple(fixed_labels),
        planar=planar,
    )


def expand_side_signs(topology: TopologySet):
    """Side flags at the start and end of every segment (rows in segment order)."""
    return topology.C_start @ topology.mu, topology.C_end @ topology.mu


def partition_dofs(topology: TopologySet, n):
    """Split a repeated nodal vector into free and fixed coordinates."""
    n = np.asarray(n, float)
    if n.shape != (topology.n_dof,):
        raise DofOutOfRange(f"nodal vector must have length {topology.n_dof}")
    return pinv_select(topology.E_a) @ n, pinv_select(topology.E_b) @ n


def pinv_select(E: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a selection/expansion matrix with orthogonal 0/1 columns."""
    counts = E.sum(axis=0)
    if E.shape[1] == 0:
        return E.T.copy()
    return E.T / counts[:, None]
