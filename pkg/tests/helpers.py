"""Model builders shared by the test modules."""

from __future__ import annotations

import numpy as np

from pulleytens.geometry import GeometryError, evaluate_geometry
from pulleytens.model import Attachment, Member, PhysicalNode, Segment, StructureModel
from pulleytens.statics import evaluate_statics

STEEL = 2e11


def node(nid, x, y, fixed="z", atts=((0.0, 0),), mass=0.0):
    return PhysicalNode(nid, (x, y, 0.0), tuple(Attachment(r, s) for r, s in atts),
                        frozenset(fixed), mass)


def pinned(nid, x, y, atts=((0.0, 0),)):
    return node(nid, x, y, "xyz", atts)


def two_spring_model(gap=1.0, offset=0.2, E=STEEL, A=1e-6, rest=0.45):
    """A free node between two anchors, started off the midpoint."""
    nodes = [pinned(1, 0.0, 0.0), node(2, gap / 2 + offset, 0.0, "yz"), pinned(3, gap, 0.0)]
    segs = [Segment(1, (1, 1), (2, 1)), Segment(2, (2, 1), (3, 1))]
    mems = [Member(1, (1,), E, A, rest), Member(2, (2,), E, A, rest)]
    return StructureModel(nodes, segs, mems)


def classical_tbar(clustered=False, radius=0.0):
    """Planar T-bar: two crossing bars held by four strings, pinned at node 1."""
    pulley = ((0.0, 0), (radius, 1)) if radius > 0 else ((0.0, 0),)
    nodes = [node(1, -1.0, 0.0, "xyz"), node(2, 1.0, 0.0, "yz"), node(3, 0.0, -1.0, "z"),
             node(4, 0.0, 1.0, "z", pulley)]
    top = 2 if radius > 0 else 1
    segs = [Segment(1, (1, 1), (2, 1), "bar"), Segment(2, (3, 1), (4, 1), "bar"),
            Segment(3, (1, 1), (4, top)), Segment(4, (4, top), (2, 1)),
            Segment(5, (1, 1), (3, 1)), Segment(6, (3, 1), (2, 1))]
    bar = dict(E=STEEL, A=3.6e-5, rest_length=2.0)
    if clustered:
        mems = [Member(1, (1,), **bar), Member(2, (2,), **bar),
                Member(3, (3, 4), STEEL, 4e-6, 2.8), Member(4, (5,), STEEL, 4e-6, 1.4),
                Member(5, (6,), STEEL, 4e-6, 1.4)]
    else:
        mems = [Member(1, (1,), **bar), Member(2, (2,), **bar)] + \
               [Member(k, (k,), STEEL, 4e-6, 1.4) for k in (3, 4, 5, 6)]
    return StructureModel(nodes, segs, mems)


def cluster_chain(points, radii, sides, E=STEEL, A=1e-6, strain=0.01, fixed_ends=True,
                  free_interior="z"):
    """One clustered string through ``points``; interior nodes carry pulleys."""
    nodes = []
    last = len(points) - 1
    for k, (x, y) in enumerate(points):
        if k in (0, last):
            nodes.append(node(k + 1, x, y, "xyz" if fixed_ends else "z"))
        else:
            r, s = radii[k - 1], sides[k - 1]
            nodes.append(node(k + 1, x, y, free_interior, ((0.0, 0), (r, s if r > 0 else 0))))
    segs = []
    for k in range(last):
        a = 1 if k == 0 else 2
        b = 1 if k + 1 == last else 2
        segs.append(Segment(k + 1, (k + 1, a), (k + 2, b)))
    probe = StructureModel(nodes, segs, [Member(1, tuple(range(1, last + 1)), E, A, 1.0)])
    l_C = evaluate_geometry(probe.nodal_vector(), probe.topology).l_C[0]
    return StructureModel(nodes, segs,
                          [Member(1, tuple(range(1, last + 1)), E, A, float(l_C / (1 + strain)))])


# -- random planar models -----------------------------------------------------

def _turn_side(p_prev, p, p_next):
    a = np.subtract(p, p_prev)
    b = np.subtract(p_next, p)
    return 1 if a[0] * b[1] - a[1] * b[0] > 0 else -1


def random_planar_model(rng, max_nodes=10, max_segments=6, max_clusters=2, max_radius=0.1,
                        min_gap=0.35):
    """A random valid planar model, or None when the draw is rejected.

    Clusters run over pulleys of radius up to ``max_radius`` (sometimes zero)
    and wrap mostly on the side the string turns towards. Draws with a fold-back
    junction, a short straight part (l_S/l < 0.2), a lifted string, or a string
    close to slack are rejected so that the energy is smooth around the draw.
    """
    nn = int(rng.integers(2, max_nodes + 1))
    pts = []
    for _ in range(400):
        if len(pts) == nn:
            break
        p = rng.uniform(-1.5, 1.5, 2)
        if all(np.hypot(*(p - q)) >= min_gap for q in pts):
            pts.append(p)
    if len(pts) < nn:
        return None
    nseg = int(rng.integers(1, max_segments + 1))
    atts = [[(0.0, 0)] for _ in range(nn)]
    seg_ends, members = [], []
    used = 0
    weights = np.array([1.0] + [2.0] * max_clusters)
    for _ in range(int(rng.choice(max_clusters + 1, p=weights / weights.sum()))):
        k = int(rng.integers(2, 4))
        if used + k > max_segments or nn < k + 1:
            continue
        path = [int(i) for i in rng.choice(nn, size=k + 1, replace=False)]
        ends = []
        for j, v in enumerate(path):
            if j in (0, k):
                continue
            r = 0.0 if rng.random() < 0.2 else float(rng.uniform(0.005, max_radius))
            side = _turn_side(pts[path[j - 1]], pts[v], pts[path[j + 1]])
            if rng.random() < 0.15:
                side = -side
            atts[v].append((r, side if r > 0 else 0))
            ends.append(len(atts[v]))
        refs = [(path[0], 1)] + [(v, a) for v, a in zip(path[1:-1], ends)] + [(path[-1], 1)]
        ids = []
        for a, b in zip(refs[:-1], refs[1:]):
            seg_ends.append((a, b, "string"))
            ids.append(len(seg_ends))
        members.append(ids)
        used += k
    nseg = max(nseg, used)
    while used < nseg:
        i, j = (int(v) for v in rng.choice(nn, size=2, replace=False))
        seg_ends.append(((i, 1), (j, 1), "bar" if rng.random() < 0.3 else "string"))
        members.append([len(seg_ends)])
        used += 1

    touched = {e[0] for a, b, _ in seg_ends for e in (a, b)}
    nodes = []
    for k in range(nn):
        roll = rng.random()
        fixed = "xyz" if roll < 0.3 else ("yz" if roll < 0.4 else "z")
        if k not in touched:
            fixed = "xyz"
        mass = float(rng.uniform(0, 0.5)) if rng.random() < 0.3 else 0.0
        nodes.append(node(k + 1, float(pts[k][0]), float(pts[k][1]), fixed, atts[k], mass))
    if all(nd.fixed == frozenset("xyz") for nd in nodes):
        k = min(touched)
        nodes[k] = node(k + 1, float(pts[k][0]), float(pts[k][1]), "z", atts[k], nodes[k].mass)
    segs = [Segment(k + 1, (a[0] + 1, a[1]), (b[0] + 1, b[1]), kind,
                    float(rng.uniform(0, 0.2)) if rng.random() < 0.3 else 0.0)
            for k, (a, b, kind) in enumerate(seg_ends)]
    probe_members = [Member(k + 1, tuple(ids), 1.0, 1.0, 1.0) for k, ids in enumerate(members)]
    try:
        probe = StructureModel(nodes, segs, probe_members)
        geo = evaluate_geometry(probe.nodal_vector(), probe.topology)
    except (GeometryError, ValueError):
        return None
    topo = probe.topology
    if np.any(geo.l_S < 0.2 * geo.l):
        return None
    if topo.n_junction:
        h = geo.h
        a, b = h[topo.junction_in], h[topo.junction_out]
        cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        if np.any(cos < -0.98):  # fold-back: the string reverses direction
            return None
        pulley = topo.junction_radius > 0
        if np.any(geo.phi_C[pulley] < 0.05):
            return None
    mems = []
    for k, ids in enumerate(members):
        E = float(rng.uniform(1e9, 2e11))
        A = float(rng.uniform(1e-6, 1e-4))
        if segs[ids[0] - 1].kind == "string":
            l0 = geo.l_C[k] / (1 + rng.uniform(1e-3, 5e-2))
        else:
            l0 = geo.l_C[k] * (1 + rng.uniform(-0.05, 0.05))
        mems.append(Member(k + 1, tuple(ids), E, A, float(l0)))
    loads = []
    for nd in nodes:
        if rng.random() < 0.4:
            loads.append((nd.id, (*rng.uniform(-50, 50, 2), 0.0)))
    gravity = (0.0, 9.81, 0.0) if rng.random() < 0.3 else (0.0, 0.0, 0.0)
    return StructureModel(nodes, segs, mems, loads, gravity)


def random_models(count, seed=0, **kw):
    """``count`` accepted random models from a fixed seed."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m = random_planar_model(rng, **kw)
        if m is not None:
            out.append(m)
    return out


def record_statics(model, rec):
    """Statics re-evaluated at a solved substep."""
    return evaluate_statics(rec.n, model.topology, model.load_vector(rec.loads), model.gravity,
                            rec.rest_length)


def classical_tangent(model, n, t):
    """Tangent stiffness of pin-jointed members: (t/l)(I - uu') + (EA/l0) uu' per member."""
    topo = model.topology
    X = n.reshape(-1, 3)
    K = np.zeros((topo.n_dof, topo.n_dof))
    for j, c in enumerate(topo.C):
        h = c @ X
        l = np.linalg.norm(h)
        u = h / l
        i = topo.segment_member[j]
        k = topo.E[i] * topo.A[i] / topo.rest_length[i]
        K += np.kron(np.outer(c, c), t[j] / l * (np.eye(3) - np.outer(u, u)) + k * np.outer(u, u))
    return K


def zero_radius(model):
    """The same model with every pulley shrunk to its center."""
    nodes = [PhysicalNode(nd.id, nd.position, tuple(Attachment(0.0, 0) for _ in nd.attachments),
                          nd.fixed, nd.mass) for nd in model.nodes]
    return StructureModel(nodes, model.segments, model.members, model.loads, model.gravity)


def unclustered(model):
    """Every segment its own member, rest length shared out in proportion to segment length."""
    topo = model.topology
    geo = evaluate_geometry(model.nodal_vector(), topo)
    length = dict(zip(topo.segment_ids, geo.l_S))
    members = []
    for m in model.members:
        total = sum(length[s] for s in m.segments)
        for s in m.segments:
            members.append(Member(s, (s,), m.E, m.A, m.rest_length * length[s] / total))
    return StructureModel(model.nodes, model.segments, members, model.loads, model.gravity)
