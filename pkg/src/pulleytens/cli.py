"""Command line front end: solve, sweep, modes and verify on model files."""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import radius_sweep, stiffness_spectrum, svd_modes
from .geometry import GeometryError
from .io import ParseError, SchemaError, dumps_json, fmt, load_deck, write_csv
from .model import ModelError
from .solver import stepped_solve
from .statics import evaluate_statics
from .verification import verify_deck

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2


# -- column layout -------------------------------------------------------------

def _junction_labels(topo):
    out, seen = [], {}
    for j in range(topo.n_junction):
        i = int(topo.junction_member[j])
        k = seen.get(i, 0)
        seen[i] = k + 1
        node = topo.node_ids[int(topo.attachment_node[topo.junction_attachment[j]])]
        out.append(f"phiC_m{topo.member_ids[i]}_n{node}_{k}")
    return out


def _state_header(model):
    topo = model.topology
    cols = [f"{ax}_{nd.id}" for nd in model.nodes for ax in "xyz"]
    cols += [f"lS_{s}" for s in topo.segment_ids]
    cols += _junction_labels(topo)
    cols += [f"tc_{m}" for m in topo.member_ids]
    cols += [f"lC_{m}" for m in topo.member_ids]
    return cols


def _state_values(rec):
    return [*rec.positions.ravel(), *rec.l_S, *rec.phi_C, *rec.t_c, *rec.l_C]


def _record_dict(rec, topo):
    return {
        "substep": rec.index,
        "converged": rec.converged,
        "iterations": rec.iterations,
        "residual_norm": rec.residual_norm,
        "force_scale": rec.force_scale,
        "residual_history": list(rec.residual_history),
        "positions": {str(nid): list(p) for nid, p in zip(topo.node_ids, rec.positions)},
        "l_S": dict(zip(map(str, topo.segment_ids), rec.l_S)),
        "phi_C": dict(zip(_junction_labels(topo), rec.phi_C)),
        "t_c": dict(zip(map(str, topo.member_ids), rec.t_c)),
        "l_C": dict(zip(map(str, topo.member_ids), rec.l_C)),
        "rest_length": dict(zip(map(str, topo.member_ids), rec.rest_length)),
        "loads": [{"node": nid, "force": list(f)} for nid, f in rec.loads],
        "warnings": list(rec.warnings),
    }


# -- helpers -------------------------------------------------------------------

def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_meta(out, command, argv, model_path, started, status, extra=None):
    meta = {
        "command": command,
        "argv": list(argv),
        "model": str(model_path),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "elapsed_s": round(time.time() - started, 6),
        "status": status,
    }
    meta.update(extra or {})
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", newline="\n")


def _apply_overrides(deck, substeps=None, tol=None):
    config, schedule = deck.config, deck.schedule
    if substeps is not None:
        config = replace(config, substeps=substeps)
        schedule = replace(schedule, substeps=substeps)
    if tol is not None:
        config = replace(config, tol_rel=tol)
    deck.config, deck.schedule = config, schedule
    return deck


def _pulley(text):
    try:
        node, att = text.split(":")
        return int(node), int(att)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NODE:ATTACH, got {text!r}") from None


def _radii(text):
    try:
        a, b, count = text.split(":")
        a, b, count = float(a), float(b), int(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B:COUNT, got {text!r}") from None
    if count < 1 or a < 0 or b < 0:
        raise argparse.ArgumentTypeError("radii must be non-negative and COUNT at least 1")
    return [float(v) for v in np.linspace(a, b, count)]


# -- commands ------------------------------------------------------------------

def cmd_solve(args, argv):
    started = time.time()
    deck = _apply_overrides(load_deck(args.model), args.substeps, args.tol)
    model, topo = deck.model, deck.model.topology
    out = _out_dir(args.out)
    result = stepped_solve(model, deck.schedule, deck.config)
    # trajectory first, so a failed run still leaves the completed substeps behind
    write_csv(out / "trajectory.csv", ["substep", *_state_header(model)],
              [[rec.index, *_state_values(rec)] for rec in result.substeps])
    ok = result.converged and result.error is None
    body = {
        "model": model.meta.get("name", Path(args.model).stem),
        "converged": ok,
        "error": result.error,
        "substeps": [_record_dict(rec, topo) for rec in result.substeps],
        "warnings": list(result.warnings),
    }
    st = result.final
    if st is not None:
        body["final"] = {
            "n": list(st.n), "t": list(st.t), "t_c": list(st.t_c), "taut": list(st.taut),
            "l": list(st.geometry.l), "l_S": list(st.geometry.l_S), "l_C": list(st.geometry.l_C),
            "phi_S": list(st.geometry.phi_S), "phi_R": list(st.geometry.phi_R),
            "phi_C": list(st.geometry.phi_C), "V": st.V, "P_a": list(st.P_a),
            "free_dofs": [f"{ax}_{nid}" for nid, ax in topo.free_labels],
        }
    (out / "result.json").write_text(dumps_json(body), newline="\n")
    _write_meta(out, "solve", argv, args.model, started, "ok" if ok else "failed")
    for rec in result.substeps:
        print(f"substep {rec.index}: {rec.iterations} iterations, "
              f"relative residual {rec.relative_residual:.3e}")
    if not ok:
        print(f"solve failed: {result.error or 'not converged'}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_sweep(args, argv):
    started = time.time()
    deck = load_deck(args.model)
    model = deck.model
    targets = args.pulley or deck.sweep_pulleys
    radii = args.radii if args.radii is not None else deck.sweep_radii
    if not targets or not radii:
        print("sweep needs --pulley and --radii, or a sweep block in the model", file=sys.stderr)
        return EXIT_INPUT
    out = _out_dir(args.out)
    table = radius_sweep(model, targets, radii, deck.schedule, deck.config)
    header = ["radius", "substep", "status", "lambda_min", *_state_header(model)]
    rows, failed = [], 0
    for row in table.rows:
        failed += row.status != "ok"
        recs = row.result.substeps if row.result is not None else []
        if not recs:
            rows.append([row.radius, "", row.status, "", *[""] * (len(header) - 4)])
        for rec, lam in zip(recs, row.lambda_min):
            rows.append([row.radius, rec.index, row.status, lam, *_state_values(rec)])
    write_csv(out / "sweep.csv", header, rows)
    _write_meta(out, "sweep", argv, args.model, started, "ok" if not failed else "failed",
                {"pulleys": [f"{n}:{a}" for n, a in table.targets]})
    for row in table.rows:
        note = f" ({row.error})" if row.error else ""
        print(f"radius {fmt(row.radius)}: {row.status}{note}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_modes(args, argv):
    started = time.time()
    deck = load_deck(args.model)
    model, topo = deck.model, deck.model.topology
    out = _out_dir(args.out)
    result = stepped_solve(model, deck.schedule, deck.config)
    ok = result.converged and result.error is None
    if result.substeps:
        rec = result.substeps[-1]
        n, loads, rest = rec.n, rec.loads, rec.rest_length
    else:
        n, loads, rest = model.nodal_vector(), None, None
    st = evaluate_statics(n, topo, model.load_vector(loads), model.gravity, rest)
    spec = stiffness_spectrum(st.K_Taa, args.count, converged=ok)
    dofs = [f"{ax}_{nid}" for nid, ax in topo.free_labels]
    write_csv(out / "modes.csv", ["mode", "eigenvalue", *dofs],
              [[k + 1, lam, *spec.modes[:, k]] for k, lam in enumerate(spec.eigenvalues)])
    dec = svd_modes(st.A_2c_free, args.rank_tol)
    V2 = dec.V2.copy()
    for j in range(V2.shape[1]):
        if V2[np.argmax(np.abs(V2[:, j])), j] < 0:
            V2[:, j] = -V2[:, j]
    write_csv(out / "self_stress.csv", ["mode", *[f"tc_{m}" for m in topo.member_ids]],
              [[k + 1, *V2[:, k]] for k in range(V2.shape[1])])
    _write_meta(out, "modes", argv, args.model, started, "ok" if ok else "not converged",
                {"self_stress_count": dec.self_stress_count,
                 "mechanism_count": dec.mechanism_count})
    for k, lam in enumerate(spec.eigenvalues):
        print(f"lambda_{k + 1} = {fmt(lam)}")
    print(f"self-stress modes: {dec.self_stress_count}")
    print(f"mechanism modes: {dec.mechanism_count}")
    if not ok:
        print(f"equilibrium not reached: {result.error or 'not converged'}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_verify(args, argv):
    log = verify_deck(load_deck(args.model))
    for rep in log.reports:
        print(rep.line())
    failed = sum(not r.passed for r in log.reports)
    print(f"{len(log.reports) - failed} passed, {failed} failed")
    return EXIT_OK if log.passed else EXIT_FAILED


def build_parser():
    p = argparse.ArgumentParser(prog="pulleytens",
                                description="Statics of clustered tensegrity with pulleys.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve every substep of the model's schedule")
    s.add_argument("model")
    s.add_argument("--out", default=".")
    s.add_argument("--substeps", type=int)
    s.add_argument("--tol", type=float, help="relative residual tolerance")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="repeat the solve over a range of pulley radii")
    s.add_argument("model")
    s.add_argument("--pulley", type=_pulley, action="append", metavar="NODE:ATTACH")
    s.add_argument("--radii", type=_radii, metavar="A:B:COUNT")
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("modes", help="stiffness eigenmodes and self-stress/mechanism counts")
    s.add_argument("model")
    s.add_argument("--count", type=int, default=None)
    s.add_argument("--rank-tol", type=float, default=1e-10)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_modes)

    s = sub.add_parser("verify", help="cross-check the engine against the oracles")
    s.add_argument("model")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except (FileNotFoundError, ParseError, SchemaError, ModelError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
