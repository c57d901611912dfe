import os
import warnings

import numpy as np
import pytest

from helpers import classical_tbar, record_statics
from pulleytens.analysis import NotConverged, radius_sweep, stiffness_spectrum, svd_modes
from pulleytens.io import load_deck
from pulleytens.oracle import brute_self_stress_count
from pulleytens.solver import SolveConfig, stepped_solve
from pulleytens.statics import evaluate_statics


def statics(model):
    return evaluate_statics(model.nodal_vector(), model.topology, model.load_vector(),
                            model.gravity)


def test_zero_matrix_has_rank_zero():
    dec = svd_modes(np.zeros((4, 3)))
    assert dec.rank == 0
    assert dec.self_stress_count == 3 and dec.mechanism_count == 4


def test_classical_tbar_has_one_self_stress():
    m = classical_tbar()
    dec = svd_modes(statics(m).A_2c_free)
    assert dec.self_stress_count == 1
    assert brute_self_stress_count(m) == 1


def test_clustering_removes_one_column():
    A = statics(classical_tbar()).A_2c_free
    Ac = statics(classical_tbar(clustered=True)).A_2c_free
    assert Ac.shape[1] == A.shape[1] - 1
    dec = svd_modes(Ac)
    assert dec.self_stress_count == Ac.shape[1] - dec.rank


@pytest.mark.parametrize("name", ["tbar_classical", "tbar", "compound_pulley", "finger"])
def test_null_spaces_within_rank_tolerance(name):
    m = load_deck(name).model
    A = statics(m).A_2c_free
    dec = svd_modes(A)
    smax = dec.sigma[0]
    bound = 10 * dec.rank_tol * smax * np.sqrt(A.shape[1])
    assert np.linalg.norm(A @ dec.V2) <= bound
    assert np.linalg.norm(A.T @ dec.W2) <= bound
    np.testing.assert_allclose(dec.V.T @ dec.V, np.eye(A.shape[1]), atol=1e-12)


def test_spectrum_of_prestressed_tbar_is_positive():
    deck = load_deck("tbar")
    res = stepped_solve(deck.model, deck.schedule, deck.config)
    spec = stiffness_spectrum(record_statics(deck.model, res.substeps[-1]).K_Taa, 3)
    assert spec.minimal > 0
    assert np.all(np.diff(spec.eigenvalues) >= 0)
    np.testing.assert_allclose(spec.modes.T @ spec.modes, np.eye(3), atol=1e-12)
    for j in range(3):
        v = spec.modes[:, j]
        assert v[np.argmax(np.abs(v))] > 0


def test_spectrum_reports_asymmetry():
    K = np.array([[2.0, 1.0], [0.0, 3.0]])
    spec = stiffness_spectrum(K)
    assert spec.asymmetry == pytest.approx(np.linalg.norm(K - K.T) / np.linalg.norm(K))
    np.testing.assert_allclose(spec.eigenvalues, np.linalg.eigvalsh(0.5 * (K + K.T)))


def test_spectrum_warns_off_equilibrium():
    with pytest.warns(NotConverged):
        stiffness_spectrum(np.eye(2), converged=False)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        stiffness_spectrum(np.eye(2))


def test_single_radius_sweep_equals_plain_solve():
    deck = load_deck("compound_pulley")
    r = deck.model.topology.R[1]
    table = radius_sweep(deck.model, [(2, 1)], [r], deck.schedule, deck.config)
    assert len(table.rows) == 1 and table.rows[0].status == "ok"
    plain = stepped_solve(deck.model, deck.schedule, deck.config)
    for a, b in zip(table.rows[0].result.substeps, plain.substeps):
        np.testing.assert_array_equal(a.n, b.n)


def test_sweep_records_infeasible_radius():
    deck = load_deck("compound_pulley")
    table = radius_sweep(deck.model, [(2, 1)], [0.005, 5.0], deck.schedule, deck.config)
    assert [row.radius for row in table.rows] == [0.005, 5.0]
    assert table.rows[0].status == "ok"
    assert table.rows[1].status == "failed" and table.rows[1].error


def test_sweep_is_independent_of_thread_count(monkeypatch):
    deck = load_deck("tbar")
    radii = deck.sweep_radii[1:5]
    tables = []
    for threads in ("1", "4"):
        monkeypatch.setenv("PULLEYTENS_THREADS", threads)
        tables.append(radius_sweep(deck.model, deck.sweep_pulleys, radii, deck.schedule,
                                   deck.config))
    for a, b in zip(*(t.rows for t in tables)):
        assert a.radius == b.radius and a.lambda_min == b.lambda_min
        np.testing.assert_array_equal(a.result.substeps[-1].n, b.result.substeps[-1].n)


def test_zero_radius_sweep_point_matches_classical_solve():
    deck = load_deck("tbar")
    table = radius_sweep(deck.model, deck.sweep_pulleys, [0.0], deck.schedule, deck.config)
    plain = stepped_solve(classical_tbar(clustered=True), deck.schedule, SolveConfig(tol_rel=1e-10))
    a = table.rows[0].result.substeps[-1]
    b = plain.substeps[-1]
    np.testing.assert_allclose(a.t_c, b.t_c, rtol=1e-6)
