import csv
import math

import numpy as np
import pytest

from spinsplit.analysis import (
    SplittingRecord,
    SplittingTable,
    check_order_observable,
    diagonal_splitting,
    estimate_threshold,
    first_order_splitting,
    fit_scaling,
    ground_basis,
    magnetization,
    projected_matrix,
    spectral_splitting,
    sweep_splitting,
    symmetry_resolve,
)
from spinsplit.eigensolve import SolverSettings, low_spectrum
from spinsplit.errors import InsufficientDataError, OperatorError
from spinsplit.lattice import build_torus
from spinsplit.models import (
    HamiltonianSpec,
    PerturbationSpec,
    build_custom,
    build_ising,
    build_toric_code,
    global_flip,
    uniform_field,
)
from spinsplit.pauli import OperatorSum, PauliTerm, basis_state, parse_term

from conftest import kron_string, kron_sum

DENSE = SolverSettings(method="dense", cluster_tol=1e-12)


def ising_ring(L, axis="X", eps=0.0):
    H = build_ising(build_torus(1, [L]))
    return H.with_perturbation(uniform_field(H.lattice, axis), eps)


def aligned_basis(L):
    return np.stack([basis_state(L, 0), basis_state(L, (1 << L) - 1)], axis=1)


# -- diagonal ---------------------------------------------------------------

def test_diagonal_zero_eps():
    H = ising_ring(6, "Z", 0.0)
    assert diagonal_splitting(H, aligned_basis(6)) == 0.0


def test_diagonal_off_diagonal_field_is_exactly_zero():
    H = ising_ring(6, "X", 0.3)
    assert diagonal_splitting(H, aligned_basis(6)) == 0.0


def test_diagonal_z_field():
    H = ising_ring(6, "Z", 0.1)
    assert diagonal_splitting(H, aligned_basis(6)) == pytest.approx(0.6, abs=1e-12)


def test_diagonal_rejects_non_orthonormal():
    B = np.stack([basis_state(4, 0), basis_state(4, 0)], axis=1)
    with pytest.raises(OperatorError):
        diagonal_splitting(ising_ring(4, "X", 0.1), B)


# -- first order ------------------------------------------------------------

def test_first_order_zero_projection():
    P = uniform_field(build_torus(1, [4]), "X").operator
    assert first_order_splitting(P, aligned_basis(4), 0.5) == 0.0


def test_first_order_single_spin_toy():
    P = OperatorSum((parse_term("X0"),), 1)
    B = np.eye(2)
    assert first_order_splitting(P, B, 0.3) == pytest.approx(0.6, abs=1e-14)


def test_first_order_toric_field_vanishes():
    H = build_toric_code(2)
    B = ground_basis(H, DENSE)
    assert B.shape[1] == 4
    P = uniform_field(H.lattice).operator
    # oracle: project the Kronecker-built field onto the ground space
    Pd = sum(kron_string(8, {i: "X"}) for i in range(8))
    assert np.abs(B.conj().T @ Pd @ B).max() < 1e-12
    assert np.abs(projected_matrix(P, B)).max() < 1e-12
    assert first_order_splitting(P, B, 0.05) < 1e-12


# -- spectral ---------------------------------------------------------------

@pytest.mark.parametrize("H", [ising_ring(6, "X"), build_toric_code(2).with_perturbation(
    uniform_field(build_toric_code(2).lattice), 0.0)])
def test_spectral_zero_at_eps_zero(H):
    rec = spectral_splitting(H, H.expected_degeneracy, DENSE)
    assert rec.splitting_spectral <= 1e-9
    assert rec.floor_flag


# frozen from Kronecker-product dense diagonalisation
ISING_SPLIT_02 = {6: 3.100090965725555e-05, 8: 1.05447037926365e-06, 10: 3.732243654408496e-08}


def test_spectral_ising8_matches_oracle():
    rec = spectral_splitting(ising_ring(8, "X", 0.2), 2, DENSE)
    assert rec.splitting_spectral == pytest.approx(ISING_SPLIT_02[8], rel=1e-6)
    assert rec.gap_to_next == pytest.approx(3.275234966326864, abs=1e-9)
    assert rec.splitting_diagonal == 0.0
    assert rec.splitting_first_order == 0.0
    assert rec.weyl_ok


def test_spectral_krylov_agrees_and_shrinks():
    r8 = spectral_splitting(ising_ring(8, "X", 0.2), 2, DENSE)
    r10 = spectral_splitting(ising_ring(10, "X", 0.2), 2,
                             SolverSettings(method="krylov", tol=1e-11, cluster_tol=1e-12))
    assert r10.splitting_spectral == pytest.approx(ISING_SPLIT_02[10], rel=1e-3)
    assert r10.splitting_spectral < r8.splitting_spectral


def test_first_order_vs_spectral_is_second_order():
    # ground space {|000>, |111>} of a 3-ring; P has a first-order splitting and an
    # asymmetric second-order shift, so |spectral - first order| ~ eps^2
    H = build_ising(build_torus(1, [3]))
    terms = (parse_term("Z0"), parse_term("X0"), parse_term("X0 Z1"))
    P = OperatorSum(terms, 3)
    pert = PerturbationSpec(P, (P,), "custom")
    B = aligned_basis(3)
    diffs = []
    for eps in (0.02, 0.01, 0.005):
        rec = spectral_splitting(H.with_perturbation(pert, eps), 2, DENSE, B)
        diffs.append(abs(rec.splitting_spectral - rec.splitting_first_order))
    for a, b in zip(diffs, diffs[1:]):
        assert 3.5 <= a / b <= 4.5


# -- sweeps -----------------------------------------------------------------

def builder(ext):
    return ising_ring(ext[0], "X")


def test_sweep_decreasing():
    table = sweep_splitting(builder, [[6], [8], [10]], [0.1], 2, DENSE)
    s = [r.splitting_spectral for r in table]
    assert len(s) == 3
    assert s[0] > s[1] > s[2] > 0
    for r in table:
        assert r.weyl_ok
        assert r.splitting_diagonal == 0.0


def test_sweep_zero_column():
    table = sweep_splitting(builder, [[4], [6]], [0.0, 0.3], 2, DENSE)
    assert [r.epsilon for r in table] == [0.0, 0.3, 0.0, 0.3]
    for r in table.at_epsilon(0.0):
        assert r.splitting_spectral < 1e-9


def test_sweep_resume(tmp_path, monkeypatch):
    path = tmp_path / "s.csv"
    first = sweep_splitting(builder, [[4], [6]], [0.1, 0.2], 2, DENSE, path)
    text = path.read_text()
    lines = text.splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")

    import spinsplit.analysis as an
    calls = []
    real = an.spectral_splitting

    def counting(H, *a, **k):
        calls.append((H.name, H.epsilon))
        return real(H, *a, **k)

    monkeypatch.setattr(an, "spectral_splitting", counting)
    second = sweep_splitting(builder, [[4], [6]], [0.1, 0.2], 2, DENSE, path)
    assert calls == [("ising_6", 0.2)]
    assert path.read_text() == text
    assert [r.row() for r in second] == [r.row() for r in first]


def test_sweep_threads_same_result():
    a = sweep_splitting(builder, [[4], [6]], [0.1, 0.2], 2, DENSE, workers=1)
    b = sweep_splitting(builder, [[4], [6]], [0.1, 0.2], 2, DENSE, workers=3)
    assert [r.row() for r in a] == [r.row() for r in b]


def test_table_csv_roundtrip(tmp_path):
    table = sweep_splitting(builder, [[4]], [0.1], 2, DENSE)
    table.write_csv(tmp_path / "t.csv")
    back = SplittingTable.read_csv(tmp_path / "t.csv")
    assert [r.row() for r in back] == [r.row() for r in table]
    with open(tmp_path / "t.csv") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "model" and header[-1] == "floor_flag"


# -- fits -------------------------------------------------------------------

SIZES = [4, 6, 8]


@pytest.mark.parametrize("model, law, c", [
    ("exp_volume", lambda n, c: math.exp(-c * n), 2.0),
    ("exp_sqrt_volume", lambda n, c: math.exp(-c * math.sqrt(n)), 1.5),
    ("inverse_volume", lambda n, c: c / n, 5.0),
])
def test_fit_recovers_synthetic(model, law, c):
    fit = fit_scaling((SIZES, [law(n, c) for n in SIZES]))
    assert fit.model == model
    assert abs(fit.c - c) <= 1e-10
    assert fit.rmse < 1e-12
    assert set(fit.candidates) == {"exp_volume", "exp_sqrt_volume", "inverse_volume"}


def test_fit_free_exponent_diagnostic():
    fit = fit_scaling(([4, 8, 16], [3 / n**2 for n in (4, 8, 16)]))
    assert fit.free_exponent == pytest.approx(-2)
    assert fit.model != "free"


def test_n0():
    fit = fit_scaling((SIZES, [math.exp(-2 * n) for n in SIZES]))
    assert fit.n0(1e-6) == math.ceil(-math.log(1e-6) / 2)
    inv = fit_scaling((SIZES, [5 / n for n in SIZES]))
    assert inv.n0(0.011) == 455


def test_fit_needs_three_points():
    with pytest.raises(InsufficientDataError):
        fit_scaling(([4, 6], [1e-2, 1e-3]))
    with pytest.raises(InsufficientDataError):
        fit_scaling(([4, 6, 8], [1e-2, 1e-3, 0.0]))


def test_fit_skips_floor_flagged_records():
    recs = [SplittingRecord("m", 1, (n,), n, 0.1, 2, 1e-12, 0, 0, 1, "dense", True)
            for n in SIZES]
    with pytest.raises(InsufficientDataError):
        fit_scaling(SplittingTable(recs))


# -- threshold --------------------------------------------------------------

def _rec(eps, split, gap):
    return SplittingRecord("m", 1, (8,), 8, eps, 2, split, 0, 0, gap, "dense")


def test_threshold_unperturbed_like():
    est = estimate_threshold([_rec(e, 0.0, 4.0) for e in (0.1, 0.2, 0.3)])
    assert est.epsilon == 0.3


def test_threshold_never_separated():
    est = estimate_threshold([_rec(e, 1.0, 1.0) for e in (0.1, 0.2)])
    assert est.epsilon == 0.0
    assert est.diagnostic


def test_threshold_ising_ring():
    grid = [round(0.1 * i, 1) for i in range(1, 16)]
    table = sweep_splitting(builder, [[8]], grid, 2, DENSE)
    est = estimate_threshold(table)
    assert grid[0] < est.epsilon < grid[-1]


# -- order observable -------------------------------------------------------

def test_order_ising_ring():
    H = ising_ring(8, "X", 0.2)
    spec = low_spectrum(H.operator(), 2, DENSE)
    _, states = symmetry_resolve(H, spec.vectors(slice(0, 2)), global_flip(8))
    rep = check_order_observable(H, magnetization(8), states)
    assert rep.locality_ok and rep.mutual_commute_ok
    assert max(abs(m) for m in rep.mean_values) < 1e-8
    assert rep.zeta > 0
    # oracle: direct dense expectation values
    O = sum(kron_string(8, {i: "Z"}) for i in range(8))
    for k in range(2):
        v = states[:, k]
        assert rep.second_moments[k] == pytest.approx(np.real(v.conj() @ O @ O @ v), rel=1e-10)
    for mu, s2 in zip(rep.mean_values, rep.second_moments):
        assert s2 >= mu**2


def test_order_identity_observable_flagged():
    H = ising_ring(4, "X", 0.2)
    O = OperatorSum(tuple(PauliTerm.identity() for _ in range(4)), 4)
    spec = low_spectrum(H.operator(), 2, DENSE)
    rep = check_order_observable(H, O, spec.vectors(slice(0, 2)))
    assert rep.mean_values[0] == pytest.approx(4)
    assert not rep.means_vanish and not rep.ok
    assert rep.violations


def test_order_z_only_hamiltonian():
    H = ising_ring(4, "Z", 0.1)
    rep = check_order_observable(H, magnetization(4), basis_state(4, 0))
    assert rep.locality_ok and rep.mutual_commute_ok


def test_order_non_commuting_observable():
    H = ising_ring(4, "X", 0.1)
    O = OperatorSum((parse_term("X0"), parse_term("Z0")), 4)
    rep = check_order_observable(H, O, basis_state(4, 0))
    assert not rep.mutual_commute_ok


def test_order_dimension_mismatch():
    with pytest.raises(OperatorError):
        check_order_observable(ising_ring(4), magnetization(4), basis_state(3, 0))
