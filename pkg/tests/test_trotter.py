import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from spinsplit.errors import OperatorError, SolverError, VerificationError
from spinsplit.lattice import build_torus
from spinsplit.models import build_ising, uniform_field
from spinsplit.pauli import OperatorSum, parse_term
from spinsplit.trotter import (
    TrotterParams,
    TrotterSlice,
    exact_trace,
    trotter_convergence,
    trotter_trace,
)

from conftest import kron_sum

# frozen from Kronecker-product dense diagonalisation
Z_TWO_SPIN = 2.4307465826023202          # (I - Z0 Z1) + 0.3 (X0 + X1), beta = 1
Z_RING4 = {1.0: 2.436938517034881, 2.0: 2.4031926111264155}   # ring L=4, eps=0.3


def two_spin():
    H0 = OperatorSum((parse_term("(I - Z0 Z1)"),), 2)
    P = OperatorSum((parse_term("X0"), parse_term("X1")), 2)
    return H0, P


def ring(L):
    H = build_ising(build_torus(1, [L]))
    return H.operator(), uniform_field(H.lattice, "X").operator


def test_eps_zero_is_exact():
    H0, P = ring(4)
    for beta in (0.5, 2.0):
        ref = exact_trace(np.linalg.eigvalsh(kron_sum(H0)), beta, 4)
        for steps in (1, 7):
            val = trotter_trace(H0, P, 0.0, TrotterParams(beta, steps)).value
            assert val == pytest.approx(ref, rel=1e-12)


def test_beta_zero_gives_dimension():
    H0, P = ring(4)
    assert trotter_trace(H0, P, 0.3, TrotterParams(0.0, 5)).value == pytest.approx(16, abs=1e-12)


def test_two_spin_convergence():
    H0, P = two_spin()
    ref = exact_trace(np.linalg.eigvalsh(kron_sum(H0 + P.scaled(0.3))), 1.0, 2)
    assert ref == pytest.approx(Z_TWO_SPIN, rel=1e-12)
    errs = [abs(trotter_trace(H0, P, 0.3, TrotterParams(1.0, s)).value - ref) for s in (16, 32, 64, 128)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 5e-3


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_ring4_reference(beta):
    rows = trotter_convergence(*ring(4), 0.3, beta, [64, 128])
    assert rows[0].exact_value == pytest.approx(Z_RING4[beta], rel=1e-12)
    ratio = rows[0].abs_error / rows[1].abs_error
    assert 1.6 <= ratio <= 2.4


def test_exact_trace_examples():
    assert exact_trace(np.array([0.0, 2.0]), 1.0) == pytest.approx(1 + math.exp(-2))
    assert exact_trace(np.zeros(8), 0.0, 3) == 8
    with pytest.raises(SolverError):
        exact_trace(np.zeros(5), 1.0, 3)


def test_slice_matches_dense():
    rng = np.random.default_rng(7)
    H0, P = ring(4)
    eps, dtau = 0.4, 0.13
    S = TrotterSlice(H0, P, eps, dtau, 14)
    D = (np.eye(16) - eps * dtau * kron_sum(P)) @ expm(-dtau * kron_sum(H0))
    psi = rng.standard_normal((16, 3))
    assert np.abs(S(psi) - D @ psi).max() < 1e-12


def test_slice_with_shifted_and_mixed_terms():
    H0 = OperatorSum.parse("0.7 * (I - Z0 Z1)\n-0.4 * X0 X1\n0.2 * Y0 Y1\n1.3 * Z2", 3)
    P = OperatorSum.parse("Y0\n0.5 * X0 Z2", 3)
    S = TrotterSlice(H0, P, 0.2, 0.3, 14)
    D = (np.eye(8) - 0.06 * kron_sum(P)) @ expm(-0.3 * kron_sum(H0))
    psi = np.random.default_rng(3).standard_normal(8)
    assert np.abs(S(psi) - D @ psi).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(eps=st.floats(0.05, 0.6), beta=st.floats(0.5, 2.0))
def test_error_times_steps_stabilises(eps, beta):
    rows = trotter_convergence(*ring(4), eps, beta, [32, 64])
    a, b = rows[0].error_times_steps, rows[1].error_times_steps
    assert abs(b - a) <= 0.3 * max(a, b)


def test_stochastic_estimate_unbiased():
    H0, P = ring(4)
    exact = trotter_trace(H0, P, 0.3, TrotterParams(1.0, 32)).value
    res = trotter_trace(H0, P, 0.3, TrotterParams(1.0, 32, "stochastic_trace", probes=400, seed=5))
    assert res.probes == 400
    assert abs(res.value - exact) <= 3 * res.stderr


def test_stochastic_reproducible():
    H0, P = ring(4)
    p = TrotterParams(1.0, 8, "stochastic_trace", probes=20, seed=11)
    assert trotter_trace(H0, P, 0.2, p).value == trotter_trace(H0, P, 0.2, p).value


def test_non_commuting_h0_rejected():
    H0 = OperatorSum((parse_term("X0"), parse_term("Z0")), 1)
    P = OperatorSum((parse_term("X0"),), 1)
    with pytest.raises(VerificationError):
        trotter_trace(H0, P, 0.1, TrotterParams(1.0, 4))


@pytest.mark.parametrize("kwargs", [
    dict(beta=-1.0, steps=4),
    dict(beta=1.0, steps=0),
    dict(beta=1.0, steps=4, mode="bogus"),
    dict(beta=1.0, steps=4, mode="stochastic_trace", probes=0),
])
def test_bad_params(kwargs):
    with pytest.raises(OperatorError):
        TrotterParams(**kwargs)


def test_convergence_rejects_unsorted_steps():
    with pytest.raises(OperatorError):
        trotter_convergence(*ring(4), 0.1, 1.0, [64, 32])
