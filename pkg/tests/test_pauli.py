import itertools

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from spinsplit.errors import OperatorError
from spinsplit.lattice import build_torus
from spinsplit.models import build_toric_code
from spinsplit.pauli import (
    OperatorSum,
    PauliTerm,
    TermExponentials,
    apply_sum,
    apply_term,
    apply_term_exponential,
    basis_state,
    commutes,
    dense_matrix,
    format_term,
    parse_term,
    translate_operator,
)

from conftest import kron_string, kron_sum, kron_term, random_state, random_term


def P(text):
    return parse_term(text)


def test_commutes_examples():
    assert commutes(P("X0"), P("X0"))
    assert not commutes(P("X0"), P("Z0"))
    assert commutes(P("X0 X1"), P("Z0 Z1"))


def test_star_plaquette_commute_all_pairs():
    H = build_toric_code(3)
    terms = H.classical_terms.terms
    assert all(commutes(a, b) for a, b in itertools.combinations(terms, 2))


def test_star_plaquette_dense_check():
    # dense commutator on the shared two bonds of one star/plaquette pair
    H = build_toric_code(2)
    star, plaq = H.classical_terms.terms[0], H.classical_terms.terms[4]
    shared = sorted(set(star.support) & set(plaq.support))
    assert len(shared) == 2
    A = kron_string(2, {0: "X", 1: "X"})
    B = kron_string(2, {0: "Z", 1: "Z"})
    assert np.allclose(A @ B, B @ A)


def test_commutes_matches_dense_exhaustive():
    n = 2
    strings = [dict(zip(range(n), p)) for p in itertools.product("IXYZ", repeat=n)]
    for a, b in itertools.product(strings, repeat=2):
        A, B = kron_string(n, a), kron_string(n, b)
        dense = np.allclose(A @ B, B @ A)
        ta = PauliTerm.from_ops({k: v for k, v in a.items() if v != "I"})
        tb = PauliTerm.from_ops({k: v for k, v in b.items() if v != "I"})
        assert commutes(ta, tb) == dense


def test_commutes_matches_dense_three_spins():
    n = 3
    strings = list(itertools.product("IXYZ", repeat=n))
    mats = {s: kron_string(n, dict(enumerate(s))) for s in strings}
    terms = {s: PauliTerm.from_ops({i: p for i, p in enumerate(s) if p != "I"}) for s in strings}
    for a in strings:
        for b in strings:
            dense = np.abs(mats[a] @ mats[b] - mats[b] @ mats[a]).max() < 1e-12
            assert commutes(terms[a], terms[b]) == dense


def test_apply_term_basis_examples():
    up = basis_state(1, 0)
    assert np.allclose(apply_term(P("Z0"), up), up)
    assert np.allclose(apply_term(P("X0"), up), basis_state(1, 1))
    assert np.allclose(apply_term(P("Y0"), up), 1j * basis_state(1, 1))


def test_apply_term_matches_dense(rng):
    for _ in range(25):
        n = 4
        t = random_term(rng, n, shifted=bool(rng.integers(2)))
        psi = random_state(rng, n)
        assert np.allclose(apply_term(t, psi), kron_term(t, n) @ psi, atol=1e-12)


def test_apply_term_dimension_mismatch():
    with pytest.raises(OperatorError):
        apply_term(P("X3"), basis_state(2, 0), 2)


def test_apply_sum_examples(rng):
    psi = random_state(rng, 3)
    assert np.allclose(apply_sum(OperatorSum((), 3), psi), 0)
    assert np.allclose(apply_sum(OperatorSum((PauliTerm.identity(2.0),), 3), psi), 2 * psi)


def test_apply_sum_matches_dense_and_columns(rng):
    n = 5
    op = OperatorSum(tuple(random_term(rng, n, bool(i % 2)) for i in range(12)), n)
    M = kron_sum(op)
    psi = random_state(rng, n)
    assert np.allclose(apply_sum(op, psi), M @ psi, atol=1e-12)
    block = np.stack([random_state(rng, n) for _ in range(3)], axis=1)
    assert np.allclose(op.compile().matvec(block), M @ block, atol=1e-12)
    assert np.allclose(dense_matrix(op), M, atol=1e-12)


def test_toric_ground_vector_annihilated():
    op = build_toric_code(2).classical_terms
    M = kron_sum(op).real
    w, v = np.linalg.eigh(M)
    g = v[:, 0]
    assert abs(w[0]) < 1e-10
    assert np.linalg.norm(apply_sum(op, g)) < 1e-10


def test_exponential_examples(rng):
    t = PauliTerm.from_ops({0: "Z", 1: "Z"}, 0.7, shifted=True)
    psi = random_state(rng, 2)
    assert np.allclose(apply_term_exponential(t, 0.0, psi), psi)
    plus = basis_state(2, 0).astype(complex)  # Z0 Z1 eigenvalue +1
    assert np.allclose(apply_term_exponential(t, 1.3, plus), plus)


def test_exponential_matches_expm(rng):
    for shifted in (False, True):
        for _ in range(10):
            n = 3
            t = random_term(rng, n, shifted)
            tau = float(rng.uniform(0, 2))
            psi = random_state(rng, n)
            ref = scipy.linalg.expm(-tau * kron_term(t, n)) @ psi
            assert np.allclose(apply_term_exponential(t, tau, psi), ref, atol=1e-10)


def test_term_exponentials_commuting_product(rng):
    H = build_toric_code(2).classical_terms
    tau = 0.37
    psi = random_state(rng, H.n_sites)
    w, v = np.linalg.eigh(kron_sum(H).real)
    ref = v @ (np.exp(-tau * w) * (v.T @ psi))
    assert np.allclose(TermExponentials(H, tau)(psi), ref, atol=1e-10)


def test_translate_operator_examples():
    ring8, ring4 = build_torus(1, [8]), build_torus(1, [4])
    t = P("1.5 * X0 Z1")
    assert translate_operator(t, ring8, (0,)) == t
    assert translate_operator(P("X0"), ring8, (3,)) == P("X3")
    assert translate_operator(P("Z0 Z1"), ring4, (3,)) == P("Z3 Z0")


def test_parse_format_roundtrip():
    for text in ["1.0 * Z0 Z1", "-0.5 * X2 Y3", "2.0 * I", "1.0 * (I - X0 X1 X2 X3)"]:
        t = parse_term(text)
        assert parse_term(format_term(t)) == t
    assert format_term(parse_term("1.0 * Z1 Z0")) == "1.0 * Z0 Z1"
    with pytest.raises(OperatorError):
        parse_term("1.0 * Q0")
    with pytest.raises(OperatorError):
        parse_term("1.0 * X0 Z0")


def test_size_cap():
    op = OperatorSum((P("Z0"),), 22)
    with pytest.raises(OperatorError, match="cap"):
        op.compile()


masks = st.integers(0, 2**4 - 1)


@settings(max_examples=60, deadline=None)
@given(x=masks, z=masks, seed=st.integers(0, 2**16))
def test_string_squares_to_identity(x, z, seed):
    psi = random_state(np.random.default_rng(seed), 4)
    t = PauliTerm(1.0, x, z)
    assert np.allclose(apply_term(t, apply_term(t, psi)), psi, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_apply_sum_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    op = OperatorSum(tuple(random_term(rng, 4) for _ in range(5)), 4)
    psi, phi = random_state(rng, 4), random_state(rng, 4)
    lhs = apply_sum(op, a * psi + b * phi)
    rhs = a * apply_sum(op, psi) + b * apply_sum(op, phi)
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(x1=st.integers(0, 63), z1=st.integers(0, 63), x2=st.integers(0, 63),
       z2=st.integers(0, 63), shift=st.integers(-6, 6))
def test_translation_preserves_commutation(x1, z1, x2, z2, shift):
    ring = build_torus(1, [6])
    a, b = PauliTerm(1.0, x1, z1), PauliTerm(1.0, x2, z2)
    ga, gb = translate_operator(a, ring, (shift,)), translate_operator(b, ring, (shift,))
    assert commutes(a, b) == commutes(ga, gb)
