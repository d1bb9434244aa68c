from functools import reduce

import numpy as np
import pytest

from spinsplit.pauli import PauliTerm

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}


def kron_string(n, letters):
    """Dense Pauli string by Kronecker products; site i is bit i (site 0 least significant)."""
    mats = [PAULI[letters.get(i, "I")] for i in range(n)]
    return reduce(np.kron, mats[::-1])


def kron_term(t: PauliTerm, n):
    G = kron_string(n, t.letters())
    return t.coeff * (np.eye(2**n) - G) if t.shifted else t.coeff * G


def kron_sum(op):
    M = np.zeros((op.dim, op.dim), dtype=complex)
    for t in op.terms:
        M += kron_term(t, op.n_sites)
    return M


def random_term(rng, n, shifted=False, max_weight=None):
    letters = {}
    for i in range(n):
        p = "IXYZ"[rng.integers(4)]
        if p != "I":
            letters[i] = p
    if max_weight is not None:
        letters = dict(list(letters.items())[:max_weight])
    return PauliTerm.from_ops(letters, float(rng.normal()), shifted)


def random_state(rng, n):
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_RESULTS: dict[str, dict[str, tuple[bool, str]]] = {}


def record_criterion(key: str, part: str, ok: bool, detail: str):
    """Verdict for one part of a criterion; a later record for the same part replaces it."""
    ACCEPTANCE_RESULTS.setdefault(key, {})[part] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        parts = list(ACCEPTANCE_RESULTS[key].values())
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{key}: {status}  " + "; ".join(d for _, d in parts))
