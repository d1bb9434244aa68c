"""Finite-step evaluation of the modified Lie-Trotter partition function

    Tr exp(-beta (H0 + eps P))  ~  Tr [ (I - eps*dtau*P) exp(-dtau*H0) ]^steps,

with ``dtau = beta / steps``.  ``exp(-dtau*H0)`` is an exact product of
single-term exponentials, which is valid because the terms of ``H0``
commute; the only discretisation error comes from the linearised
perturbation factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolve import DENSE_MAX_SPINS, Spectrum, dense_spectrum
from .errors import OperatorError, SolverError, VerificationError
from .pauli import OperatorSum, TermExponentials, commutes

EXACT_MAX_SPINS = 14
STOCHASTIC_MAX_SPINS = 20

TROTTER_COLUMNS = (
    "n_spins", "epsilon", "beta", "steps", "trotter_value", "exact_value", "abs_error",
    "error_times_steps", "mode", "probes", "stderr",
)


@dataclass(frozen=True)
class TrotterParams:
    beta: float
    steps: int
    mode: str = "exact_trace"
    probes: int = 64
    seed: int = 0
    chunk: int = 256

    def __post_init__(self):
        if self.beta < 0 or not math.isfinite(self.beta):
            raise OperatorError(f"beta must be finite and >= 0, got {self.beta}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise OperatorError(f"steps must be a positive integer, got {self.steps}")
        if self.mode not in ("exact_trace", "stochastic_trace"):
            raise OperatorError(f"unknown trace mode {self.mode!r}")
        if self.mode == "stochastic_trace" and self.probes < 1:
            raise OperatorError("stochastic mode needs probes >= 1")

    @property
    def dtau(self) -> float:
        return self.beta / self.steps


@dataclass
class TrotterResult:
    value: float
    stderr: float
    mode: str
    probes: int


class TrotterSlice:
    """One time slice ``(I - eps*dtau*P) exp(-dtau*H0)`` acting on column blocks."""

    def __init__(self, H0: OperatorSum, P: OperatorSum, eps: float, dtau: float, max_spins: int):
        self.diag_part = TermExponentials(H0, dtau, max_spins)
        self.pert = P.compile(max_spins) if (P.terms and eps != 0) else None
        self.factor = eps * dtau

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        out = self.diag_part(psi)
        if self.pert is not None:
            out = out - self.factor * self.pert.matvec(out)
        return out


def _require_commuting(H0: OperatorSum):
    terms = H0.terms
    for i, a in enumerate(terms):
        for b in terms[i + 1:]:
            if not commutes(a, b):
                raise VerificationError(f"H0 terms do not commute: [{a}] vs [{b}]")


def trotter_trace(H0: OperatorSum, P: OperatorSum, eps: float, params: TrotterParams) -> TrotterResult:
    if P.terms and P.n_sites != H0.n_sites:
        raise OperatorError("H0 and P act on different site counts")
    _require_commuting(H0)
    n, dim = H0.n_sites, H0.dim
    cap = EXACT_MAX_SPINS if params.mode == "exact_trace" else STOCHASTIC_MAX_SPINS
    if n > cap:
        raise OperatorError(f"{params.mode} is capped at {cap} spins, got {n}")
    step = TrotterSlice(H0, P, eps, params.dtau, cap)

    def propagate(block):
        for _ in range(params.steps):
            block = step(block)
        return block

    if params.mode == "exact_trace":
        total = 0.0
        for lo in range(0, dim, params.chunk):
            hi = min(dim, lo + params.chunk)
            cols = np.arange(lo, hi)
            block = np.zeros((dim, hi - lo), dtype=step.diag_part.dtype)
            block[cols, cols - lo] = 1.0
            block = propagate(block)
            total += float(np.real(block[cols, cols - lo].sum()))
        return TrotterResult(total, 0.0, params.mode, 0)

    rng = np.random.default_rng(params.seed)
    samples = []
    for lo in range(0, params.probes, params.chunk):
        hi = min(params.probes, lo + params.chunk)
        Z = rng.choice(np.array([-1.0, 1.0]), size=(dim, hi - lo))
        W = propagate(Z)
        samples.extend(np.real(np.einsum("ij,ij->j", Z, W)).tolist())
    s = np.asarray(samples)
    stderr = float(s.std(ddof=1) / math.sqrt(len(s))) if len(s) > 1 else math.inf
    return TrotterResult(float(s.mean()), stderr, params.mode, len(s))


def exact_trace(spectrum: Spectrum | np.ndarray, beta: float, n_sites: int | None = None) -> float:
    """sum_i exp(-beta * lambda_i) over a complete spectrum."""
    if isinstance(spectrum, Spectrum):
        ev, n_sites = np.asarray(spectrum.eigenvalues), spectrum.n_sites or n_sites
    else:
        ev = np.asarray(spectrum, dtype=float)
    if n_sites is not None and len(ev) != 1 << n_sites:
        raise SolverError(f"partial spectrum: {len(ev)} of {1 << n_sites} eigenvalues")
    return float(np.sum(np.exp(-beta * ev)))


@dataclass
class ConvergenceRow:
    n_spins: int
    epsilon: float
    beta: float
    steps: int
    trotter_value: float
    exact_value: float
    abs_error: float
    error_times_steps: float
    mode: str
    probes: int
    stderr: float

    def row(self) -> list[str]:
        return [str(self.n_spins), repr(self.epsilon), repr(self.beta), str(self.steps),
                repr(self.trotter_value), repr(self.exact_value), repr(self.abs_error),
                repr(self.error_times_steps), self.mode, str(self.probes), repr(self.stderr)]


def trotter_convergence(H0: OperatorSum, P: OperatorSum, eps: float, beta: float,
                        steps_list, mode: str = "exact_trace", probes: int = 64,
                        seed: int = 0) -> list[ConvergenceRow]:
    steps_list = [int(s) for s in steps_list]
    if not steps_list:
        raise OperatorError("steps list is empty")
    if any(b <= a for a, b in zip(steps_list, steps_list[1:])):
        raise OperatorError(f"steps list must be strictly ascending, got {steps_list}")
    if H0.n_sites > DENSE_MAX_SPINS:
        raise OperatorError(f"convergence study needs a dense reference (<= {DENSE_MAX_SPINS} spins)")
    full = H0 + P.scaled(eps) if P.terms else H0
    exact = exact_trace(dense_spectrum(full, with_vectors=False), beta)
    rows = []
    for s in steps_list:
        res = trotter_trace(H0, P, eps, TrotterParams(beta, s, mode, probes, seed))
        err = abs(res.value - exact)
        rows.append(ConvergenceRow(H0.n_sites, float(eps), float(beta), s, res.value, exact, err,
                                   err * s, res.mode, res.probes, res.stderr))
    return rows
