"""Pauli-string operators acting matrix-free on spin-1/2 state vectors.

Basis convention: bit ``i`` of a basis index is the spin on lattice site
``i``; bit value 0 is spin up (Z eigenvalue +1).  A Pauli string is stored as
two bitmasks, ``x_mask`` (X or Y acts) and ``z_mask`` (Z or Y acts), and

    G |b> = i^{popcount(x & z)} (-1)^{popcount(z & b)} |b ^ x>

so Y = iXZ and every string is Hermitian with G^2 = I.

A ``PauliTerm`` is either ``coeff * G`` or, when ``shifted`` is set,
``coeff * (I - G)``; the shifted form gives classical terms a zero minimum.

State vectors are plain numpy arrays of length ``2**N``; a 2-D array of
shape ``(2**N, k)`` is treated as ``k`` column vectors.  Memory per complex
vector is ``16 * 2**N`` bytes (half that for real operators).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import OperatorError
from .lattice import TorusLattice, translate_site

__all__ = [
    "PauliTerm",
    "OperatorSum",
    "CompiledOperator",
    "TermExponentials",
    "DEFAULT_MAX_SPINS",
    "commutes",
    "apply_term",
    "apply_sum",
    "apply_term_exponential",
    "translate_operator",
    "parse_term",
    "format_term",
    "basis_state",
    "check_state",
    "dense_matrix",
]

DEFAULT_MAX_SPINS = 20

_PAULI_TOKEN = re.compile(r"^([XYZ])(\d+)$")


def _bits(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class PauliTerm:
    coeff: float
    x_mask: int = 0
    z_mask: int = 0
    shifted: bool = False

    def __post_init__(self):
        if not np.isfinite(self.coeff) or np.iscomplexobj(self.coeff):
            raise OperatorError(f"coefficient must be a finite real, got {self.coeff!r}")
        if self.x_mask < 0 or self.z_mask < 0:
            raise OperatorError("masks must be non-negative")

    @classmethod
    def from_ops(cls, ops: Mapping[int, str], coeff: float = 1.0, shifted: bool = False):
        """Build from ``{site: "X" | "Y" | "Z"}``."""
        x = z = 0
        for site, p in ops.items():
            bit = 1 << int(site)
            if p == "X":
                x |= bit
            elif p == "Z":
                z |= bit
            elif p == "Y":
                x |= bit
                z |= bit
            elif p != "I":
                raise OperatorError(f"unknown Pauli letter {p!r}")
        return cls(float(coeff), x, z, shifted)

    @classmethod
    def identity(cls, coeff: float = 1.0):
        return cls(float(coeff))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(_bits(self.x_mask | self.z_mask))

    @property
    def weight(self) -> int:
        return (self.x_mask | self.z_mask).bit_count()

    @property
    def y_count(self) -> int:
        return (self.x_mask & self.z_mask).bit_count()

    @property
    def is_diagonal(self) -> bool:
        return self.x_mask == 0

    @property
    def is_real(self) -> bool:
        return self.y_count % 2 == 0

    @property
    def phase(self) -> complex:
        return 1j ** (self.y_count % 4)

    def letters(self) -> dict[int, str]:
        out = {}
        for s in self.support:
            bx, bz = (self.x_mask >> s) & 1, (self.z_mask >> s) & 1
            out[s] = "Y" if bx and bz else ("X" if bx else "Z")
        return out

    def with_coeff(self, coeff: float) -> "PauliTerm":
        return PauliTerm(float(coeff), self.x_mask, self.z_mask, self.shifted)

    def __str__(self):
        return format_term(self)


def format_term(t: PauliTerm) -> str:
    """Text form ``coeff * P_i P_j ...``; shifted terms print as ``coeff * (I - ...)``."""
    letters = t.letters()
    body = " ".join(f"{p}{s}" for s, p in sorted(letters.items())) or "I"
    if t.shifted:
        body = f"(I - {body})"
    return f"{t.coeff!r} * {body}"


def parse_term(text: str) -> PauliTerm:
    """Inverse of :func:`format_term`.

    >>> parse_term("1.0 * Z0 Z1").z_mask
    3
    >>> parse_term("0.5 * (I - X0 X1)").shifted
    True
    """
    if "*" in text:
        head, body = text.split("*", 1)
        try:
            coeff = float(head)
        except ValueError:
            raise OperatorError(f"bad coefficient in {text!r}") from None
    else:
        coeff, body = 1.0, text
    body = body.strip()
    shifted = False
    m = re.fullmatch(r"\(\s*I\s*-\s*(.+?)\s*\)", body)
    if m:
        shifted, body = True, m.group(1)
    ops: dict[int, str] = {}
    for tok in body.split():
        if tok == "I":
            continue
        mt = _PAULI_TOKEN.match(tok)
        if not mt:
            raise OperatorError(f"bad Pauli token {tok!r} in {text!r}")
        site = int(mt.group(2))
        if site in ops:
            raise OperatorError(f"site {site} repeated in {text!r}")
        ops[site] = mt.group(1)
    return PauliTerm.from_ops(ops, coeff, shifted)


def commutes(a: PauliTerm, b: PauliTerm) -> bool:
    """Symplectic test; the identity shift never affects commutation."""
    overlap = (a.x_mask & b.z_mask).bit_count() + (a.z_mask & b.x_mask).bit_count()
    return overlap % 2 == 0


@dataclass(frozen=True)
class OperatorSum:
    terms: tuple[PauliTerm, ...]
    n_sites: int

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.n_sites < 1:
            raise OperatorError("n_sites must be >= 1")
        limit = 1 << self.n_sites
        for t in self.terms:
            if (t.x_mask | t.z_mask) >= limit:
                raise OperatorError(f"term {t} acts outside [0, {self.n_sites})")

    @classmethod
    def parse(cls, lines: Iterable[str] | str, n_sites: int) -> "OperatorSum":
        if isinstance(lines, str):
            lines = lines.splitlines()
        return cls(tuple(parse_term(s) for s in lines if s.strip()), n_sites)

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        if other.n_sites != self.n_sites:
            raise OperatorError("adding operators on different site counts")
        return OperatorSum(self.terms + other.terms, self.n_sites)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def scaled(self, factor: float) -> "OperatorSum":
        return OperatorSum(tuple(t.with_coeff(t.coeff * factor) for t in self.terms), self.n_sites)

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    @property
    def is_real(self) -> bool:
        return all(t.is_real for t in self.terms)

    @property
    def is_diagonal(self) -> bool:
        return all(t.is_diagonal for t in self.terms)

    @property
    def norm_bound(self) -> float:
        """Sum of |coeff| times the norm of each term (2 for shifted terms)."""
        return float(sum(abs(t.coeff) * (2 if t.shifted else 1) for t in self.terms))

    @property
    def max_support(self) -> int:
        return max((t.weight for t in self.terms), default=0)

    def lines(self) -> list[str]:
        return [format_term(t) for t in self.terms]

    def compile(self, max_spins: int = DEFAULT_MAX_SPINS) -> "CompiledOperator":
        return CompiledOperator(self, max_spins)


def _check_size(n: int, max_spins: int):
    if n > max_spins:
        raise OperatorError(
            f"{n} spins exceeds the cap of {max_spins} "
            f"(one complex vector needs {16 * 2**n / 2**20:.0f} MiB)"
        )


def _parity(z_mask: int, n: int) -> np.ndarray:
    """(-1)^{popcount(z & b)} for every basis index b, as float64."""
    idx = np.arange(1 << n, dtype=np.uint64)
    par = np.bitwise_count(idx & np.uint64(z_mask)) & 1
    return 1.0 - 2.0 * par


def _flip(psi: np.ndarray, x_mask: int, n: int) -> np.ndarray:
    """View of ``psi`` permuted by ``b -> b ^ x_mask`` along axis 0."""
    if x_mask == 0:
        return psi
    extra = psi.shape[1:]
    t = psi.reshape((2,) * n + extra)
    # bit i lives on axis n-1-i in C order
    axes = tuple(n - 1 - i for i in _bits(x_mask))
    return np.flip(t, axis=axes).reshape(psi.shape)


def _as_columns(diag: np.ndarray, psi: np.ndarray) -> np.ndarray:
    return diag if psi.ndim == 1 else diag[:, None]


def check_state(psi: np.ndarray, n_sites: int) -> np.ndarray:
    psi = np.asarray(psi)
    if psi.shape[0] != 1 << n_sites:
        raise OperatorError(f"state has leading dimension {psi.shape[0]}, expected {1 << n_sites}")
    return psi


def basis_state(n_sites: int, index: int, dtype=np.float64) -> np.ndarray:
    psi = np.zeros(1 << n_sites, dtype=dtype)
    psi[index] = 1.0
    return psi


def apply_term(t: PauliTerm, psi: np.ndarray, n_sites: int | None = None) -> np.ndarray:
    """Matrix-free ``t @ psi``."""
    n = n_sites if n_sites is not None else int(psi.shape[0]).bit_length() - 1
    psi = check_state(psi, n)
    if (t.x_mask | t.z_mask) >> n:
        raise OperatorError(f"term {t} acts outside a {n}-spin state")
    d = _parity(t.z_mask, n)
    if not t.is_real:
        d = d * t.phase
    else:
        d = d * t.phase.real
    g = _flip(_as_columns(d, psi) * psi, t.x_mask, n)
    if t.shifted:
        return t.coeff * (psi - g)
    return t.coeff * g


class CompiledOperator:
    """Operator sum grouped by X-mask: ``H psi = sum_x flip_x(d_x * psi)``.

    Terms sharing an X-mask collapse into one diagonal array, so a matvec
    costs one elementwise product and one axis-flip per distinct X-mask.
    Groups are visited in ascending X-mask order, which fixes the summation
    order independent of term order within a group up to the diagonal build.
    """

    def __init__(self, op: OperatorSum, max_spins: int = DEFAULT_MAX_SPINS):
        _check_size(op.n_sites, max_spins)
        self.n_sites = op.n_sites
        self.dim = op.dim
        self.dtype = np.float64 if op.is_real else np.complex128
        groups: dict[int, np.ndarray] = {}
        for t in op.terms:
            sign = _parity(t.z_mask, self.n_sites)
            val = sign * (t.phase.real if t.is_real else t.phase)
            if t.shifted:
                groups.setdefault(0, np.zeros(self.dim, self.dtype))
                groups[0] += t.coeff
                val = -val
            if t.x_mask not in groups:
                groups[t.x_mask] = np.zeros(self.dim, self.dtype)
            groups[t.x_mask] += t.coeff * val
        self.groups = sorted(groups.items())
        self.shape = (self.dim, self.dim)

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        psi = check_state(psi, self.n_sites)
        out_dtype = np.result_type(self.dtype, psi.dtype)
        out = np.zeros(psi.shape, dtype=out_dtype)
        for x, d in self.groups:
            out += _flip(_as_columns(d, psi) * psi, x, self.n_sites)
        return out

    __call__ = matvec

    def diagonal(self) -> np.ndarray:
        for x, d in self.groups:
            if x == 0:
                return d.copy()
        return np.zeros(self.dim, self.dtype)

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, self.matvec(psi))))


def apply_sum(H: OperatorSum | CompiledOperator, psi: np.ndarray) -> np.ndarray:
    if isinstance(H, OperatorSum):
        check_state(psi, H.n_sites)
        if not H.terms:
            return np.zeros(psi.shape, dtype=np.result_type(psi.dtype, np.float64))
        H = H.compile(max_spins=max(H.n_sites, DEFAULT_MAX_SPINS))
    return H.matvec(psi)


def _exp_coefficients(t: PauliTerm, tau: float) -> tuple[float, float]:
    """(a, b) with exp(-tau * t) = a I + b G."""
    x = tau * t.coeff
    if t.shifted:
        # exp(-x (I - G)) = e^{-x} (cosh x I + sinh x G)
        return np.exp(-x) * np.cosh(x), np.exp(-x) * np.sinh(x)
    return np.cosh(x), -np.sinh(x)


def apply_term_exponential(t: PauliTerm, tau: float, psi: np.ndarray,
                           n_sites: int | None = None) -> np.ndarray:
    """Exact ``exp(-tau * t) @ psi`` using G^2 = I."""
    a, b = _exp_coefficients(t, tau)
    g = apply_term(PauliTerm(1.0, t.x_mask, t.z_mask), psi, n_sites)
    return a * psi + b * g


class TermExponentials:
    """Product of exact single-term exponentials ``prod_M exp(-tau Phi_M)``.

    Only meaningful for mutually commuting terms (then the product is
    exactly ``exp(-tau * sum Phi_M)``).  All Z-diagonal terms fold into a
    single diagonal factor.
    """

    def __init__(self, op: OperatorSum, tau: float, max_spins: int = DEFAULT_MAX_SPINS):
        _check_size(op.n_sites, max_spins)
        n = self.n_sites = op.n_sites
        self.dtype = np.float64 if op.is_real else np.complex128
        diag = np.ones(1 << n, dtype=self.dtype)
        self.factors: list[tuple[int, float, np.ndarray]] = []
        for t in op.terms:
            a, b = _exp_coefficients(t, tau)
            g = _parity(t.z_mask, n) * (t.phase.real if t.is_real else t.phase)
            if t.x_mask == 0:
                diag = diag * (a + b * g)
            else:
                self.factors.append((t.x_mask, a, b * g))
        self.diag = diag

    def matvec(self, psi: np.ndarray) -> np.ndarray:
        out = _as_columns(self.diag, psi) * psi
        for x, a, bg in self.factors:
            out = a * out + _flip(_as_columns(bg, out) * out, x, self.n_sites)
        return out

    __call__ = matvec


def translate_operator(t: PauliTerm, lat: TorusLattice, v: Sequence[int]) -> PauliTerm:
    letters = t.letters()
    if any(s >= lat.site_count for s in letters):
        raise OperatorError(f"term {t} acts outside lattice of {lat.site_count} sites")
    moved = {translate_site(lat, s, v): p for s, p in letters.items()}
    return PauliTerm.from_ops(moved, t.coeff, t.shifted)


def dense_matrix(op: OperatorSum | PauliTerm, n_sites: int | None = None) -> np.ndarray:
    """Dense matrix assembled from the grouped diagonals (real when possible)."""
    if isinstance(op, PauliTerm):
        op = OperatorSum((op,), n_sites)
    c = CompiledOperator(op, max_spins=op.n_sites)
    M = np.zeros((c.dim, c.dim), dtype=c.dtype)
    cols = np.arange(c.dim)
    for x, d in c.groups:
        M[cols ^ x, cols] += d
    return M
