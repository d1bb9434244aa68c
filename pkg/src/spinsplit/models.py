"""Model builders and structural verifiers.

Classical Hamiltonians are sums of mutually commuting Pauli strings stored
in shifted form ``(I - G)``, so their smallest eigenvalue is zero.  A
perturbation is the sum of all lattice translates of a seed operator.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import OperatorError, VerificationError
from .lattice import TorusLattice, build_bond_lattice, build_torus, cells
from .pauli import (
    OperatorSum,
    PauliTerm,
    apply_sum,
    commutes,
    translate_operator,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_SUPPORT = 4


@dataclass(frozen=True)
class PerturbationSpec:
    """``P = sum_l gamma(l) P_0`` over every unit-cell translation ``l``."""

    seed: OperatorSum
    translates: tuple[OperatorSum, ...]
    label: str = ""

    @property
    def operator(self) -> OperatorSum:
        terms = tuple(t for tr in self.translates for t in tr.terms)
        return OperatorSum(terms, self.seed.n_sites)

    @property
    def off_diagonal(self) -> bool:
        """True when every term flips at least one spin in the Z basis."""
        return all(not t.is_diagonal for tr in self.translates for t in tr.terms)


@dataclass(frozen=True)
class HamiltonianSpec:
    name: str
    lattice: TorusLattice
    classical_terms: OperatorSum
    perturbation: PerturbationSpec | None = None
    epsilon: float = 0.0
    max_support: int = DEFAULT_MAX_SUPPORT
    expected_degeneracy: int | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise OperatorError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def n_sites(self) -> int:
        return self.classical_terms.n_sites

    def with_perturbation(self, pert: PerturbationSpec, epsilon: float | None = None):
        return replace(self, perturbation=pert,
                       epsilon=self.epsilon if epsilon is None else float(epsilon))

    def with_epsilon(self, epsilon: float) -> "HamiltonianSpec":
        return replace(self, epsilon=float(epsilon))

    @property
    def perturbation_operator(self) -> OperatorSum:
        if self.perturbation is None:
            return OperatorSum((), self.n_sites)
        return self.perturbation.operator

    def operator(self) -> OperatorSum:
        """H(eps) = H + eps P as one operator sum."""
        if self.perturbation is None or self.epsilon == 0:
            return self.classical_terms
        return self.classical_terms + self.perturbation_operator.scaled(self.epsilon)


# -- builders ---------------------------------------------------------------

def build_toric_code(L: int) -> HamiltonianSpec:
    """Toric code on an L x L torus: sum (I - A_s) + sum (I - B_p)."""
    lat = build_bond_lattice(L)
    terms = [PauliTerm.from_ops({b: "X" for b in s}, 1.0, shifted=True)
             for s in cells(lat, "star")]
    terms += [PauliTerm.from_ops({b: "Z" for b in p}, 1.0, shifted=True)
              for p in cells(lat, "plaquette")]
    return HamiltonianSpec(f"toric_L{L}", lat, OperatorSum(tuple(terms), lat.site_count),
                           expected_degeneracy=4)


def build_ising(lat: TorusLattice) -> HamiltonianSpec:
    """Ferromagnetic Ising model sum over bonds of (I - Z_i Z_j)."""
    if lat.nu not in (1, 2) or lat.sites_per_cell != 1:
        raise OperatorError(f"Ising builder supports nu in {{1, 2}} site lattices, got nu={lat.nu}")
    terms = tuple(PauliTerm.from_ops({i: "Z", j: "Z"}, 1.0, shifted=True)
                  for i, j in cells(lat, "bond"))
    name = "ising_" + "x".join(map(str, lat.extents))
    return HamiltonianSpec(name, lat, OperatorSum(terms, lat.site_count), expected_degeneracy=2)


def build_custom(terms: Sequence[str], n_sites: int, max_support: int = DEFAULT_MAX_SUPPORT,
                 name: str = "custom") -> HamiltonianSpec:
    """User-supplied term list on a ring of ``n_sites`` spins."""
    if n_sites >= 2:
        lat = build_torus(1, [n_sites])
    else:
        lat = TorusLattice(1, (n_sites,), 1, {"bond": ()})
    return HamiltonianSpec(name, lat, OperatorSum.parse(terms, n_sites), max_support=max_support)


def build_field_perturbation(lat: TorusLattice, axis: str, seed_support: Sequence[int],
                             combine: str = "product", coeff: float = 1.0) -> PerturbationSpec:
    """Translates of a seed over every unit cell.

    ``combine="product"`` makes the seed a single string (e.g. X0 X1);
    ``combine="sum"`` makes it a sum of single-site fields, which is how the
    uniform field on both bond sublattices is expressed.
    """
    axis = axis.upper()
    if axis not in ("X", "Y", "Z"):
        raise OperatorError(f"axis must be X, Y or Z, got {axis!r}")
    support = sorted(set(int(s) for s in seed_support))
    if not support:
        raise OperatorError("perturbation seed support is empty")
    if 0 not in support:
        raise OperatorError("perturbation seed support must contain the origin (site 0)")
    if support[-1] >= lat.site_count:
        raise OperatorError(f"seed support {support} outside lattice")
    if combine == "product":
        seed_terms = (PauliTerm.from_ops({s: axis for s in support}, coeff),)
    elif combine == "sum":
        seed_terms = tuple(PauliTerm.from_ops({s: axis}, coeff) for s in support)
    else:
        raise OperatorError(f"combine must be 'product' or 'sum', got {combine!r}")
    n = lat.site_count
    seed = OperatorSum(seed_terms, n)
    translates = tuple(
        OperatorSum(tuple(translate_operator(t, lat, v) for t in seed_terms), n)
        for v in lat.translations()
    )
    label = f"{axis}:{combine}:{','.join(map(str, support))}"
    return PerturbationSpec(seed, translates, label)


def uniform_field(lat: TorusLattice, axis: str = "X", coeff: float = 1.0) -> PerturbationSpec:
    """Single-site field on every spin (all sublattices of the unit cell)."""
    return build_field_perturbation(lat, axis, range(lat.sites_per_cell), "sum", coeff)


# -- verifiers --------------------------------------------------------------

@dataclass
class ClassicalReport:
    n_terms: int
    offending_pairs: list[tuple[int, int]]
    max_support: int
    support_limit: int

    @property
    def commuting(self) -> bool:
        return not self.offending_pairs

    @property
    def support_ok(self) -> bool:
        return self.max_support <= self.support_limit

    @property
    def ok(self) -> bool:
        return self.commuting and self.support_ok

    def commutation_table(self) -> np.ndarray:
        table = np.ones((self.n_terms, self.n_terms), dtype=bool)
        for i, j in self.offending_pairs:
            table[i, j] = table[j, i] = False
        return table


def verify_classical(H: HamiltonianSpec) -> ClassicalReport:
    terms = H.classical_terms.terms
    bad = [(i, j) for i, j in itertools.combinations(range(len(terms)), 2)
           if not commutes(terms[i], terms[j])]
    return ClassicalReport(len(terms), bad, H.classical_terms.max_support, H.max_support)


def require_classical(H: HamiltonianSpec) -> ClassicalReport:
    rep = verify_classical(H)
    if not rep.ok:
        terms = H.classical_terms.terms
        detail = "; ".join(f"[{terms[i]}] vs [{terms[j]}]" for i, j in rep.offending_pairs[:5])
        raise VerificationError(
            f"classical part is not commuting/bounded (max support {rep.max_support} "
            f"vs C={rep.support_limit}): {detail}"
        )
    return rep


def spectral_gap(H: HamiltonianSpec, solver=None) -> float:
    """Smallest eigenvalue above the ground cluster of the unperturbed model.

    ``solver`` is an :class:`~spinsplit.eigensolve.SolverSettings`; the
    cluster tolerance separates zero from nonzero.
    """
    from .eigensolve import SolverSettings, low_spectrum

    solver = solver or SolverSettings()
    if not H.classical_terms.terms:
        raise VerificationError("Hamiltonian has no terms: no nonzero eigenvalue")
    op = H.classical_terms
    k = min(max(8, (H.expected_degeneracy or 2) + 2), op.dim)
    while True:
        spec = low_spectrum(op, k, solver)
        above = spec.eigenvalues[spec.eigenvalues > spec.eigenvalues[0] + solver.cluster_tol]
        if above.size:
            return float(above[0] - spec.eigenvalues[0])
        if k >= op.dim:
            raise VerificationError("spectrum is flat: no nonzero eigenvalue")
        k = min(2 * k, op.dim)


# -- Peierls ----------------------------------------------------------------

@dataclass
class PeierlsReport:
    region_size_limit: int
    samples: list[tuple[frozenset, float, int]]
    rho: float

    @property
    def n_regions(self) -> int:
        return len(self.samples)

    def worst(self) -> tuple[frozenset, float, int]:
        return min(self.samples, key=lambda s: s[1] / s[2])


def _neighbours(lat: TorusLattice) -> list[set[int]]:
    nb = [set() for _ in range(lat.site_count)]
    for i, j in cells(lat, "bond"):
        nb[i].add(j)
        nb[j].add(i)
    return nb


def connected_regions(lat: TorusLattice, max_size: int) -> list[frozenset]:
    """All connected site-sets of size 1..max_size (breadth-first growth)."""
    nb = _neighbours(lat)
    level = {frozenset([s]) for s in range(lat.site_count)}
    out = sorted(level, key=sorted)
    for _ in range(max_size - 1):
        nxt = set()
        for region in level:
            frontier = set().union(*(nb[s] for s in region)) - region
            for s in frontier:
                nxt.add(region | {s})
        level = nxt
        out.extend(sorted(level, key=sorted))
    return out


def _classical_energy(terms: Sequence[PauliTerm], config: int) -> float:
    e = 0.0
    for t in terms:
        g = -1.0 if (t.z_mask & config).bit_count() % 2 else 1.0
        e += t.coeff * (1.0 - g) if t.shifted else t.coeff * g
    return e


def check_peierls(H: HamiltonianSpec, ground_config: int = 0, max_region: int = 4) -> PeierlsReport:
    """Energy per cut bond of every connected deviation from ``ground_config``.

    Boundary measure is the number of lattice bonds with exactly one end in
    the flipped region.  Regions with zero boundary (the whole torus) are
    skipped.
    """
    terms = H.classical_terms.terms
    if not H.classical_terms.is_diagonal:
        raise VerificationError("Peierls enumeration needs a Z-diagonal Hamiltonian")
    if H.lattice.sites_per_cell != 1:
        raise VerificationError("Peierls enumeration needs a site lattice")
    if max_region < 1:
        raise OperatorError("max_region must be >= 1")
    e0 = _classical_energy(terms, ground_config)
    bonds = cells(H.lattice, "bond")
    samples = []
    for region in connected_regions(H.lattice, max_region):
        boundary = sum((i in region) != (j in region) for i, j in bonds)
        if boundary == 0:
            continue
        flip = sum(1 << s for s in region)
        samples.append((region, _classical_energy(terms, ground_config ^ flip) - e0, boundary))
    if not samples:
        raise VerificationError("no region with nonzero boundary")
    rho = min(e / b for _, e, b in samples)
    return PeierlsReport(max_region, samples, rho)


# -- symmetry ---------------------------------------------------------------

@dataclass
class SymmetryReport:
    generators: list[PauliTerm]
    commutes_with_H: bool
    transitive_on_ground_basis: bool
    offending: list[tuple[int, str]] = field(default_factory=list)
    orbit: list[int] = field(default_factory=list)
    commutator_norms: list[float] = field(default_factory=list)


def _group_elements(generators: Sequence[PauliTerm]) -> list[PauliTerm]:
    """All products of generator subsets (Pauli strings commute up to sign)."""
    out = {}
    for r in range(len(generators) + 1):
        for combo in itertools.combinations(generators, r):
            x = z = 0
            for g in combo:
                x ^= g.x_mask
                z ^= g.z_mask
            out.setdefault((x, z), PauliTerm(1.0, x, z))
    return list(out.values())


def check_symmetry(H: HamiltonianSpec, generators: Sequence[PauliTerm],
                   ground_basis: Sequence[np.ndarray] | np.ndarray,
                   seed: int = 0, tol: float = 1e-10) -> SymmetryReport:
    """Check that Pauli-string generators commute with H(eps) and act
    transitively (up to phase) on the given ground basis vectors."""
    for g in generators:
        if g.shifted or abs(abs(g.coeff) - 1.0) > 1e-12:
            raise OperatorError(f"generator {g} is not unitary")
    op = H.operator()
    offending = []
    for gi, g in enumerate(generators):
        for t in op.terms:
            if not commutes(g, t):
                offending.append((gi, str(t)))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.dim) + 1j * rng.standard_normal(op.dim)
    v /= np.linalg.norm(v)
    compiled = op.compile(max_spins=op.n_sites)
    norms = []
    for g in generators:
        gop = OperatorSum((g,), op.n_sites)
        c = apply_sum(gop, compiled(v)) - compiled(apply_sum(gop, v))
        norms.append(float(np.linalg.norm(c)))
    commuting = not offending and all(n <= tol for n in norms)

    basis = [np.asarray(b) for b in (ground_basis.T if isinstance(ground_basis, np.ndarray)
                                     and ground_basis.ndim == 2 else ground_basis)]
    orbit = [0] if basis else []
    if basis:
        for elem in _group_elements(generators):
            w = apply_sum(OperatorSum((elem,), op.n_sites), basis[0])
            for j, b in enumerate(basis):
                if j not in orbit and abs(abs(np.vdot(b, w)) - 1.0) < 1e-8:
                    orbit.append(j)
    transitive = bool(basis) and len(orbit) == len(basis)
    return SymmetryReport(list(generators), commuting, transitive, offending, sorted(orbit), norms)


def global_flip(n_sites: int, axis: str = "X") -> PauliTerm:
    return PauliTerm.from_ops({i: axis for i in range(n_sites)})
