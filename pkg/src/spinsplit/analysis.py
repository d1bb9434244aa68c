"""Ground-state splitting estimators, size/epsilon sweeps and scaling fits.

Three splitting measures are recorded side by side:

* ``splitting_diagonal``: max over an unperturbed ground basis of
  ``<v|H(eps)|v>`` (zero for a purely off-diagonal perturbation);
* ``splitting_first_order``: eps times the spread of the perturbation
  projected onto the unperturbed ground space;
* ``splitting_spectral``: spread of the lowest ``m`` perturbed eigenvalues,
  the quantity used for scaling fits.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .eigensolve import SolverSettings, cluster_degeneracies, low_spectrum
from .errors import InsufficientDataError, OperatorError, SolverError, SpinSplitError
from .models import HamiltonianSpec
from .pauli import OperatorSum, PauliTerm, apply_sum, commutes

logger = logging.getLogger(__name__)

GRAM_TOL = 1e-8

CSV_COLUMNS = (
    "model", "nu", "extents", "n_spins", "epsilon", "m",
    "splitting_spectral", "splitting_diagonal", "splitting_first_order",
    "gap_to_next", "method", "floor_flag",
)


# -- ground space -----------------------------------------------------------

def ground_basis(H: HamiltonianSpec, settings: SolverSettings | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of the unperturbed ground cluster.

    Z-diagonal models give configuration vectors; otherwise the cluster
    eigenvectors from the solver are used.
    """
    settings = settings or SolverSettings()
    op = H.classical_terms
    if op.is_diagonal:
        diag = op.compile(settings.max_spins).diagonal().real
        idx = np.flatnonzero(diag <= diag.min() + settings.cluster_tol)
        B = np.zeros((op.dim, idx.size))
        B[idx, np.arange(idx.size)] = 1.0
        return B
    k = min(op.dim, (H.expected_degeneracy or 2) + 2)
    while True:
        spec = low_spectrum(op, k, settings)
        m = cluster_degeneracies(spec, settings.cluster_tol).ground_multiplicity
        if m < k or k == op.dim:
            return spec.vectors(slice(0, m))
        k = min(op.dim, 2 * k)


def ground_configurations(B: np.ndarray) -> list[int]:
    """Basis indices of configuration vectors (one nonzero entry each)."""
    out = []
    for col in np.asarray(B).T:
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size != 1:
            raise OperatorError("ground basis vector is not a single configuration")
        out.append(int(nz[0]))
    return out


def _check_orthonormal(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B)
    if B.ndim == 1:
        B = B[:, None]
    G = B.conj().T @ B
    dev = np.abs(G - np.eye(G.shape[0])).max() if G.size else 0.0
    if dev > GRAM_TOL:
        raise OperatorError(f"ground basis not orthonormal (Gram deviation {dev:.2e})")
    return B


def diagonal_splitting(H_eps: HamiltonianSpec, basis: np.ndarray) -> float:
    """max_v <v|H(eps)|v> over the supplied ground basis."""
    B = _check_orthonormal(basis)
    A = H_eps.operator().compile(max(H_eps.n_sites, 20))
    HB = A.matvec(B)
    vals = np.real(np.einsum("ij,ij->j", B.conj(), HB))
    return float(vals.max())


def projected_matrix(P: OperatorSum, basis: np.ndarray) -> np.ndarray:
    B = _check_orthonormal(basis)
    if not P.terms:
        return np.zeros((B.shape[1], B.shape[1]))
    PB = apply_sum(P, B)
    M = B.conj().T @ PB
    return 0.5 * (M + M.conj().T)


def first_order_splitting(P: OperatorSum, basis: np.ndarray, eps: float) -> float:
    """eps * (max - min) eigenvalue of P restricted to the ground space."""
    w = np.linalg.eigvalsh(projected_matrix(P, basis))
    return float(eps * (w.max() - w.min()))


# -- spectral splitting -----------------------------------------------------

@dataclass
class SplittingRecord:
    model: str
    nu: int
    extents: tuple[int, ...]
    n_spins: int
    epsilon: float
    m: int
    splitting_spectral: float
    splitting_diagonal: float
    splitting_first_order: float
    gap_to_next: float
    method: str
    floor_flag: bool = False
    dissolved: bool = False
    perturbation_bound: float = math.nan

    @property
    def lattice_size(self) -> int:
        return self.n_spins

    @property
    def key(self) -> tuple:
        return (self.model, tuple(self.extents), float(self.epsilon))

    @property
    def weyl_ok(self) -> bool:
        if math.isnan(self.perturbation_bound):
            return True
        return self.splitting_spectral <= 2 * self.epsilon * self.perturbation_bound + 1e-9

    def row(self) -> list[str]:
        return [
            self.model, str(self.nu), "x".join(map(str, self.extents)), str(self.n_spins),
            repr(float(self.epsilon)), str(self.m),
            repr(float(self.splitting_spectral)), repr(float(self.splitting_diagonal)),
            repr(float(self.splitting_first_order)), repr(float(self.gap_to_next)),
            self.method, str(int(self.floor_flag)),
        ]

    @classmethod
    def from_row(cls, row: dict) -> "SplittingRecord":
        return cls(
            model=row["model"], nu=int(row["nu"]),
            extents=tuple(int(e) for e in row["extents"].split("x")),
            n_spins=int(row["n_spins"]), epsilon=float(row["epsilon"]), m=int(row["m"]),
            splitting_spectral=float(row["splitting_spectral"]),
            splitting_diagonal=float(row["splitting_diagonal"]),
            splitting_first_order=float(row["splitting_first_order"]),
            gap_to_next=float(row["gap_to_next"]), method=row["method"],
            floor_flag=_parse_flag(row["floor_flag"]),
        )


def _parse_flag(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no", ""):
        return False
    raise ValueError(f"bad flag {text!r}")


def spectral_splitting(H_eps: HamiltonianSpec, m: int, settings: SolverSettings | None = None,
                       basis: np.ndarray | None = None) -> SplittingRecord:
    """All three splitting measures for one (model, size, eps) cell."""
    settings = settings or SolverSettings()
    if m < 1:
        raise OperatorError("m must be >= 1")
    op = H_eps.operator()
    spec = low_spectrum(op, min(m + 1, op.dim), settings, with_vectors=False)
    ev = spec.eigenvalues
    if len(ev) < m + 1:
        raise SolverError(f"need {m + 1} eigenvalues, solver returned {len(ev)}")
    split = float(ev[m - 1] - ev[0])
    gap = float(ev[m] - ev[m - 1])
    if basis is None:
        basis = ground_basis(H_eps.with_epsilon(0.0), settings)
    P = H_eps.perturbation_operator
    lat = H_eps.lattice
    rec = SplittingRecord(
        model=H_eps.name, nu=lat.nu, extents=lat.extents, n_spins=H_eps.n_sites,
        epsilon=H_eps.epsilon, m=m,
        splitting_spectral=split,
        splitting_diagonal=diagonal_splitting(H_eps, basis),
        splitting_first_order=first_order_splitting(P, basis, H_eps.epsilon),
        gap_to_next=gap, method=spec.method,
        floor_flag=split < settings.floor,
        dissolved=gap <= settings.cluster_tol,
        perturbation_bound=P.norm_bound,
    )
    if rec.dissolved:
        logger.warning("%s eps=%g: degeneracy dissolved (gap_to_next=%.3g)",
                       H_eps.name, H_eps.epsilon, gap)
    return rec


# -- sweeps -----------------------------------------------------------------

@dataclass
class SplittingTable:
    records: list[SplittingRecord] = field(default_factory=list)
    failures: list[tuple[tuple, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def at_epsilon(self, eps: float, tol: float = 1e-12) -> "SplittingTable":
        recs = [r for r in self.records if abs(r.epsilon - eps) <= tol]
        return SplittingTable(sorted(recs, key=lambda r: r.n_spins))

    def at_size(self, extents: Sequence[int]) -> "SplittingTable":
        recs = [r for r in self.records if tuple(r.extents) == tuple(extents)]
        return SplittingTable(sorted(recs, key=lambda r: r.epsilon))

    def write_csv(self, path: str | Path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records:
                w.writerow(r.row())

    @classmethod
    def read_csv(cls, path: str | Path) -> "SplittingTable":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        missing = set(CSV_COLUMNS) - set(rows[0] if rows else CSV_COLUMNS)
        if missing:
            raise InsufficientDataError(f"table {path} lacks columns {sorted(missing)}")
        out = []
        for row in rows:
            try:
                out.append(SplittingRecord.from_row(row))
            except (KeyError, ValueError, TypeError):
                logger.warning("skipping malformed row %r", row)
        return cls(out)


def sweep_splitting(builder: Callable[[Sequence[int]], HamiltonianSpec],
                    sizes: Sequence[Sequence[int]], epsilons: Sequence[float], m: int,
                    settings: SolverSettings | None = None, csv_path: str | Path | None = None,
                    workers: int = 1,
                    on_record: Callable[[SplittingRecord], None] | None = None) -> SplittingTable:
    """One record per (size, eps) in size-major order.

    ``builder(extents)`` must return a model carrying its perturbation.  With
    ``csv_path`` set, rows already present are reused and each new row is
    appended as soon as it is computed; the file is rewritten in canonical
    order at the end.
    """
    settings = settings or SolverSettings()
    done: dict[tuple, SplittingRecord] = {}
    if csv_path is not None and Path(csv_path).exists():
        for r in SplittingTable.read_csv(csv_path):
            done[r.key] = r
    models = {tuple(s): builder(s) for s in sizes}

    def key(cell):
        H = models[cell[0]]
        return (H.name, tuple(H.lattice.extents), cell[1])

    cells = [(tuple(s), float(e)) for s in sizes for e in epsilons]
    todo = [c for c in cells if key(c) not in done]
    if csv_path is not None and not Path(csv_path).exists():
        SplittingTable().write_csv(csv_path)

    bases: dict[tuple, np.ndarray] = {}
    failures = []
    for size in dict.fromkeys(s for s, _ in todo):
        try:
            bases[size] = ground_basis(models[size].with_epsilon(0.0), settings)
        except SpinSplitError as exc:
            failures.append(((size, None), str(exc)))
            logger.error("ground basis failed for %s: %s", size, exc)

    def job(cell):
        size, eps = cell
        return spectral_splitting(models[size].with_epsilon(eps), m, settings, bases[size])

    runnable = [c for c in todo if c[0] in bases]
    failures += [(c, "ground basis unavailable") for c in todo if c[0] not in bases]

    def collect(cell, fut_result):
        try:
            rec = fut_result()
        except SpinSplitError as exc:
            failures.append((cell, str(exc)))
            logger.error("cell %s failed: %s", cell, exc)
            return
        done[rec.key] = rec
        if csv_path is not None:
            with Path(csv_path).open("a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(rec.row())
        if on_record:
            on_record(rec)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [(c, pool.submit(job, c)) for c in runnable]
            for c, f in futs:
                collect(c, f.result if f.exception() is None else _raiser(f.exception()))
    else:
        for c in runnable:
            collect(c, lambda c=c: job(c))

    records = [done[key(c)] for c in cells if key(c) in done]
    table = SplittingTable(records, failures)
    if csv_path is not None:
        table.write_csv(csv_path)
    return table


def _raiser(exc):
    def f():
        raise exc
    return f


# -- scaling fits -----------------------------------------------------------

SCALING_MODELS = ("exp_volume", "exp_sqrt_volume", "inverse_volume")


@dataclass
class FitCandidate:
    model: str
    c: float
    prefactor: float
    rmse: float

    def predict(self, size):
        size = np.asarray(size, dtype=float)
        if self.model == "exp_volume":
            return self.prefactor * np.exp(-self.c * size)
        if self.model == "exp_sqrt_volume":
            return self.prefactor * np.exp(-self.c * np.sqrt(size))
        return self.c / size


@dataclass
class ScalingFit:
    model: str
    c: float
    rmse: float
    points_used: int
    candidates: dict[str, FitCandidate]
    free_exponent: float
    sizes: list[float] = field(default_factory=list)
    splittings: list[float] = field(default_factory=list)

    @property
    def selected(self) -> FitCandidate:
        return self.candidates[self.model]

    def predict(self, size):
        return self.selected.predict(size)

    def n0(self, delta: float) -> int:
        """Smallest integer size whose predicted splitting is below ``delta``."""
        if delta <= 0:
            raise OperatorError("delta must be positive")
        cand = self.selected
        if cand.model == "exp_volume":
            x = (math.log(cand.prefactor) - math.log(delta)) / cand.c
        elif cand.model == "exp_sqrt_volume":
            x = ((math.log(cand.prefactor) - math.log(delta)) / cand.c) ** 2
        else:
            x = cand.c / delta
        n = max(1, math.ceil(x))
        while cand.predict(n) >= delta:
            n += 1
        while n > 1 and cand.predict(n - 1) < delta:
            n -= 1
        return n

    def report(self) -> dict:
        return {
            "model": self.model, "c": self.c, "rmse": self.rmse,
            "points_used": self.points_used, "free_exponent": self.free_exponent,
            "candidates": {k: asdict(v) for k, v in self.candidates.items()},
            "sizes": self.sizes, "splittings": self.splittings,
        }


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rmse = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), float(coef[1]), rmse


def fit_scaling(data: SplittingTable | tuple[Sequence[float], Sequence[float]],
                floor: float = 0.0) -> ScalingFit:
    """Fit ``exp(-c N)``, ``exp(-c sqrt N)`` and ``c / N`` in log coordinates.

    ``c / N`` keeps the exponent pinned at -1; a free power-law exponent is
    reported alongside but never selected.
    """
    if isinstance(data, SplittingTable):
        pts = [(r.lattice_size, r.splitting_spectral) for r in data
               if not r.floor_flag and r.splitting_spectral > floor]
    else:
        pts = [(float(n), float(d)) for n, d in zip(*data) if d > floor]
    pts.sort()
    if len(pts) < 3:
        raise InsufficientDataError(f"need >= 3 sizes above the measurement floor, got {len(pts)}")
    N = np.array([p[0] for p in pts], dtype=float)
    y = np.log(np.array([p[1] for p in pts], dtype=float))
    cands = {}
    a, b, rmse = _linfit(N, y)
    cands["exp_volume"] = FitCandidate("exp_volume", -b, math.exp(a), rmse)
    a, b, rmse = _linfit(np.sqrt(N), y)
    cands["exp_sqrt_volume"] = FitCandidate("exp_sqrt_volume", -b, math.exp(a), rmse)
    logc = float(np.mean(y + np.log(N)))
    rmse = float(np.sqrt(np.mean((logc - np.log(N) - y) ** 2)))
    cands["inverse_volume"] = FitCandidate("inverse_volume", math.exp(logc), 1.0, rmse)
    _, slope, _ = _linfit(np.log(N), y)
    best = min(SCALING_MODELS, key=lambda k: (cands[k].rmse, SCALING_MODELS.index(k)))
    return ScalingFit(best, cands[best].c, cands[best].rmse, len(pts), cands, slope,
                      N.tolist(), np.exp(y).tolist())


# -- threshold --------------------------------------------------------------

@dataclass
class ThresholdEstimate:
    epsilon: float
    epsilons: list[float]
    ratios: list[float]
    separation: float
    diagnostic: str = ""


def estimate_threshold(table: SplittingTable | Iterable[SplittingRecord],
                       separation: float = 10.0) -> ThresholdEstimate:
    """Largest eps where the ground cluster stays separated: gap_to_next > separation * splitting."""
    recs = sorted(table, key=lambda r: r.epsilon)
    eps = [r.epsilon for r in recs]
    ratios = [r.gap_to_next / r.splitting_spectral if r.splitting_spectral > 0 else math.inf
              for r in recs]
    ok = [e for e, q in zip(eps, ratios) if q > separation]
    if not ok:
        return ThresholdEstimate(0.0, eps, ratios, separation,
                                 "ground cluster never separated at this ratio")
    diag = ""
    if ok[-1] == eps[-1]:
        diag = "criterion holds at the largest epsilon in the grid"
    return ThresholdEstimate(ok[-1], eps, ratios, separation, diag)


# -- order observable -------------------------------------------------------

@dataclass
class OrderReport:
    observable: OperatorSum
    locality_ok: bool
    mutual_commute_ok: bool
    mean_values: list[float]
    second_moments: list[float]
    zeta: float
    lattice_size: int
    violations: list[str] = field(default_factory=list)
    mean_tol: float = 1e-8

    @property
    def means_vanish(self) -> bool:
        return all(abs(v) < self.mean_tol for v in self.mean_values)

    @property
    def ok(self) -> bool:
        return self.locality_ok and self.mutual_commute_ok and self.means_vanish and self.zeta > 0

    def report(self) -> dict:
        return {
            "observable": self.observable.lines(),
            "locality_ok": self.locality_ok,
            "mutual_commute_ok": self.mutual_commute_ok,
            "mean_values": self.mean_values,
            "second_moments": self.second_moments,
            "zeta": self.zeta,
            "lattice_size": self.lattice_size,
            "means_vanish": self.means_vanish,
            "violations": self.violations,
        }


def magnetization(n_sites: int, axis: str = "Z") -> OperatorSum:
    return OperatorSum(tuple(PauliTerm.from_ops({i: axis}) for i in range(n_sites)), n_sites)


def check_order_observable(H_eps: HamiltonianSpec, O: OperatorSum, eigenstates: np.ndarray,
                           mean_tol: float = 1e-8) -> OrderReport:
    """Commutation structure of ``O = sum_l O_l`` and its first two moments."""
    if O.n_sites != H_eps.n_sites:
        raise OperatorError("observable and Hamiltonian act on different site counts")
    psi = np.asarray(eigenstates)
    if psi.ndim == 1:
        psi = psi[:, None]
    if psi.shape[0] != O.dim:
        raise OperatorError(f"eigenstates have dimension {psi.shape[0]}, expected {O.dim}")
    violations = []
    mutual = True
    for i, a in enumerate(O.terms):
        for b in O.terms[i + 1:]:
            if not commutes(a, b):
                mutual = False
                violations.append(f"[{a}, {b}] != 0")
    locality = True
    for t in H_eps.operator().terms:
        supp = set(t.support)
        for o in O.terms:
            if supp.isdisjoint(o.support) and not commutes(t, o):
                locality = False
                violations.append(f"[{t}, {o}] != 0 outside support")
    Opsi = apply_sum(O, psi)
    means = np.real(np.einsum("ij,ij->j", psi.conj(), Opsi))
    second = np.real(np.einsum("ij,ij->j", Opsi.conj(), Opsi))
    size = H_eps.n_sites
    zeta = float(second.min() / size**2)
    rep = OrderReport(O, locality, mutual, means.tolist(), second.tolist(), zeta, size,
                      violations, mean_tol)
    if not rep.means_vanish:
        rep.violations.append("eigenstate mean of the order observable is nonzero")
    return rep


def symmetry_resolve(H_eps: HamiltonianSpec, states: np.ndarray,
                     generator: PauliTerm) -> tuple[np.ndarray, np.ndarray]:
    """Re-diagonalise ``H`` inside span(states) jointly with a Pauli symmetry.

    Near-degenerate eigenvectors from a numerical solver are arbitrary
    mixtures within their cluster; this picks the combination that is also
    a symmetry eigenvector.  Returns (energies, states) sorted by energy.
    """
    B = _check_orthonormal(states)
    G = OperatorSum((generator,), H_eps.n_sites)
    Gs = B.conj().T @ apply_sum(G, B)
    gvals, gvecs = np.linalg.eigh(0.5 * (Gs + Gs.conj().T))
    A = H_eps.operator().compile(max(H_eps.n_sites, 20))
    energies, out = [], []
    for sector in (gvals < 0, gvals >= 0):
        if not sector.any():
            continue
        C = B @ gvecs[:, sector]
        Hs = C.conj().T @ A.matvec(C)
        e, v = np.linalg.eigh(0.5 * (Hs + Hs.conj().T))
        energies.extend(e)
        out.append(C @ v)
    order = np.argsort(energies, kind="stable")
    return np.asarray(energies)[order], np.concatenate(out, axis=1)[:, order]
