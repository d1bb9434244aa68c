"""Lowest eigenpairs: thick-restart Lanczos with locking, plus a dense oracle.

The Krylov solver keeps a fully reorthogonalised basis (two Gram-Schmidt
passes per step).  A single Krylov sequence sees only one vector per exactly
degenerate eigenspace, so converged Ritz vectors are locked and the search
restarts from a fresh random vector in their orthogonal complement.  The
solver stops once ``k`` pairs are locked and a further restart finds nothing
below the k-th locked value.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SolverError
from .pauli import DEFAULT_MAX_SPINS, CompiledOperator, OperatorSum, dense_matrix

logger = logging.getLogger(__name__)

DENSE_MAX_SPINS = 12
DEFAULT_SEED = 20240527


@dataclass(frozen=True)
class SolverSettings:
    k: int = 6
    tol: float = 1e-9
    cluster_tol: float = 1e-7
    seed: int = DEFAULT_SEED
    max_spins: int = DEFAULT_MAX_SPINS
    method: str = "auto"  # auto | krylov | dense
    krylov_dim: int = 80
    max_restarts: int = 200
    auto_dense_below: int = 10

    @property
    def floor(self) -> float:
        """Smallest splitting reported as nonzero."""
        return 10 * self.cluster_tol


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residual_norms: np.ndarray
    method: str
    seed: int | None = None
    n_sites: int = 0

    def __len__(self):
        return len(self.eigenvalues)

    def vectors(self, idx) -> np.ndarray:
        if self.eigenvectors is None:
            raise SolverError("spectrum was computed without eigenvectors")
        return self.eigenvectors[:, idx]

    def record(self, **meta) -> dict:
        """Export record for the CLI."""
        return dict(
            meta,
            n_spins=self.n_sites,
            k=len(self.eigenvalues),
            eigenvalues=[float(e) for e in self.eigenvalues],
            residuals=[float(r) for r in self.residual_norms],
            method=self.method,
            seed=self.seed,
        )


@dataclass
class DegeneracyClusters:
    clusters: list[tuple[float, list[int]]]
    cluster_tol: float

    @property
    def sizes(self) -> list[int]:
        return [len(members) for _, members in self.clusters]

    @property
    def ground_multiplicity(self) -> int:
        return self.sizes[0] if self.clusters else 0


def cluster_degeneracies(s: Spectrum | np.ndarray, cluster_tol: float = 1e-7) -> DegeneracyClusters:
    """Greedy chaining: a new cluster starts where the adjacent gap exceeds the tolerance."""
    ev = np.asarray(s.eigenvalues if isinstance(s, Spectrum) else s, dtype=float)
    if ev.size and np.any(np.diff(ev) < -1e-12):
        raise SolverError("spectrum is not sorted")
    groups: list[list[int]] = []
    for i, e in enumerate(ev):
        if groups and e - ev[groups[-1][-1]] <= cluster_tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return DegeneracyClusters([(float(ev[g].mean()), g) for g in groups], cluster_tol)


def _as_compiled(H, settings: SolverSettings) -> CompiledOperator:
    if isinstance(H, CompiledOperator):
        return H
    if isinstance(H, OperatorSum):
        return H.compile(settings.max_spins)
    raise TypeError(f"expected OperatorSum or CompiledOperator, got {type(H).__name__}")


def _residuals(A: CompiledOperator, vals: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    R = A.matvec(vecs) - vecs * vals[None, :]
    return np.linalg.norm(R, axis=0)


def dense_spectrum(H: OperatorSum, with_vectors: bool = True,
                   max_spins: int = DENSE_MAX_SPINS) -> Spectrum:
    if H.n_sites > max_spins:
        raise SolverError(f"dense diagonalisation capped at {max_spins} spins, got {H.n_sites}")
    M = dense_matrix(H)
    if with_vectors:
        vals, vecs = scipy.linalg.eigh(M)
        res = np.linalg.norm(M @ vecs - vecs * vals[None, :], axis=0)
    else:
        vals, vecs = scipy.linalg.eigh(M, eigvals_only=True), None
        res = np.zeros_like(vals)
    return Spectrum(vals, vecs, res, "dense", None, H.n_sites)


def _inner(B: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Rows of ``B`` against ``w``: ``B^* w`` without copying ``B``."""
    if np.iscomplexobj(B):
        return (B @ w.conj()).conj()
    return B @ w


def _project_out(X: np.ndarray | None, w: np.ndarray) -> np.ndarray:
    """Remove the span of the rows of ``X`` (two passes)."""
    if X is None or X.shape[0] == 0:
        return w
    w = w - _inner(X, w) @ X
    return w - _inner(X, w) @ X


def _krylov_run(A: CompiledOperator, X: np.ndarray | None, v0: np.ndarray, want: int,
                tol: float, m: int, max_restarts: int):
    """One thick-restart Lanczos run in the complement of the rows of ``X``.

    Returns ascending Ritz values, Ritz vectors (as rows) and residual
    estimates for the lowest ``want`` (or fewer) pairs once they converge.
    """
    dim = A.dim
    m = min(m, dim - (0 if X is None else X.shape[0]))
    dtype = np.result_type(A.dtype, v0.dtype)
    V = np.zeros((m + 1, dim), dtype=dtype)
    T = np.zeros((m + 1, m + 1), dtype=dtype)
    v = _project_out(X, v0)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise SolverError("start vector lies in the locked subspace")
    V[0] = v / nv
    start = 0
    for restart in range(max_restarts):
        size, beta, broke = m, 0.0, False
        for j in range(start, m):
            w = _project_out(X, A.matvec(V[j]))
            Vj = V[: j + 1]
            h = _inner(Vj, w)
            w -= h @ Vj
            h2 = _inner(Vj, w)
            w -= h2 @ Vj
            h += h2
            w = _project_out(X, w)
            T[: j + 1, j] = h
            T[j, : j + 1] = h.conj()
            beta = np.linalg.norm(w)
            scale = max(1.0, np.abs(T[: j + 1, : j + 1]).max())
            if beta <= 1e-13 * scale:
                size, beta, broke = j + 1, 0.0, True
                break
            V[j + 1] = w / beta
            T[j + 1, j] = T[j, j + 1] = beta
        Tm = T[:size, :size]
        theta, S = np.linalg.eigh(0.5 * (Tm + Tm.conj().T))
        resid = np.abs(beta * S[size - 1, :])
        nconv = 0
        while nconv < len(theta) and resid[nconv] <= tol:
            nconv += 1
        if broke or nconv >= want or size < m:
            r = max(1, min(len(theta), max(want, nconv)))
            Y = S[:, :r].T @ V[:size]
            return theta[:r], Y, resid[:r], restart
        p = min(size - 1, max(want + 2, size // 2))
        Y = S[:, :p].T @ V[:size]
        vnext = V[size].copy()
        V[:p] = Y
        V[p] = vnext
        V[p + 1:] = 0
        T[:] = 0
        T[np.arange(p), np.arange(p)] = theta[:p]
        T[:p, p] = beta * S[size - 1, :p]
        T[p, :p] = T[:p, p].conj()
        start = p
    raise SolverError(
        f"Lanczos did not converge in {max_restarts} restarts; "
        f"best residuals {resid[:want].tolist()}"
    )


def lowest_eigenpairs(H: OperatorSum | CompiledOperator, k: int,
                      settings: SolverSettings | None = None) -> Spectrum:
    settings = settings or SolverSettings()
    A = _as_compiled(H, settings)
    if k < 1 or k > A.dim:
        raise SolverError(f"k={k} out of range for dimension {A.dim}")
    rng = np.random.default_rng(settings.seed)
    inner_tol = settings.tol / 10
    locked_vecs: list[np.ndarray] = []
    locked_vals: list[float] = []
    max_runs = 4 * k + 20
    for run in range(max_runs):
        X = np.stack(locked_vecs) if locked_vecs else None
        if X is not None and X.shape[0] >= A.dim:
            break
        want = max(1, k - len(locked_vals))
        v0 = rng.standard_normal(A.dim)
        if A.dtype == np.complex128:
            v0 = v0 + 1j * rng.standard_normal(A.dim)
        theta, Y, resid, _ = _krylov_run(A, X, v0, want, inner_tol,
                                         settings.krylov_dim, settings.max_restarts)
        kth = sorted(locked_vals)[k - 1] if len(locked_vals) >= k else np.inf
        if len(locked_vals) >= k and theta[0] >= kth - settings.tol:
            break
        added = 0
        for i in range(len(theta)):
            if resid[i] > inner_tol or added >= want or theta[i] >= kth:
                break
            y = _project_out(X if not added else np.stack(locked_vecs), Y[i])
            ny = np.linalg.norm(y)
            if ny < 0.5:
                break
            locked_vecs.append(y / ny)
            locked_vals.append(float(theta[i]))
            added += 1
        if added == 0:
            raise SolverError(f"no Ritz pair converged; residuals {resid.tolist()}")
        logger.debug("run %d locked %d pairs (%d total)", run, added, len(locked_vals))
    else:
        raise SolverError(f"locking did not settle after {max_runs} restarts")

    # Rayleigh-Ritz over the locked subspace removes residual mixing.
    X = np.stack(locked_vecs, axis=1)
    AX = A.matvec(X)
    G = X.conj().T @ AX
    vals, S = np.linalg.eigh(0.5 * (G + G.conj().T))
    vals, S = vals[:k], S[:, :k]
    vecs = X @ S
    res = np.linalg.norm(AX @ S - vecs * vals[None, :], axis=0)
    if np.any(res > settings.tol):
        raise SolverError(f"residuals above tolerance {settings.tol}: {res.tolist()}")
    return Spectrum(vals, vecs, res, "krylov", settings.seed, A.n_sites)


def low_spectrum(H: OperatorSum, k: int, settings: SolverSettings | None = None,
                 with_vectors: bool = True) -> Spectrum:
    """Lowest ``k`` pairs by the configured method (``auto`` picks dense for small systems)."""
    settings = settings or SolverSettings()
    method = settings.method
    if method == "auto":
        method = "dense" if H.n_sites <= settings.auto_dense_below else "krylov"
    if method == "dense":
        full = dense_spectrum(H, with_vectors)
        k = min(k, len(full.eigenvalues))
        vecs = full.eigenvectors[:, :k] if full.eigenvectors is not None else None
        return Spectrum(full.eigenvalues[:k], vecs, full.residual_norms[:k], "dense", None,
                        H.n_sites)
    if method == "krylov":
        return lowest_eigenpairs(H, k, settings)
    raise SolverError(f"unknown solver method {method!r}")
