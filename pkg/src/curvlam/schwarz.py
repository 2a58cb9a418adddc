"""Overlapping Schwarz preconditioners with a GenEO coarse space.

Subdomains are slabs of element columns along one mesh direction, grown by
element adjacency. Each subdomain j has

* ``dofs``: free dofs touched by its overlapped elements,
* ``interior``: those not on the artificial boundary (shared with elements
  outside the subdomain); local problems are posed there with zero
  displacement on the artificial boundary,
* ``weights``: partition-of-unity weights over ``dofs``, zero on the
  artificial boundary and 1/multiplicity elsewhere.

The coarse space is spanned by R_j^T D_j v for the low eigenmodes of the
local generalized problem N_j v = lambda D_j A~_j D_j v, where N_j is the
Neumann (unconstrained on the artificial boundary) stiffness of the
subdomain and A~_j the stiffness of the overlap zone.
"""

import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_elements
from .errors import DegenerateOverlapError, OverDecompositionError
from .solvers import DirectFactor

log = logging.getLogger(__name__)

AXES = {"arc": 0, "width": 1, "thickness": 2}
DENSE_EIGEN_LIMIT = 1500
EIGEN_SEED = 20240917
EIGEN_GUARD = 6               # extra block vectors carried by LOBPCG


@dataclass
class Subdomain:
    owned: np.ndarray          # element ids
    elements: np.ndarray       # owned + overlap element ids
    dofs: np.ndarray           # free global dofs, sorted
    interior: np.ndarray       # bool over dofs
    weights: np.ndarray = None  # PoU over dofs

    @property
    def interior_dofs(self):
        return self.dofs[self.interior]


@dataclass
class Decomposition:
    subdomains: list
    overlap: int
    axis: str
    n_dofs: int
    free: np.ndarray

    @property
    def n_sub(self):
        return len(self.subdomains)

    def __iter__(self):
        return iter(self.subdomains)

    def __getitem__(self, j):
        return self.subdomains[j]


def _incidence(mesh, dofmap):
    """Element x dof-node incidence (CSR, boolean-valued)."""
    conn = dofmap.node_to_dofnode[mesh.elements]
    ne = len(conn)
    rows = np.repeat(np.arange(ne), conn.shape[1])
    E = sp.csr_matrix((np.ones(conn.size), (rows, conn.ravel())), shape=(ne, dofmap.n_dofnodes))
    E.data[:] = 1.0
    return E


def element_columns(mesh, axis="width"):
    return mesh.grid[:, AXES[axis]]


def decompose(sys, n_sub, overlap=2, axis="width"):
    """Slab decomposition of ``sys.mesh`` into ``n_sub`` overlapping pieces.

    Owned slabs differ by at most one element column. Overlap is added one
    element layer at a time through shared (periodically folded) nodes.
    """
    mesh, dofmap = sys.mesh, sys.dofmap
    if n_sub < 1 or overlap < 0:
        raise ValueError("n_sub must be >= 1 and overlap >= 0")
    cols = element_columns(mesh, axis)
    n_cols = mesh.shape[AXES[axis]]
    if n_sub > n_cols:
        raise OverDecompositionError(f"{n_sub} subdomains but only {n_cols} element columns along {axis}")
    E = _incidence(mesh, dofmap)
    ET = E.T.tocsr()
    free = ~sys.constrained
    subs = []
    for chunk in np.array_split(np.arange(n_cols), n_sub):
        owned = np.flatnonzero(np.isin(cols, chunk))
        mask = np.zeros(mesh.n_elements, bool)
        mask[owned] = True
        for _ in range(overlap):
            touched = (ET @ mask.astype(float)) > 0
            mask |= (E @ touched.astype(float)) > 0
        elements = np.flatnonzero(mask)
        inside = (ET @ mask.astype(float)) > 0
        outside = (ET @ (~mask).astype(float)) > 0
        dnodes = np.flatnonzero(inside)
        boundary_node = outside[dnodes]
        dofs = (3 * dnodes[:, None] + np.arange(3)).ravel()
        interior = np.repeat(~boundary_node, 3)
        keep = free[dofs]
        subs.append(Subdomain(owned, elements, dofs[keep], interior[keep]))
    dec = Decomposition(subs, overlap, axis, sys.n_dofs, free)
    partition_of_unity(dec)
    return dec


def partition_of_unity(dec):
    """Multiplicity weights: 1/(number of subdomains holding the dof inside)."""
    count = np.zeros(dec.n_dofs)
    for sd in dec:
        count[sd.interior_dofs] += 1.0
    if np.any(count[dec.free] == 0):
        raise DegenerateOverlapError("some free dofs lie in no subdomain interior; increase the overlap")
    for sd in dec:
        w = np.zeros(len(sd.dofs))
        w[sd.interior] = 1.0 / count[sd.interior_dofs]
        sd.weights = w
    return [sd.weights for sd in dec]


def pou_sum(dec):
    """Global sum of the PoU weights (1 on every free dof)."""
    total = np.zeros(dec.n_dofs)
    for sd in dec:
        np.add.at(total, sd.dofs, sd.weights)
    return total


def overlap_elements(dec):
    """Per subdomain, the overlapped elements that also belong to another subdomain."""
    member = np.zeros(max(sd.elements.max() for sd in dec) + 1, dtype=np.int64)
    for sd in dec:
        member[sd.elements] += 1
    return [sd.elements[member[sd.elements] > 1] for sd in dec]


@dataclass
class LocalMatrices:
    A: sp.csr_matrix          # Dirichlet matrix on interior dofs
    N: sp.csr_matrix = None   # Neumann matrix on all subdomain dofs
    Atilde: sp.csr_matrix = None  # overlap-zone matrix on all subdomain dofs


def _restrict_assembled(sys, elements, dofs):
    Kloc = assemble_elements(sys.mesh, sys.materials, sys.dofmap, elements, sys.quad)
    return Kloc[dofs][:, dofs].tocsr()


def local_matrices(sys, dec, neumann=True, workers=1):
    """Dirichlet matrices A_j and, optionally, Neumann/overlap matrices.

    The Neumann and overlap-zone matrices are re-assembled from element
    stiffnesses, so they need ``sys.mesh`` and ``sys.materials``.
    """
    zones = overlap_elements(dec) if neumann and dec.n_sub > 1 else [None] * dec.n_sub

    def work(j):
        sd = dec[j]
        idx = sd.interior_dofs
        A = sys.K[idx][:, idx].tocsr()
        if not neumann:
            return LocalMatrices(A)
        N = _restrict_assembled(sys, sd.elements, sd.dofs)
        if zones[j] is None or len(zones[j]) == 0:
            At = sp.csr_matrix(N.shape)
        else:
            At = _restrict_assembled(sys, zones[j], sd.dofs)
        return LocalMatrices(A, N, At)

    return _map(work, range(dec.n_sub), workers)


def _map(fn, items, workers):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray
    all_values: np.ndarray = field(default=None, repr=False)


def geneo_eigensolve(N, B, n_ev=10, threshold=None, dense_limit=DENSE_EIGEN_LIMIT, tol=1e-5,
                     maxiter=80):
    """Smallest eigenpairs of N v = lambda B v.

    N may be singular (floating subdomain) and B = D A~ D is only
    semidefinite, but N + B is SPD in practice. Both paths solve the
    reversed problem B v = mu (N + B) v for the largest mu, with
    lambda = 1/mu - 1: dense LAPACK for small problems, otherwise block
    LOBPCG preconditioned by an exact factorization of N + B. A block
    method is needed because a floating subdomain has lambda = 0 with
    multiplicity six, which single-vector Lanczos does not resolve reliably.
    Eigenvalues come back ascending and eigenvectors are (N + B)-orthonormal.
    With ``threshold`` only eigenvalues below it are kept (at most ``n_ev``).
    """
    N = sp.csr_matrix(N)
    B = sp.csr_matrix(B)
    n = N.shape[0]
    if B.nnz == 0 or abs(B).max() == 0:
        raise DegenerateOverlapError("overlap-zone matrix is identically zero")
    k = min(n_ev, n)
    if k == 0:
        return EigenResult(np.zeros(0), np.zeros((n, 0)))
    M = (N + B).tocsc()
    if n <= dense_limit or k + EIGEN_GUARD >= n // 5:
        mu, V = sla.eigh(B.toarray(), M.toarray())
        mu, V = mu[::-1][:k], V[:, ::-1][:, :k]
    else:
        scale = 1.0 / M.diagonal().max()
        Ms, Bs = (M * scale).tocsc(), (B * scale).tocsr()
        F = DirectFactor(Ms)
        T = spla.LinearOperator((n, n), matvec=F.solve, matmat=F.solve, dtype=float)
        X0 = np.random.default_rng(EIGEN_SEED).standard_normal((n, k + EIGEN_GUARD))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mu, V = spla.lobpcg(Bs, X0, B=Ms, M=T, tol=tol, maxiter=maxiter, largest=True)
        for w in caught:
            log.debug("lobpcg: %s", str(w.message).splitlines()[0])
        order = np.argsort(-mu, kind="stable")[:k]
        mu, V = mu[order], V[:, order]
    lam = 1.0 / np.clip(mu, 1e-300, None) - 1.0
    V = V / np.sqrt(np.einsum("ik,ik->k", V, M @ V))
    lam = np.maximum(lam, 0.0)
    # fix the sign of each vector for reproducibility
    V = V * np.where(V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])] < 0, -1.0, 1.0)
    keep = np.ones(len(lam), bool) if threshold is None else lam < threshold
    return EigenResult(lam[keep], V[:, keep], lam)


@dataclass
class CoarseSpace:
    Z: sp.csc_matrix           # (n_dofs, m) coarse basis
    K0: np.ndarray
    factor: tuple
    owner: np.ndarray          # subdomain of each kept vector
    dropped: list
    eigenvalues: list

    @property
    def dim(self):
        return self.Z.shape[1]

    def solve(self, r):
        if self.dim == 0:
            return np.zeros_like(r)
        return self.Z @ sla.cho_solve(self.factor, self.Z.T @ r)


def independent_columns(G, tol=1e-10):
    """Greedy selection of linearly independent columns from a Gram matrix.

    Columns are visited in order; one is kept when its squared distance to
    the span of the kept ones, relative to its own norm, exceeds ``tol``.
    """
    m = G.shape[0]
    kept = []
    L = np.zeros((m, m))
    for i in range(m):
        gii = G[i, i]
        if gii <= 0:
            continue
        if kept:
            l = sla.solve_triangular(L[:len(kept), :len(kept)], G[kept, i], lower=True)
            d = gii - l @ l
        else:
            l, d = np.zeros(0), gii
        if d > tol * gii:
            q = len(kept)
            L[q, :q] = l
            L[q, q] = np.sqrt(d)
            kept.append(i)
    return np.array(kept, dtype=np.int64)


def build_coarse(dec, eigen, K, tol=1e-10):
    """Coarse basis R_j^T D_j v, dependent vectors dropped, K0 = Z^T K Z."""
    rows, cols, vals, owner = [], [], [], []
    m = 0
    for j, (sd, ev) in enumerate(zip(dec, eigen)):
        W = sd.weights[:, None] * ev.vectors
        for c in range(W.shape[1]):
            nz = np.flatnonzero(W[:, c])
            rows.append(sd.dofs[nz])
            cols.append(np.full(len(nz), m))
            vals.append(W[nz, c])
            owner.append(j)
            m += 1
    owner = np.array(owner, dtype=np.int64)
    if m == 0:
        Z = sp.csc_matrix((dec.n_dofs, 0))
        return CoarseSpace(Z, np.zeros((0, 0)), None, owner, [], [e.values for e in eigen])
    Z = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dec.n_dofs, m))
    G = (Z.T @ Z).toarray()
    kept = independent_columns(G, tol)
    dropped = sorted(set(range(m)) - set(kept.tolist()))
    if dropped:
        log.info("coarse space: dropped %d dependent vectors %s", len(dropped), dropped)
    Z = Z[:, kept]
    K0 = (Z.T @ (K @ Z)).toarray() if sp.issparse(Z) else Z.T @ K @ Z
    K0 = np.asarray(0.5 * (K0 + K0.T))
    factor = sla.cho_factor(K0, lower=True)
    return CoarseSpace(Z.tocsc(), K0, factor, owner[kept], dropped, [e.values for e in eigen])


class SchwarzPreconditioner:
    """Additive Schwarz, optionally with an additive GenEO coarse level.

    Calling the object applies the preconditioner to a residual. Constrained
    dofs (identity rows of K) are passed through unchanged.
    """

    def __init__(self, sys, dec, coarse=None, workers=1, factors=None):
        self.dec = dec
        self.coarse = coarse
        self.workers = workers
        self.constrained = ~dec.free
        if factors is None:
            factors = _map(lambda sd: DirectFactor(sys.K[sd.interior_dofs][:, sd.interior_dofs]),
                           dec.subdomains, workers)
        self.factors = factors
        self.name = "geneo" if coarse is not None else "one-level"
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def local_corrections(self, r):
        def work(j):
            idx = self.dec[j].interior_dofs
            return idx, self.factors[j].solve(r[idx])
        if self._pool is not None:
            return list(self._pool.map(work, range(self.dec.n_sub)))
        return [work(j) for j in range(self.dec.n_sub)]

    def apply_one_level(self, r):
        r = np.asarray(r, dtype=float)
        z = np.zeros_like(r)
        for idx, y in self.local_corrections(r):    # fixed combining order
            z[idx] += y
        z[self.constrained] += r[self.constrained]
        return z

    def apply_coarse(self, r):
        if self.coarse is None:
            return np.zeros_like(r)
        return self.coarse.solve(np.asarray(r, dtype=float))

    def apply_two_level(self, r):
        z = self.apply_one_level(r)
        if self.coarse is not None and self.coarse.dim:
            z += self.apply_coarse(r)
        return z

    def __call__(self, r):
        return self.apply_two_level(r)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __del__(self):
        self.close()


@dataclass
class SetupInfo:
    n_sub: int
    overlap: int
    coarse_dim: int = 0
    thresholds: list = field(default_factory=list)
    setup_time: float = 0.0
    dropped: int = 0


def setup_preconditioner(sys, kind="geneo", n_sub=4, overlap=2, axis="width", n_ev=10,
                         threshold=None, workers=1):
    """Build a preconditioner: 'none', 'one-level' or 'geneo'.

    Returns (callable or None, SetupInfo).
    """
    t0 = time.perf_counter()
    if kind == "none":
        return None, SetupInfo(0, 0)
    if kind not in ("one-level", "geneo"):
        raise ValueError(f"unknown preconditioner {kind!r}")
    dec = decompose(sys, n_sub, overlap, axis)
    info = SetupInfo(dec.n_sub, overlap)
    if kind == "one-level":
        P = SchwarzPreconditioner(sys, dec, None, workers)
        info.setup_time = time.perf_counter() - t0
        return P, info

    zones = overlap_elements(dec)

    def local(j):
        sd = dec[j]
        idx = sd.interior_dofs
        fac = DirectFactor(sys.K[idx][:, idx])
        if dec.n_sub == 1 or len(zones[j]) == 0:
            return fac, EigenResult(np.zeros(0), np.zeros((len(sd.dofs), 0)))
        N = _restrict_assembled(sys, sd.elements, sd.dofs)
        At = _restrict_assembled(sys, zones[j], sd.dofs)
        D = sp.diags(sd.weights)
        ev = geneo_eigensolve(N, (D @ At @ D).tocsr(), n_ev, threshold)
        return fac, ev

    results = _map(local, range(dec.n_sub), workers)
    factors = [r[0] for r in results]
    eigen = [r[1] for r in results]
    coarse = build_coarse(dec, eigen, sys.K)
    P = SchwarzPreconditioner(sys, dec, coarse, workers, factors)
    info.coarse_dim = coarse.dim
    info.dropped = len(coarse.dropped)
    info.thresholds = [float(e.values[-1]) if len(e.values) else 0.0 for e in eigen]
    info.setup_time = time.perf_counter() - t0
    log.info("geneo: %d subdomains, overlap %d, coarse dimension %d", dec.n_sub, overlap, coarse.dim)
    return P, info


def log_row(info, report, solve_time):
    """One CSV-ready record per solve."""
    return {
        "n_sub": info.n_sub,
        "overlap": info.overlap,
        "coarse_dim": info.coarse_dim,
        "eigenvalue_thresholds": " ".join(f"{t:.6g}" for t in info.thresholds),
        "iterations": report.iterations,
        "setup_time": round(info.setup_time, 3),
        "solve_time": round(solve_time, 3),
    }
