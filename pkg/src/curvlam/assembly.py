"""Global stiffness assembly, constraints and loads.

Units inside the linear system are N, mm and MPa: stiffnesses coming from
:mod:`curvlam.materials` in GPa are scaled by 1e3 on assembly.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .element import FULL, element_kinematics, element_stiffness_batch, serendipity_basis
from .errors import ConfigurationError, ConstraintConflictError, PeriodicityMismatchError
from .materials import MaterialKind
from .mesh import STIFF_LAYER

log = logging.getLogger(__name__)

GPA_TO_MPA = 1.0e3
BATCH = 400


@dataclass
class DofMap:
    """Nodes to displacement dofs, with periodic slaves folded onto masters.

    Dof of node n, component c is ``3 * node_to_dofnode[n] + c``.
    """

    node_to_dofnode: np.ndarray
    n_dofnodes: int
    slaves: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    masters: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_dofs(self):
        return 3 * self.n_dofnodes

    def node_dofs(self, nodes):
        dn = self.node_to_dofnode[np.asarray(nodes)]
        return 3 * dn[..., None] + np.arange(3)

    def element_dofs(self, elements):
        return self.node_dofs(elements).reshape(len(elements), -1)

    def node_values(self, u):
        """Displacement per mesh node, shape (N, 3)."""
        return np.asarray(u).reshape(-1, 3)[self.node_to_dofnode]


def make_dofmap(mesh):
    n = mesh.n_nodes
    return DofMap(np.arange(n, dtype=np.int64), n)


def apply_periodic(mesh, direction="width", tol=1e-9):
    """Dof map identifying the l=W face with the l=0 face.

    Raises PeriodicityMismatchError when the two faces do not coincide up
    to a translation by W.
    """
    if direction != "width":
        raise ValueError("only width periodicity is supported")
    W = mesh.geometry.width
    lo = mesh.node_set("edge_l0")
    hi = mesh.node_set("edge_lW")
    key = lambda ids: mesh.lattice[ids][:, 0] * (10 ** 7) + mesh.lattice[ids][:, 2]
    lo = lo[np.argsort(key(lo), kind="stable")]
    hi = hi[np.argsort(key(hi), kind="stable")]
    if len(lo) != len(hi) or np.any(key(lo) != key(hi)):
        raise PeriodicityMismatchError("width faces carry different node grids")
    shift = mesh.nodes[hi] - mesh.nodes[lo] - np.array([0.0, W, 0.0])
    err = np.abs(shift).max() if len(shift) else 0.0
    if err > tol * W:
        raise PeriodicityMismatchError(f"width faces do not match (max offset {err:.3e} mm)")
    n = mesh.n_nodes
    is_slave = np.zeros(n, bool)
    is_slave[hi] = True
    dofnode = np.full(n, -1, dtype=np.int64)
    dofnode[~is_slave] = np.arange(int((~is_slave).sum()))
    dofnode[hi] = dofnode[lo]
    return DofMap(dofnode, int((~is_slave).sum()), slaves=hi, masters=lo)


@dataclass
class SparseSystem:
    """K u = f on the full dof set; constrained rows are identity rows."""

    K: sp.csr_matrix
    f: np.ndarray
    dofmap: DofMap
    mesh: object = None
    materials: object = None
    quad: object = FULL
    constrained: np.ndarray = None
    prescribed: np.ndarray = None

    def __post_init__(self):
        n = self.dofmap.n_dofs
        if self.constrained is None:
            self.constrained = np.zeros(n, bool)
        if self.prescribed is None:
            self.prescribed = np.zeros(n)

    @property
    def n_dofs(self):
        return self.dofmap.n_dofs

    @property
    def free(self):
        return ~self.constrained


def element_material_stiffness(mesh, materials, ids=None):
    """Local-frame stiffness per element in MPa, shape (E, 6, 6)."""
    ids = np.arange(mesh.n_elements) if ids is None else np.asarray(ids)
    kind, layer = mesh.kind[ids], mesh.layer[ids]
    layer_key = np.where(kind == MaterialKind.PLY, layer, 0)
    tags, inv = np.unique(np.stack([kind, layer_key], axis=1), axis=0, return_inverse=True)
    table = np.array([materials(k, l) for k, l in tags]) * GPA_TO_MPA
    return table[inv.ravel()]


def element_matrices(mesh, materials, ids, quad=FULL):
    """Stiffness matrices (len(ids), 60, 60) of the given elements."""
    ids = np.asarray(ids)
    C = element_material_stiffness(mesh, materials, ids)
    rotate = mesh.kind[ids] == MaterialKind.PLY
    return element_stiffness_batch(mesh.element_coords(ids), C, rotate, quad, element_ids=ids)


def _block_pattern(conn, n):
    rows = np.repeat(conn, conn.shape[1], axis=1).ravel()
    cols = np.tile(conn, (1, conn.shape[1])).ravel()
    keys = np.unique(rows * n + cols)
    return keys


def assemble_elements(mesh, materials, dofmap, ids=None, quad=FULL, workers=1):
    """Scatter-add element matrices of ``ids`` into a global CSR matrix.

    Uses a fixed 3x3 block pattern and ordered bincount accumulation so the
    result does not depend on the number of workers.
    """
    ids = np.arange(mesh.n_elements) if ids is None else np.asarray(ids)
    n = dofmap.n_dofnodes
    conn = dofmap.node_to_dofnode[mesh.elements[ids]]
    keys = _block_pattern(conn, n)
    nnzb = len(keys)
    data = np.zeros((nnzb, 3, 3))
    batches = [ids[i:i + BATCH] for i in range(0, len(ids), BATCH)]

    def work(batch):
        Ke = element_matrices(mesh, materials, batch, quad)
        blocks = Ke.reshape(len(batch), 20, 3, 20, 3).transpose(0, 1, 3, 2, 4)
        c = dofmap.node_to_dofnode[mesh.elements[batch]]
        pos = np.searchsorted(keys, (c[:, :, None] * n + c[:, None, :]).ravel())
        return pos, blocks.reshape(-1, 3, 3)

    def accumulate(result):
        pos, blocks = result
        for a in range(3):
            for b in range(3):
                data[:, a, b] += np.bincount(pos, weights=blocks[:, a, b], minlength=nnzb)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            for result in pool.map(work, batches):
                accumulate(result)
    else:
        for batch in batches:
            accumulate(work(batch))

    brow = keys // n
    bcol = keys % n
    indptr = np.concatenate([[0], np.cumsum(np.bincount(brow, minlength=n))])
    K = sp.bsr_matrix((data, bcol, indptr), shape=(3 * n, 3 * n)).tocsr()
    K.sort_indices()
    return K


def assemble(mesh, materials, quad=FULL, dofmap=None, workers=1):
    """Global stiffness K and zero load vector over ``dofmap``."""
    dofmap = make_dofmap(mesh) if dofmap is None else dofmap
    K = assemble_elements(mesh, materials, dofmap, None, quad, workers)
    log.info("assembled K: %d dofs, %d nonzeros", K.shape[0], K.nnz)
    return SparseSystem(K, np.zeros(K.shape[0]), dofmap, mesh, materials, quad)


def _merge_constraints(sys, dofs, values):
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape).ravel()
    dofs = dofs.ravel()
    order = np.argsort(dofs, kind="stable")
    d, v = dofs[order], values[order]
    same = d[1:] == d[:-1]
    if np.any(same & (v[1:] != v[:-1])):
        raise ConstraintConflictError(f"dof {int(d[1:][same & (v[1:] != v[:-1])][0])} prescribed twice")
    d, idx = np.unique(d, return_index=True)
    v = v[idx]
    old = sys.constrained[d]
    if np.any(old & (sys.prescribed[d] != v)):
        raise ConstraintConflictError(f"dof {int(d[old & (sys.prescribed[d] != v)][0])} already constrained")
    return d, v


def apply_dirichlet(sys, dofs, values=0.0):
    """Symmetric elimination of prescribed dofs.

    Constrained rows and columns are zeroed with a unit diagonal and the
    right-hand side is corrected, so the system stays SPD.
    """
    d, v = _merge_constraints(sys, dofs, values)
    u_c = np.zeros(sys.n_dofs)
    u_c[d] = v
    f = sys.f - sys.K @ u_c
    constrained = sys.constrained.copy()
    constrained[d] = True
    prescribed = sys.prescribed.copy()
    prescribed[d] = v
    keep = sp.diags((~constrained).astype(float))
    K = (keep @ sys.K @ keep + sp.diags(constrained.astype(float))).tocsr()
    K.eliminate_zeros()
    K.sort_indices()
    f[constrained] = prescribed[constrained]
    return replace(sys, K=K, f=f, constrained=constrained, prescribed=prescribed)


def clamp_nodes(sys, nodes, values=None):
    """Prescribe all three components on ``nodes`` (zero by default)."""
    dofs = sys.dofmap.node_dofs(nodes)
    vals = 0.0 if values is None else np.asarray(values).reshape(dofs.shape)
    return apply_dirichlet(sys, dofs, vals)


def face_quadrature(mesh, ids, face_axis, face_sign, n=3):
    """Points, weighted outward area vectors and shape values on element faces.

    Returns x (nf, nq, 3), dA (nf, nq, 3) and N (nq, 20).
    """
    g, w = np.polynomial.legendre.leggauss(n)
    A, B = np.meshgrid(g, g, indexing="ij")
    WA, WB = np.meshgrid(w, w, indexing="ij")
    other = [a for a in range(3) if a != face_axis]
    pts = np.zeros((n * n, 3))
    pts[:, face_axis] = face_sign
    pts[:, other[0]] = A.ravel()
    pts[:, other[1]] = B.ravel()
    N, dN = serendipity_basis(pts)
    coords = mesh.element_coords(ids)
    x = np.einsum("qa,eai->eqi", N, coords)
    t1 = np.einsum("qa,eai->eqi", dN[:, :, other[0]], coords)
    t2 = np.einsum("qa,eai->eqi", dN[:, :, other[1]], coords)
    t3 = np.einsum("qa,eai->eqi", dN[:, :, face_axis], coords)
    nA = np.cross(t1, t2)
    sign = np.sign((nA * t3).sum(-1, keepdims=True)) * face_sign
    dA = nA * sign * (WA * WB).ravel()[None, :, None]
    return x, dA, N


def moment_traction_load(mesh, dofmap, moment):
    """Consistent nodal forces of a linear axial traction on the loaded end.

    The traction sigma(rho) = -12 M rho / T^3 over the loaded end face
    (rho measured from mid-thickness) has zero resultant and a moment of
    M * W about the mid-thickness axis. Positive M opens the corner.
    """
    f = np.zeros(dofmap.n_dofs)
    if moment == 0:
        return f
    ns = mesh.shape[0]
    ids = np.flatnonzero(mesh.grid[:, 0] == ns - 1)
    x, dA, N = face_quadrature(mesh, ids, 0, +1.0)
    flat = mesh.flat[mesh.elements[ids]]
    r = np.einsum("qa,ea->eq", N, flat[:, :, 2])
    rho = r - mesh.geometry.mid_radius
    T = mesh.geometry.total_thickness
    sigma = -12.0 * moment * rho / T ** 3
    traction = sigma[..., None] * dA                        # force per point
    nodal = np.einsum("qa,eqi->eai", N, traction)
    dofs = dofmap.element_dofs(mesh.elements[ids])
    np.add.at(f, dofs.ravel(), nodal.ravel())
    return f


def apply_moment_load(sys, mesh, moment, mode="stiff-layer"):
    """Add the end moment (N mm per mm width) to the load vector.

    The stiff loading layer must be present so the end section rotates
    nearly rigidly.
    """
    if mode != "stiff-layer":
        raise ConfigurationError(f"unknown moment mode {mode!r}")
    if not np.any(mesh.segment == STIFF_LAYER):
        raise ConfigurationError("moment load needs stiff-layer elements at the loaded end")
    f_load = moment_traction_load(mesh, sys.dofmap, moment)
    f_load[sys.constrained] = 0.0
    return replace(sys, f=sys.f + f_load)


def body_force_vector(mesh, dofmap, body_force, quad=FULL):
    """Consistent load of a body force field b(x) (callable on (..., 3))."""
    N, _ = serendipity_basis(quad.points)
    f = np.zeros(dofmap.n_dofs)
    for start in range(0, mesh.n_elements, BATCH):
        ids = np.arange(start, min(start + BATCH, mesh.n_elements))
        detJ, _, _ = element_kinematics(mesh.element_coords(ids), quad, ids)
        x = np.einsum("qa,eai->eqi", N, mesh.element_coords(ids))
        b = body_force(x)
        fe = np.einsum("qa,eqi,eq,q->eai", N, b, detJ, quad.weights)
        np.add.at(f, dofmap.element_dofs(mesh.elements[ids]).ravel(), fe.ravel())
    return f
