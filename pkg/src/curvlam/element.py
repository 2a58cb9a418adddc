"""20-node serendipity hexahedron: shape functions, quadrature, stiffness.

Node order follows the VTK quadratic hexahedron: 8 corners, then the
midpoints of edges (0,1) (1,2) (2,3) (3,0) (4,5) (5,6) (6,7) (7,4) (0,4)
(1,5) (2,6) (3,7). Reference axes map to the laminate directions
xi -> s, eta -> l, zeta -> r.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ElementInversionError
from .materials import stress_rotation

CORNERS = np.array(
    [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
     [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float
)
EDGES = ((0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
         (0, 4), (1, 5), (2, 6), (3, 7))
REF_NODES = np.vstack([CORNERS, [(CORNERS[a] + CORNERS[b]) / 2 for a, b in EDGES]])

# index (0, 1, 2) of the coordinate that is zero at each edge node
_EDGE_AXIS = np.array([int(np.flatnonzero(REF_NODES[8 + e] == 0)[0]) for e in range(12)])


def serendipity_basis(xi):
    """Shape function values and reference gradients.

    Parameters
    ----------
    xi : array_like, shape (..., 3)

    Returns
    -------
    N : ndarray, shape (..., 20)
    dN : ndarray, shape (..., 20, 3)
    """
    xi = np.asarray(xi, dtype=float)
    x = xi[..., None, :]                                  # (..., 1, 3)
    nodes = REF_NODES                                      # (20, 3)
    N = np.empty(xi.shape[:-1] + (20,))
    dN = np.empty(xi.shape[:-1] + (20, 3))

    c = nodes[:8]
    t = 1.0 + x * c                                        # (..., 8, 3)
    prod = t[..., 0] * t[..., 1] * t[..., 2]
    s = (x * c).sum(-1) - 2.0
    N[..., :8] = 0.125 * prod * s
    for k in range(3):
        o1, o2 = (k + 1) % 3, (k + 2) % 3
        dprod = c[:, k] * t[..., o1] * t[..., o2]
        dN[..., :8, k] = 0.125 * (dprod * s + prod * c[:, k])

    e = nodes[8:]
    for m in range(12):
        a = _EDGE_AXIS[m]
        b1, b2 = (a + 1) % 3, (a + 2) % 3
        q = 1.0 - xi[..., a] ** 2
        u = 1.0 + xi[..., b1] * e[m, b1]
        v = 1.0 + xi[..., b2] * e[m, b2]
        N[..., 8 + m] = 0.25 * q * u * v
        dN[..., 8 + m, a] = 0.25 * (-2.0 * xi[..., a]) * u * v
        dN[..., 8 + m, b1] = 0.25 * q * e[m, b1] * v
        dN[..., 8 + m, b2] = 0.25 * q * u * e[m, b2]
    return N, dN


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def gauss_rule(n=3):
    """Tensor Gauss-Legendre rule with n points per direction (exact to 2n-1)."""
    g, w = np.polynomial.legendre.leggauss(n)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    WX, WY, WZ = np.meshgrid(w, w, w, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return QuadratureRule(pts, (WX * WY * WZ).ravel(), 2 * n - 1)


FULL = gauss_rule(3)


def jacobians(coords, dN):
    """J[e, q, i, j] = d x_i / d xi_j for element coords (ne, 20, 3)."""
    return np.einsum("eai,qaj->eqij", coords, dN)


def laminate_frames(J):
    """Orthonormal (s, l, r) triads from the reference tangents.

    Returns Q with columns e_s, e_l, e_r so that v_global = Q v_local.
    """
    es = J[..., :, 0] / np.linalg.norm(J[..., :, 0], axis=-1, keepdims=True)
    t = J[..., :, 1] - (J[..., :, 1] * es).sum(-1, keepdims=True) * es
    el = t / np.linalg.norm(t, axis=-1, keepdims=True)
    er = np.cross(es, el)
    return np.stack([es, el, er], axis=-1)


def strain_displacement(dNdx):
    """Voigt B operator (..., 6, 60) from physical gradients (..., 20, 3)."""
    shape = dNdx.shape[:-2]
    B = np.zeros(shape + (6, 20, 3))
    dx, dy, dz = dNdx[..., 0], dNdx[..., 1], dNdx[..., 2]
    B[..., 0, :, 0] = dx
    B[..., 1, :, 1] = dy
    B[..., 2, :, 2] = dz
    B[..., 3, :, 1] = dz
    B[..., 3, :, 2] = dy
    B[..., 4, :, 0] = dz
    B[..., 4, :, 2] = dx
    B[..., 5, :, 0] = dy
    B[..., 5, :, 1] = dx
    return B.reshape(shape + (6, 60))


def element_kinematics(coords, quad=FULL, element_ids=None):
    """Jacobian determinants, B matrices and laminate frames for a batch.

    Raises ElementInversionError naming the first element whose Jacobian is
    non-positive at some quadrature point.
    """
    _, dN = serendipity_basis(quad.points)
    J = jacobians(coords, dN)
    detJ = np.linalg.det(J)
    bad = detJ.min(axis=1) <= 0
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        eid = i if element_ids is None else int(element_ids[i])
        raise ElementInversionError(eid, detJ[i].min())
    invJ = np.linalg.inv(J)
    dNdx = np.einsum("qaj,eqji->eqai", dN, invJ)
    return detJ, strain_displacement(dNdx), J


def global_stiffness_at_points(C, J, rotate):
    """Per-point global-frame stiffness (ne, nq, 6, 6).

    C has shape (ne, 6, 6) in the local laminate frame; elements with
    ``rotate`` False are taken as frame-independent.
    """
    ne, nq = J.shape[:2]
    Cg = np.broadcast_to(C[:, None], (ne, nq, 6, 6)).copy()
    if np.any(rotate):
        idx = np.flatnonzero(rotate)
        M = stress_rotation(laminate_frames(J[idx]))
        Cg[idx] = M @ C[idx, None] @ np.swapaxes(M, -1, -2)
    return Cg


def element_stiffness_batch(coords, C, rotate=None, quad=FULL, element_ids=None):
    """Stiffness matrices (ne, 60, 60) for a batch of elements."""
    coords = np.asarray(coords, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.ndim == 2:
        C = np.broadcast_to(C, (coords.shape[0], 6, 6))
    if rotate is None:
        rotate = np.zeros(coords.shape[0], dtype=bool)
    detJ, B, J = element_kinematics(coords, quad, element_ids)
    Cg = global_stiffness_at_points(C, J, rotate)
    ne, nq = detJ.shape
    wB = B * (quad.weights[None, :] * detJ)[..., None, None]
    CB = Cg @ B
    K = np.swapaxes(wB.reshape(ne, nq * 6, 60), 1, 2) @ CB.reshape(ne, nq * 6, 60)
    return 0.5 * (K + np.swapaxes(K, 1, 2))


def element_stiffness(coords, C, quad=FULL, laminate_frame=False):
    """60x60 stiffness of one element, K = sum_q w_q B^T C B det J.

    With ``laminate_frame`` the stiffness C is given in the element's local
    (s, l, r) frame and rotated to the global frame at each point.
    """
    K = element_stiffness_batch(
        np.asarray(coords)[None], np.asarray(C)[None],
        np.array([laminate_frame]), quad,
    )
    return K[0]
