"""Independent reference computations shared by the tests."""

import itertools

import numpy as np

from curvlam.materials import VOIGT_PAIRS


def voigt_to_tensor(C):
    T = np.zeros((3, 3, 3, 3))
    for (a, (i, j)), (b, (k, l)) in itertools.product(enumerate(VOIGT_PAIRS), repeat=2):
        for p, q in {(i, j), (j, i)}:
            for r, s in {(k, l), (l, k)}:
                T[p, q, r, s] = C[a, b]
    return T


def tensor_to_voigt(T):
    C = np.zeros((6, 6))
    for (a, (i, j)), (b, (k, l)) in itertools.product(enumerate(VOIGT_PAIRS), repeat=2):
        C[a, b] = T[i, j, k, l]
    return C


def rotate_tensor(C, deg):
    t = np.deg2rad(deg)
    R = np.array([[np.cos(t), -np.sin(t), 0], [np.sin(t), np.cos(t), 0], [0, 0, 1]])
    T = np.einsum("ip,jq,kr,ls,pqrs->ijkl", R, R, R, R, voigt_to_tensor(C))
    return tensor_to_voigt(T)


def rigid_modes(x):
    """Six rigid-body displacement fields at points x (n, 3) -> (3n, 6)."""
    n = len(x)
    R = np.zeros((n, 3, 6))
    R[:, 0, 0] = R[:, 1, 1] = R[:, 2, 2] = 1.0
    for c, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        R[:, a, 3 + c] = -x[:, b]
        R[:, b, 3 + c] = x[:, a]
    return R.reshape(3 * n, 6)


def unit_cube_nodes(scale=(1.0, 1.0, 1.0), shift=(0.0, 0.0, 0.0)):
    from curvlam.element import REF_NODES
    return (REF_NODES + 1.0) / 2.0 * np.asarray(scale) + np.asarray(shift)


def quadratic_field(H, g, x):
    """u_i(x) = g_i . x + x^T H_i x / 2 for H (3, 3, 3) symmetric in the last two."""
    return np.einsum("ij,nj->ni", g, x) + 0.5 * np.einsum("ijk,nj,nk->ni", H, x, x)


def body_force_for(H, C):
    """b = -div(C : grad_sym u) for the quadratic field with Hessians H (constant)."""
    T = voigt_to_tensor(C)
    return -np.einsum("ijkl,klj->i", T, H)


def manufactured_error(mesh, catalog, C_global, g, H=None):
    """Solve with the exact field prescribed on the whole boundary.

    The load is the body force balancing the quadratic field (zero for a
    linear one). Returns max nodal error over max nodal displacement.
    """
    from dataclasses import replace

    from curvlam.assembly import GPA_TO_MPA, apply_dirichlet, assemble, body_force_vector
    from curvlam.materials import MaterialTable
    from curvlam.solvers import DirectFactor

    H = np.zeros((3, 3, 3)) if H is None else H
    s = assemble(mesh, MaterialTable(catalog, mesh.stacking))
    b = body_force_for(H, GPA_TO_MPA * C_global)
    f = body_force_vector(mesh, s.dofmap, lambda x: np.broadcast_to(b, x.shape))
    s = replace(s, f=f)
    exact = quadratic_field(H, g, mesh.nodes)
    bnd = mesh.node_set("boundary")
    s = apply_dirichlet(s, s.dofmap.node_dofs(bnd), exact[bnd])
    u = s.dofmap.node_values(DirectFactor(s.K).solve(s.f))
    return np.abs(u - exact).max() / np.abs(exact).max()


def random_quadratic(rng):
    g = rng.standard_normal((3, 3))
    H = rng.standard_normal((3, 3, 3))
    return g, 0.5 * (H + np.swapaxes(H, 1, 2))
