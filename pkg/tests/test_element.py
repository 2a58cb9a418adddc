import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_mesh
from curvlam.element import (FULL, REF_NODES, element_stiffness, gauss_rule, jacobians, laminate_frames,
                             serendipity_basis)
from curvlam.errors import ElementInversionError
from curvlam.materials import (DEFAULT_INTERFACE, DEFAULT_PLY, IsotropicProps, isotropic_stiffness,
                               orthotropic_stiffness, rotate_stiffness)
from oracles import rigid_modes, unit_cube_nodes

PLY = orthotropic_stiffness(DEFAULT_PLY)
INTERFACE = isotropic_stiffness(DEFAULT_INTERFACE)
coords3 = st.lists(st.floats(-1, 1), min_size=3, max_size=3)


@settings(max_examples=50, deadline=None)
@given(coords3)
def test_partition_of_unity(xi):
    N, dN = serendipity_basis(np.array(xi))
    assert abs(N.sum() - 1.0) < 1e-14
    assert np.abs(dN.sum(axis=0)).max() < 1e-13


def test_kronecker_property():
    N, _ = serendipity_basis(REF_NODES)
    assert np.abs(N - np.eye(20)).max() < 1e-14


@settings(max_examples=30, deadline=None)
@given(coords3)
def test_gradients_match_finite_differences(xi):
    xi = np.array(xi)
    _, dN = serendipity_basis(xi)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (serendipity_basis(xi + e)[0] - serendipity_basis(xi - e)[0]) / (2 * h)
        assert np.abs(fd - dN[:, k]).max() < 1e-8


@pytest.mark.parametrize("powers", [(0, 0, 0), (1, 0, 0), (0, 1, 1), (2, 0, 0), (1, 1, 0), (0, 0, 2)])
def test_reproduces_quadratic_monomials(powers, rng):
    xi = rng.uniform(-1, 1, (10, 3))
    N, _ = serendipity_basis(xi)
    mono = lambda x: np.prod(x ** np.array(powers), axis=-1)
    assert np.abs(N @ mono(REF_NODES) - mono(xi)).max() < 1e-13


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_gauss_rule_exact_to_its_degree(n):
    q = gauss_rule(n)
    assert q.degree == 2 * n - 1
    x, y, z = q.points.T
    # highest even power integrated exactly, the next one is not
    p = 2 * n - 2
    assert abs((q.weights * x ** p * z ** p).sum() - 8.0 / (p + 1) ** 2) < 1e-12
    assert abs((q.weights * y ** (p + 2)).sum() - 8.0 / (p + 3)) > 1e-6


def _curved_element():
    mesh = small_mesh(4, 3)
    arc = np.flatnonzero((mesh.segment[mesh.grid[:, 0]] == 1) & (mesh.kind == 0))
    return mesh.element_coords([arc[len(arc) // 2]])[0]


GEOMETRIES = {
    "cube": unit_cube_nodes(),
    "brick": unit_cube_nodes((2.0, 0.5, 0.1), (3.0, -1.0, 0.5)),
    "curved": _curved_element(),
}


@pytest.mark.parametrize("geom", list(GEOMETRIES))
@pytest.mark.parametrize("C,frame", [(PLY, True), (rotate_stiffness(PLY, 45.0), True), (INTERFACE, False)],
                         ids=["ply0", "ply45", "interface"])
def test_rigid_body_null_space(geom, C, frame):
    x = GEOMETRIES[geom]
    K = element_stiffness(x, C, laminate_frame=frame)
    ev = np.linalg.eigvalsh(K)
    assert ev[5] / ev[-1] < 1e-8
    assert ev[6] / ev[-1] > 1e-6
    R = rigid_modes(x)
    assert np.abs(K @ R).max() < 1e-9 * np.abs(K).max() * np.abs(R).max()


def test_stiffness_symmetric_psd():
    K = element_stiffness(GEOMETRIES["curved"], PLY, laminate_frame=True)
    assert np.array_equal(K, K.T)
    assert np.linalg.eigvalsh(K)[0] > -1e-10 * np.abs(K).max()


def test_uniform_strain_energy():
    x = GEOMETRIES["brick"]
    eps = np.array([1e-3, -2e-4, 5e-4, 3e-4, -1e-4, 2e-4])
    E = np.array([[eps[0], eps[5] / 2, eps[4] / 2], [eps[5] / 2, eps[1], eps[3] / 2],
                  [eps[4] / 2, eps[3] / 2, eps[2]]])
    u = (x @ E.T).ravel()
    K = element_stiffness(x, PLY)
    vol = 2.0 * 0.5 * 0.1
    assert abs(u @ K @ u - vol * eps @ PLY @ eps) < 1e-12 * vol * abs(eps @ PLY @ eps) * 1e3


@pytest.mark.parametrize("a", [0.1, 2.0, 7.5])
def test_stiffness_scales_linearly_with_size(a):
    K1 = element_stiffness(unit_cube_nodes(), PLY)
    Ka = element_stiffness(unit_cube_nodes((a, a, a)), PLY)
    assert np.abs(Ka - a * K1).max() < 1e-12 * np.abs(Ka).max()


def test_higher_quadrature_agrees_on_affine_element():
    x = GEOMETRIES["brick"]
    K3 = element_stiffness(x, rotate_stiffness(PLY, 30.0), quad=FULL, laminate_frame=True)
    K4 = element_stiffness(x, rotate_stiffness(PLY, 30.0), quad=gauss_rule(4), laminate_frame=True)
    assert np.abs(K3 - K4).max() < 1e-12 * np.abs(K3).max()


def test_inverted_element_raises():
    x = unit_cube_nodes()
    x[:, 2] *= -1.0
    with pytest.raises(ElementInversionError):
        element_stiffness(x, PLY)


def test_laminate_frames_orthonormal_right_handed():
    x = GEOMETRIES["curved"]
    _, dN = serendipity_basis(FULL.points)
    Q = laminate_frames(jacobians(x[None], dN))[0]
    assert np.abs(np.swapaxes(Q, -1, -2) @ Q - np.eye(3)).max() < 1e-13
    assert np.allclose(np.linalg.det(Q), 1.0, atol=1e-13)


def _trilinear_energy(C, lo, hi, u_of_x):
    """Strain energy of a field on a box meshed by 2x2x2 eight-node bricks."""
    g = np.polynomial.legendre.leggauss(2)[0]
    corners = np.array([[i, j, k] for k in (-1, 1) for j in (-1, 1) for i in (-1, 1)], float)
    total = 0.0
    h = (hi - lo) / 2
    for cell in np.ndindex(2, 2, 2):
        origin = lo + h * np.array(cell)
        x_nodes = origin + (corners + 1) / 2 * h
        u = u_of_x(x_nodes).ravel()
        Ke = np.zeros((24, 24))
        for p in np.array(np.meshgrid(g, g, g, indexing="ij")).reshape(3, -1).T:
            dN = corners * np.prod(1 + corners * p, axis=1)[:, None] / (1 + corners * p) / 8
            dNdx = dN / (h / 2)
            B = np.zeros((6, 8, 3))
            B[0, :, 0], B[1, :, 1], B[2, :, 2] = dNdx.T
            B[3, :, 1], B[3, :, 2] = dNdx[:, 2], dNdx[:, 1]
            B[4, :, 0], B[4, :, 2] = dNdx[:, 2], dNdx[:, 0]
            B[5, :, 0], B[5, :, 1] = dNdx[:, 1], dNdx[:, 0]
            B = B.reshape(6, 24)
            Ke += B.T @ C @ B * np.prod(h / 2)
        total += u @ Ke @ u
    return total


def test_linear_field_energy_matches_trilinear_oracle(rng):
    C = isotropic_stiffness(IsotropicProps(1.0, 0.0))
    G = rng.standard_normal((3, 3))
    field = lambda x: x @ G.T
    x = unit_cube_nodes()
    u = field(x).ravel()
    e20 = u @ element_stiffness(x, C) @ u
    e8 = _trilinear_energy(C, np.zeros(3), np.ones(3), field)
    assert abs(e20 - e8) < 1e-12 * e8
