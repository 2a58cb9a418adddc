import numpy as np
import pytest

from curvlam.assembly import apply_moment_load, assemble, clamp_nodes
from curvlam.materials import DEFAULT_CATALOG, STACKING_12, MaterialTable, StackingSequence
from curvlam.mesh import CornerGeometry, MeshSpec, build_mesh

ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


SMALL_CORNER = CornerGeometry(4.0, 1.0, 3.0, 0.23, 0.02, 3)
SMALL_STACK = StackingSequence((45.0, 0.0, -45.0))


def small_mesh(n_arc=4, n_width=4, wrinkle=None, geometry=SMALL_CORNER, stacking=SMALL_STACK, **kw):
    spec = MeshSpec(n_arc, n_width, n_elems_limb=kw.pop("n_elems_limb", 1), **kw)
    return build_mesh(geometry, spec, stacking, wrinkle)


def small_system(mesh=None, moment=1.0, dofmap=None):
    mesh = mesh or small_mesh()
    mt = MaterialTable(DEFAULT_CATALOG, mesh.stacking)
    s = assemble(mesh, mt, dofmap=dofmap)
    s = clamp_nodes(s, mesh.node_set("clamped"))
    return apply_moment_load(s, mesh, moment)


@pytest.fixture(scope="session")
def corner_system():
    """A small pristine 3-ply corner, clamped and loaded."""
    return small_system(small_mesh(6, 8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def stacking12():
    return STACKING_12
