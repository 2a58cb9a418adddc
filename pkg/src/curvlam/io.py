"""File formats: legacy VTK, Matrix Market and CSV tables."""

import csv

import numpy as np
import scipy.io
import scipy.sparse as sp

VTK_HEXAHEDRON = 12


def write_matrix_market(path, A, comment=""):
    if sp.issparse(A):
        scipy.io.mmwrite(path, sp.coo_matrix(A), comment=comment, precision=17)
    else:
        scipy.io.mmwrite(path, np.atleast_2d(np.asarray(A, dtype=float)).reshape(len(A), -1),
                         comment=comment, precision=17)


def read_matrix_market(path):
    """Sparse matrices come back as CSR, dense arrays as ndarray."""
    A = scipy.io.mmread(path)
    if sp.issparse(A):
        return sp.csr_matrix(A)
    return np.asarray(A)


def write_vtk(path, mesh, point_data=None, cell_data=None, title="curvlam"):
    """Legacy ASCII unstructured grid of the 8 corner nodes of each element.

    ``point_data`` maps names to (N,) or (N, 3) arrays over mesh nodes and
    ``cell_data`` names to (E,) arrays. The material tag is always written.
    """
    corners = mesh.elements[:, :8]
    used = np.unique(corners)
    remap = np.full(mesh.n_nodes, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    cells = remap[corners]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(used)} double\n")
        np.savetxt(fh, mesh.nodes[used], fmt="%.10g")
        fh.write(f"CELLS {len(cells)} {9 * len(cells)}\n")
        np.savetxt(fh, np.hstack([np.full((len(cells), 1), 8), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        np.savetxt(fh, np.full(len(cells), VTK_HEXAHEDRON), fmt="%d")

        tag = _point_material_tag(mesh)
        fh.write(f"POINT_DATA {len(used)}\n")
        fh.write("SCALARS material_tag int 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, tag[used], fmt="%d")
        for name, values in (point_data or {}).items():
            v = np.asarray(values)[used]
            if v.ndim == 2 and v.shape[1] == 3:
                fh.write(f"VECTORS {name} double\n")
            else:
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, v, fmt="%.10g")

        fh.write(f"CELL_DATA {len(cells)}\n")
        fh.write("SCALARS element_tag int 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, material_tag_code(mesh.kind, mesh.layer), fmt="%d")
        for name, values in (cell_data or {}).items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.asarray(values, dtype=float), fmt="%.10g")


def material_tag_code(kind, layer):
    """Single integer tag: 1000 * kind + layer index."""
    return 1000 * np.asarray(kind) + np.asarray(layer)


def _point_material_tag(mesh):
    tag = np.zeros(mesh.n_nodes, dtype=np.int64)
    # last writer wins in element order, which is deterministic
    tag[mesh.elements[:, :8].ravel()] = np.repeat(material_tag_code(mesh.kind, mesh.layer), 8)
    return tag


def read_vtk_points(path):
    """Minimal reader used by tests: points, cells and the point material tags."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    i = next(k for k, s in enumerate(lines) if s.startswith("POINTS"))
    n = int(lines[i].split()[1])
    pts = np.loadtxt(lines[i + 1:i + 1 + n])
    j = next(k for k, s in enumerate(lines) if s.startswith("CELLS"))
    m = int(lines[j].split()[1])
    cells = np.loadtxt(lines[j + 1:j + 1 + m], dtype=np.int64)
    k = next(k for k, s in enumerate(lines) if s.startswith("SCALARS material_tag"))
    tags = np.loadtxt(lines[k + 2:k + 2 + n], dtype=np.int64)
    return pts, cells, tags


def fmt(v):
    """Stable text form for CSV cells."""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, rows, columns=None):
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c, "")) for c in columns])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
