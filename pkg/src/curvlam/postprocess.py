"""Stress recovery in the laminate frame and interlaminar failure evaluation.

Local stress components follow the Voigt order of the (s, l, r) triad:
sigma_s, sigma_l, sigma_r, tau_lr, tau_sr, tau_sl.
"""

from dataclasses import dataclass

import numpy as np

from .assembly import BATCH, element_material_stiffness
from .element import FULL, element_kinematics, global_stiffness_at_points, laminate_frames, serendipity_basis
from .errors import ConfigurationError, OutOfDomainError
from .io import material_tag_code
from .materials import MaterialKind, stress_rotation
from .mesh import ARC

S, L, R, LR, SR, SL = range(6)
PROFILE_COLUMNS = ("r_mm", "sigma_s", "sigma_l", "sigma_r", "tau_sl", "tau_rs", "tau_rl", "F", "material_tag")


@dataclass(frozen=True)
class FailureAllowables:
    s33: float = 61.0
    s13: float = 97.0

    def __post_init__(self):
        if self.s33 <= 0 or self.s13 <= 0:
            raise ValueError("allowables must be positive")


@dataclass
class StressField:
    """Quadrature-point stresses (E, nq, 6) in MPa, local laminate frame."""

    local: np.ndarray
    points: np.ndarray        # (E, nq, 3) mapped coordinates
    flat: np.ndarray          # (E, nq, 3) unperturbed (s, l, r)
    frames: np.ndarray        # (E, nq, 3, 3) columns e_s, e_l, e_r
    quad: object
    mesh: object
    ids: np.ndarray           # element id of each row

    def nodal(self):
        """Nodal extrapolation averaged within each material region.

        Returns (values, region) where ``values`` has shape (n_regions, N, 6)
        and rows hold NaN for nodes a region does not touch; ``region`` lists
        the (kind, layer) key per row.
        """
        mesh = self.mesh
        N, _ = serendipity_basis(self.quad.points)
        fit = np.linalg.pinv(N)                          # (20, nq) least squares
        per_elem = np.einsum("aq,eqc->eac", fit, self.local)
        keys = np.stack([mesh.kind[self.ids], mesh.layer[self.ids]], 1)
        region, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        out = np.full((len(region), mesh.n_nodes, 6), np.nan)
        for g in range(len(region)):
            rows = np.flatnonzero(inv == g)
            nodes = mesh.elements[self.ids[rows]].ravel()
            acc = np.zeros((mesh.n_nodes, 6))
            cnt = np.zeros(mesh.n_nodes)
            np.add.at(acc, nodes, per_elem[rows].reshape(-1, 6))
            np.add.at(cnt, nodes, 1.0)
            hit = cnt > 0
            out[g, hit] = acc[hit] / cnt[hit, None]
        return out, [tuple(int(v) for v in k) for k in region]


def global_stress(u, sys, ids, quad=FULL):
    """Global-frame stresses, coordinates and frames for elements ``ids``."""
    mesh, dofmap = sys.mesh, sys.dofmap
    coords = mesh.element_coords(ids)
    C = element_material_stiffness(mesh, sys.materials, ids)
    detJ, B, J = element_kinematics(coords, quad, ids)
    ue = np.asarray(u)[dofmap.element_dofs(mesh.elements[ids])]
    eps = np.einsum("eqij,ej->eqi", B, ue)
    Cg = global_stiffness_at_points(C, J, mesh.kind[ids] == MaterialKind.PLY)
    sig = np.einsum("eqij,eqj->eqi", Cg, eps)
    return sig, J


def recover_stress(u, sys, quad=FULL, ids=None):
    """Stresses at the quadrature points rotated into the local (s, l, r) triad."""
    mesh = sys.mesh
    ids = np.arange(mesh.n_elements) if ids is None else np.asarray(ids)
    N, _ = serendipity_basis(quad.points)
    nq = len(quad)
    local = np.empty((len(ids), nq, 6))
    points = np.empty((len(ids), nq, 3))
    flat = np.empty((len(ids), nq, 3))
    frames = np.empty((len(ids), nq, 3, 3))
    for start in range(0, len(ids), BATCH):
        sl = slice(start, start + BATCH)
        batch = ids[sl]
        sig, J = global_stress(u, sys, batch, quad)
        Q = laminate_frames(J)
        M = stress_rotation(np.swapaxes(Q, -1, -2))
        local[sl] = np.einsum("eqij,eqj->eqi", M, sig)
        points[sl] = np.einsum("qa,eai->eqi", N, mesh.element_coords(batch))
        flat[sl] = np.einsum("qa,eai->eqi", N, mesh.flat[mesh.elements[batch]])
        frames[sl] = Q
    return StressField(local, points, flat, frames, quad, mesh, ids)


def camanho_criterion(sigma_r, tau_rs, tau_rl, allowables=FailureAllowables()):
    """Quadratic damage-onset index; compressive sigma_r does not contribute."""
    sr = np.maximum(np.asarray(sigma_r, dtype=float), 0.0)
    # hypot avoids squaring tiny or huge stresses into underflow/overflow
    shear = np.hypot(np.asarray(tau_rs, dtype=float), np.asarray(tau_rl, dtype=float)) / allowables.s13
    return np.hypot(sr / allowables.s33, shear)


def failure_field(field, allowables=FailureAllowables()):
    return camanho_criterion(field.local[..., R], field.local[..., SR], field.local[..., LR], allowables)


@dataclass
class FailureResult:
    F: np.ndarray              # (n_eval, nq)
    elements: np.ndarray       # evaluated element ids
    F_max: float
    element: int
    point: int
    interface: int             # counted from the outer radius, 1-based
    interface_fraction: float  # interface / number of interfaces
    arc_position: float        # normalized s in [0, 1]
    arc_degrees: float         # degrees from the apex
    width_position: float      # l, mm
    radius: float              # unperturbed r, mm
    peak: dict                 # signed peak of each local component, MPa
    M_applied: float
    M_fail: float              # same unit as M_applied

    @property
    def location(self):
        f = self.interface_fraction
        if f > 0.75:
            return "near-inner"
        if f >= 0.25:
            return "mid-thickness"
        return "near-outer"


def evaluate_failure(field, allowables=FailureAllowables(), M_applied=1.0, region="arc"):
    """Criterion on interface elements; M_fail = M_applied / F_max.

    ``region`` "arc" restricts the search to the curved section (away from
    the clamp and the loading layer); "all" uses every interface element.
    Ties are broken by the lowest element index.
    """
    mesh = field.mesh
    ids = field.ids
    sel = mesh.kind[ids] == MaterialKind.INTERFACE
    if region == "arc":
        sel &= mesh.segment[ids] == ARC
    elif region != "all":
        raise ValueError(f"unknown region {region!r}")
    if not np.any(sel):
        raise ConfigurationError("no interface elements to evaluate")
    rows = np.flatnonzero(sel)
    F = failure_field(field, allowables)[rows]
    flat_idx = int(np.argmax(F))
    e_row, q = divmod(flat_idx, F.shape[1])
    F_max = float(F[e_row, q])
    eid = int(ids[rows[e_row]])
    iface = int(mesh.interface_from_outer(mesh.layer[eid]))
    s, l, r = field.flat[rows[e_row], q]
    vals = field.local[rows]
    peak = {}
    for c, name in enumerate(("sigma_s", "sigma_l", "sigma_r", "tau_rl", "tau_rs", "tau_sl")):
        k = int(np.argmax(np.abs(vals[..., c])))
        peak[name] = float(vals[..., c].ravel()[k])
    M_fail = M_applied / F_max if F_max > 0 else float("inf")
    return FailureResult(F, ids[rows], F_max, eid, int(q), iface, iface / mesh.n_interfaces,
                         float(s), float(90.0 * (s - 0.5)), float(l), float(r), peak,
                         float(M_applied), float(M_fail))


def max_displacement(u, dofmap):
    return float(np.linalg.norm(dofmap.node_values(u), axis=1).max())


def extract_line(field, arc_degrees=0.0, width=None, allowables=FailureAllowables()):
    """Through-thickness profile at the element column nearest the position.

    ``arc_degrees`` is measured from the apex of the corner (positive towards
    the loaded limb); ``width`` defaults to mid-width. Samples are the
    quadrature points on the column's centre line, ordered from the outer
    radius inwards.
    """
    mesh = field.mesh
    g = mesh.geometry
    width = 0.5 * g.width if width is None else width
    s_target = 0.5 + arc_degrees / 90.0
    if not (0.0 <= s_target <= 1.0) or not (0.0 <= width <= g.width):
        raise OutOfDomainError(f"position ({arc_degrees} deg, {width} mm) lies outside the curved section")
    centers = mesh.centers_flat[field.ids]
    arc = mesh.segment[field.ids] == ARC
    ds = np.where(arc, np.abs(centers[:, 0] - s_target), np.inf)
    i_best = mesh.grid[field.ids[np.argmin(ds)], 0]
    dl = np.abs(centers[:, 1] - width)
    dl = np.where(mesh.grid[field.ids, 0] == i_best, dl, np.inf)
    j_best = mesh.grid[field.ids[np.argmin(dl)], 1]
    rows = np.flatnonzero((mesh.grid[field.ids, 0] == i_best) & (mesh.grid[field.ids, 1] == j_best))
    # centre-line points: reference xi = eta = 0
    pts = field.quad.points
    line = np.flatnonzero((np.abs(pts[:, 0]) < 1e-12) & (np.abs(pts[:, 1]) < 1e-12))
    if len(line) == 0:
        raise ConfigurationError("quadrature rule has no points on the element centre line")
    F = failure_field(field, allowables)
    records = []
    for row in rows:
        eid = int(field.ids[row])
        tag = int(material_tag_code(mesh.kind[eid], mesh.layer[eid]))
        for q in line:
            sg = field.local[row, q]
            records.append({
                "r_mm": float(field.flat[row, q, 2]),
                "sigma_s": float(sg[S]), "sigma_l": float(sg[L]), "sigma_r": float(sg[R]),
                "tau_sl": float(sg[SL]), "tau_rs": float(sg[SR]), "tau_rl": float(sg[LR]),
                "F": float(F[row, q]), "material_tag": tag,
            })
    records.sort(key=lambda rec: -rec["r_mm"])
    return records


def failure_summary_row(result, angle, u, dofmap):
    """One row shaped like the defect-angle results table."""
    row = {
        "defect_angle_deg": float(angle),
        "max_displacement_mm": max_displacement(u, dofmap),
        "location": result.location,
        "arc_deg_from_apex": result.arc_degrees,
        "width_mm": result.width_position,
        "interface_from_outer": result.interface,
        "F_max": result.F_max,
    }
    row.update({k: v for k, v in result.peak.items()})
    row["M_applied"] = result.M_applied
    row["M_fail"] = result.M_fail
    return row


def nodal_failure(field, allowables=FailureAllowables()):
    """Per-element maximum of F (for VTK cell output)."""
    return failure_field(field, allowables).max(axis=1)

