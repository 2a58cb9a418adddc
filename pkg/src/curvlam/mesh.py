"""Layered hexahedral meshes of flat and curved laminates with wrinkles.

The mesh is generated on a flat parametric block (s, l, r), the radial
coordinate is perturbed by a localised sech^2 wrinkle, and the block is then
mapped onto an L-shaped corner: a quarter-circle arc joined to two straight
limbs. The arc parameter s is normalized to [0, 1] over the quarter turn;
limb points carry s < 0 (clamped limb) or s > 1 (loaded limb), scaled by the
mid-surface arc length so that the flat block is the developed laminate.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .element import FULL, REF_NODES, jacobians, serendipity_basis
from .errors import InvalidParameterError, MeshTanglingError, NoConvergenceError, OutOfDomainError
from .materials import MaterialKind

# segment codes along s
CLAMPED_LIMB, ARC, LOADED_LIMB, STIFF_LAYER = 0, 1, 2, 3


@dataclass(frozen=True)
class CornerGeometry:
    """Corner dimensions in mm. ``curved=False`` gives the developed flat part."""

    width: float
    limb_length: float
    inner_radius: float
    ply_thickness: float
    interface_thickness: float
    n_plies: int
    resin_edge_width: float = 0.0
    curved: bool = True

    def __post_init__(self):
        for name in ("width", "limb_length", "inner_radius", "ply_thickness", "interface_thickness"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.n_plies < 1:
            raise InvalidParameterError("n_plies must be at least 1")
        if not 0 <= self.resin_edge_width < self.width / 2:
            raise InvalidParameterError("resin_edge_width must lie in [0, W/2)")

    @property
    def total_thickness(self):
        return self.n_plies * self.ply_thickness + (self.n_plies - 1) * self.interface_thickness

    @property
    def mid_radius(self):
        return self.inner_radius + 0.5 * self.total_thickness

    @property
    def arc_length(self):
        """Mid-surface length of the quarter arc; scales limb s-coordinates."""
        return 0.5 * math.pi * self.mid_radius


# 12-ply verification corner and 39-ply wrinkle corner
CORNER_12 = CornerGeometry(15.0, 3.0, 6.6, 0.23, 0.02, 12, resin_edge_width=2.0)
CORNER_39 = CornerGeometry(52.0, 10.0, 22.0, 0.24, 0.015, 39)


# default defect depth, as a fraction of the thickness above the inner radius
R_DEF_FRACTION = 0.1


@dataclass(frozen=True)
class WrinkleParams:
    """Sech^2 wrinkle. ``s_def`` is in normalized arc units, l/r in mm.

    Missing centre coordinates are filled by :meth:`resolve`.
    """

    amplitude: float
    s_def: float = 0.5
    l_def: float | None = None
    r_def: float | None = None
    b1: float = 0.2
    b2_minus: float = 0.5
    b2_plus: float = 0.25
    b3: float = 0.5

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidParameterError("wrinkle amplitude must be non-negative")
        if min(self.b1, self.b2_minus, self.b2_plus, self.b3) <= 0:
            raise InvalidParameterError("wrinkle extents b must be positive")

    def resolve(self, geometry):
        l_def = 0.5 * geometry.width if self.l_def is None else self.l_def
        r_def = (geometry.inner_radius + R_DEF_FRACTION * geometry.total_thickness
                 if self.r_def is None else self.r_def)
        return replace(self, l_def=l_def, r_def=r_def)


@dataclass(frozen=True)
class MeshSpec:
    n_elems_arc: int
    n_elems_width: int
    n_elems_per_ply: int = 1
    n_elems_per_interface: int = 1
    bias_width: float = 1.0
    bias_layer: float = 1.0
    bias_defect: float = 1.0
    n_elems_limb: int | None = None
    n_elems_resin_edge: int = 2
    stiff_layer_thickness: float = 0.5

    def __post_init__(self):
        counts = (self.n_elems_arc, self.n_elems_width, self.n_elems_per_ply,
                  self.n_elems_per_interface, self.n_elems_resin_edge)
        if min(counts) < 1 or (self.n_elems_limb is not None and self.n_elems_limb < 0):
            raise InvalidParameterError("element counts must be at least 1")
        if min(self.bias_width, self.bias_layer, self.bias_defect) < 1:
            raise InvalidParameterError("bias ratios must be >= 1")
        if self.stiff_layer_thickness < 0:
            raise InvalidParameterError("stiff_layer_thickness must be >= 0")

    def limb_elements(self, geometry):
        """Limb element count; the default keeps limb aspect ratio below 20.

        An explicit count of 0 omits both limbs.
        """
        if self.n_elems_limb is not None:
            return self.n_elems_limb
        h = geometry.ply_thickness / self.n_elems_per_ply
        return max(1, math.ceil(geometry.limb_length / (20.0 * h)))


# ----------------------------------------------------------------------------
# 1-D grading

def _progression(n, bias, mode):
    k = np.arange(n)
    if mode == "toward-one-end":
        m, expo = n - 1, k
    elif mode == "toward-both-ends":
        m = (n - 1) // 2
        expo = np.minimum(k, n - 1 - k)
    elif mode == "toward-center":
        m = (n - 1) // 2
        expo = m - np.minimum(k, n - 1 - k)
    else:
        raise InvalidParameterError(f"unknown grading mode {mode!r}")
    if m == 0:
        return np.ones(n)
    return bias ** (expo / m)


def grade_1d(n, length, bias=1.0, mode="toward-one-end"):
    """Node coordinates 0..length for n elements in geometric progression.

    ``bias`` is the ratio of largest to smallest element width. The modes
    refine toward x=0, toward both ends, or toward the centre. When the mode
    leaves no freedom (n=1, or n=2 for the symmetric modes) the widths are
    uniform.
    """
    if n < 1 or not length > 0 or bias < 1:
        raise InvalidParameterError(f"invalid grading n={n}, length={length}, bias={bias}")
    w = _progression(int(n), float(bias), mode)
    x = np.concatenate([[0.0], np.cumsum(w)])
    x *= length / x[-1]
    x[-1] = length
    return x


def grade_toward_point(n, length, bias, point):
    """Refine toward an interior point, splitting elements in proportion."""
    if not 0 < point < length or n < 2:
        return grade_1d(n, length, bias, "toward-center")
    n_left = min(max(1, round(n * point / length)), n - 1)
    left = grade_1d(n_left, point, bias, "toward-one-end")
    left = point - left[::-1]
    right = point + grade_1d(n - n_left, length - point, bias, "toward-one-end")
    return np.concatenate([left, right[1:]])


# ----------------------------------------------------------------------------
# wrinkle and mapping

def sech2(x):
    a = np.exp(-2.0 * np.abs(np.asarray(x, dtype=float)))
    return 4.0 * a / (1.0 + a) ** 2


def wrinkle_offset(s, l, r, p, geometry):
    """Radial offset f(s, l, r) in mm of a wrinkle ``p`` (resolved)."""
    p = p.resolve(geometry)
    s, l, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, l, r)))
    b2 = np.where(r < p.r_def, p.b2_minus, p.b2_plus)
    return (p.amplitude
            * sech2(math.pi * (s - p.s_def) / p.b1)
            * sech2(math.pi * (r - p.r_def) / (geometry.inner_radius * b2))
            * sech2(math.pi * (l - p.l_def) / (geometry.width * p.b3)))


def wrinkle_slope(s, p, geometry):
    """Slope df/d(arc length) on the l=l_def, r=r_def line."""
    p = p.resolve(geometry)
    x = math.pi * (np.asarray(s, dtype=float) - p.s_def) / p.b1
    dfds = -(2.0 * math.pi / p.b1) * np.tanh(x) * p.amplitude * sech2(x)
    return dfds / (0.5 * math.pi * p.r_def)


def max_wrinkle_angle(p, geometry):
    """Steepest wrinkle angle in degrees.

    max |tanh x sech^2 x| = 2 / (3 sqrt 3), attained at tanh x = 1/sqrt 3.
    """
    p = p.resolve(geometry)
    peak = 2.0 / (3.0 * math.sqrt(3.0))
    slope = (2.0 * math.pi / p.b1) * p.amplitude * peak / (0.5 * math.pi * p.r_def)
    return math.degrees(math.atan(slope))


def amplitude_for_angle(target_deg, template, geometry, tol_deg=1e-4, max_steps=200):
    """Wrinkle amplitude whose steepest angle equals ``target_deg``.

    Monotone bisection on the amplitude; the upper bracket is grown by
    doubling. Raises NoConvergenceError if the bracket cannot be closed.
    """
    if target_deg == 0:
        return 0.0
    if not 0 < target_deg < 90:
        raise InvalidParameterError("target angle must lie in (0, 90) degrees")

    def angle(d):
        return max_wrinkle_angle(replace(template, amplitude=d), geometry)

    lo, hi = 0.0, geometry.total_thickness
    steps = 0
    while angle(hi) < target_deg:
        hi *= 2.0
        steps += 1
        if steps >= max_steps or not math.isfinite(hi):
            raise NoConvergenceError(f"angle {target_deg} deg not reachable")
    while steps < max_steps:
        mid = 0.5 * (lo + hi)
        a = angle(mid)
        if abs(a - target_deg) < tol_deg:
            return mid
        if a < target_deg:
            lo = mid
        else:
            hi = mid
        steps += 1
    raise NoConvergenceError(f"bisection for {target_deg} deg did not converge in {max_steps} steps")


def map_to_curved(s_hat, l_hat, r_hat, geometry):
    """Map arc points (s_hat in [0, 1]) onto the quarter circle."""
    s_hat, l_hat, r_hat = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s_hat, l_hat, r_hat)))
    eps = 1e-12
    if np.any(s_hat < -eps) or np.any(s_hat > 1 + eps) or np.any(r_hat <= 0):
        raise OutOfDomainError("point outside the curved parametric block")
    if np.any(l_hat < -eps * geometry.width) or np.any(l_hat > geometry.width * (1 + eps)):
        raise OutOfDomainError("width coordinate outside [0, W]")
    t = 0.5 * math.pi * s_hat
    L = geometry.limb_length
    return np.stack([L + r_hat * np.sin(t), l_hat, r_hat * np.cos(t)], axis=-1)


def map_flat_to_part(s, l, r_hat, geometry):
    """Map the perturbed flat block, limbs included, to the final part."""
    s, l, r_hat = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, l, r_hat)))
    L, S = geometry.limb_length, geometry.arc_length
    out = np.empty(s.shape + (3,))
    out[..., 1] = l
    if not geometry.curved:
        out[..., 0] = L + s * S
        out[..., 2] = r_hat
        return out
    limb_a = s < 0
    limb_b = s > 1
    arc = ~(limb_a | limb_b)
    out[arc] = map_to_curved(s[arc], l[arc], r_hat[arc], geometry)
    a = -s[limb_a] * S
    out[limb_a, 0] = L - a
    out[limb_a, 2] = r_hat[limb_a]
    b = (s[limb_b] - 1.0) * S
    out[limb_b, 0] = L + r_hat[limb_b]
    out[limb_b, 2] = -b
    return out


# ----------------------------------------------------------------------------
# mesh

@dataclass
class StructuredMesh:
    """Immutable layered mesh of 20-node hexahedra.

    Elements are numbered lexicographically by (layer, width, arc) index and
    so are the nodes of the quadratic lattice.
    """

    geometry: CornerGeometry
    spec: MeshSpec
    nodes: np.ndarray           # (N, 3) mapped coordinates
    flat: np.ndarray            # (N, 3) unperturbed (s, l, r)
    lattice: np.ndarray         # (N, 3) quadratic lattice index (i2, j2, k2)
    elements: np.ndarray        # (E, 20)
    kind: np.ndarray            # (E,) MaterialKind
    layer: np.ndarray           # (E,) ply or interface index, innermost = 0
    segment: np.ndarray         # (E,) CLAMPED_LIMB / ARC / LOADED_LIMB / STIFF_LAYER
    grid: np.ndarray            # (E, 3) element index (i, j, k) along (s, l, r)
    centers_flat: np.ndarray    # (E, 3)
    s_nodes: np.ndarray
    l_nodes: np.ndarray
    r_nodes: np.ndarray
    layers: list                # (kind, index, r0, r1) innermost first
    wrinkle: WrinkleParams | None = None
    stacking: object = None
    _extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in ("nodes", "flat", "lattice", "elements", "kind", "layer", "segment", "grid", "centers_flat"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def shape(self):
        """Element counts along (s, l, r)."""
        return len(self.s_nodes) - 1, len(self.l_nodes) - 1, len(self.r_nodes) - 1

    @property
    def n_interfaces(self):
        return self.geometry.n_plies - 1

    def node_set(self, name):
        """Node ids on a named boundary.

        Names: clamped, loaded, edge_l0, edge_lW, inner, outer, boundary.
        """
        i2, j2, k2 = self.lattice.T
        ns2, nl2, nr2 = (2 * n for n in self.shape)
        sets = {
            "clamped": i2 == 0,
            "loaded": i2 == ns2,
            "edge_l0": j2 == 0,
            "edge_lW": j2 == nl2,
            "inner": k2 == 0,
            "outer": k2 == nr2,
        }
        if name == "boundary":
            mask = np.logical_or.reduce(list(sets.values()))
        else:
            mask = sets[name]
        return np.flatnonzero(mask)

    def interface_from_outer(self, layer_index):
        """Interface number counted from the outer radius, 1-based."""
        return self.n_interfaces - np.asarray(layer_index)

    def element_coords(self, ids=None):
        el = self.elements if ids is None else self.elements[ids]
        return self.nodes[el]

    def min_jacobian(self, batch=2000):
        """(element, value) of the smallest det J over all quadrature points."""
        _, dN = serendipity_basis(FULL.points)
        worst = (-1, np.inf)
        for start in range(0, self.n_elements, batch):
            detj = np.linalg.det(jacobians(self.nodes[self.elements[start:start + batch]], dN))
            m = detj.min(axis=1)
            i = int(np.argmin(m))
            if m[i] < worst[1]:
                worst = (start + i, float(m[i]))
        return worst


def expected_element_count(geometry, spec):
    """Closed-form element counts: (curved region, whole part)."""
    n_r = geometry.n_plies * spec.n_elems_per_ply + (geometry.n_plies - 1) * spec.n_elems_per_interface
    n_l = spec.n_elems_width + (2 * spec.n_elems_resin_edge if geometry.resin_edge_width > 0 else 0)
    n_limb = spec.limb_elements(geometry)
    n_s = spec.n_elems_arc + 2 * n_limb + (1 if spec.stiff_layer_thickness > 0 else 0)
    return spec.n_elems_arc * n_l * n_r, n_s * n_l * n_r


def _s_grid(geometry, spec, wrinkle):
    S = geometry.arc_length
    n_limb = spec.limb_elements(geometry)
    L = geometry.limb_length if n_limb else 0.0
    if wrinkle is not None and spec.bias_defect > 1:
        arc = grade_toward_point(spec.n_elems_arc, 1.0, spec.bias_defect, wrinkle.s_def)
    else:
        arc = grade_1d(spec.n_elems_arc, 1.0)
    t = spec.stiff_layer_thickness
    parts = [arc]
    seg = [np.full(spec.n_elems_arc, ARC)]
    if n_limb:
        if t >= L:
            raise InvalidParameterError("stiff layer must be thinner than the limb")
        parts = [-grade_1d(n_limb, L)[::-1][:-1] / S, arc, 1.0 + grade_1d(n_limb, L - t)[1:] / S]
        seg = [np.full(n_limb, CLAMPED_LIMB), seg[0], np.full(n_limb, LOADED_LIMB)]
    if t > 0:
        parts.append([1.0 + max(L, t) / S])
        seg.append([STIFF_LAYER])
    return np.concatenate(parts), np.concatenate(seg)


def _l_grid(geometry, spec, wrinkle):
    W, e = geometry.width, geometry.resin_edge_width
    n = spec.n_elems_width
    if e > 0:
        ne = spec.n_elems_resin_edge
        core = e + grade_1d(n, W - 2 * e, spec.bias_width, "toward-both-ends")
        left = grade_1d(ne, e)
        right = W - e + grade_1d(ne, e)
        grid = np.concatenate([left[:-1], core, right[1:]])
        resin = np.concatenate([np.ones(ne, bool), np.zeros(n, bool), np.ones(ne, bool)])
        return grid, resin
    if wrinkle is not None and spec.bias_defect > 1:
        grid = grade_toward_point(n, W, spec.bias_defect, wrinkle.l_def)
    else:
        grid = grade_1d(n, W, spec.bias_width, "toward-both-ends")
    return grid, np.zeros(n, bool)


def _r_grid(geometry, spec):
    R = geometry.inner_radius
    pieces, layers, kinds, idx = [np.array([R])], [], [], []
    r0 = R
    for p in range(geometry.n_plies):
        stack = [(MaterialKind.PLY, p, geometry.ply_thickness, spec.n_elems_per_ply)]
        if p < geometry.n_plies - 1:
            stack.append((MaterialKind.INTERFACE, p, geometry.interface_thickness, spec.n_elems_per_interface))
        for kind, index, t, n in stack:
            x = r0 + grade_1d(n, t, spec.bias_layer, "toward-both-ends")
            pieces.append(x[1:])
            layers.append((kind, index, r0, r0 + t))
            kinds.extend([kind] * n)
            idx.extend([index] * n)
            r0 += t
    grid = np.concatenate(pieces)
    grid[-1] = R + geometry.total_thickness
    return grid, layers, np.array(kinds), np.array(idx)


def _quadratic(x):
    q = np.empty(2 * len(x) - 1)
    q[0::2] = x
    q[1::2] = 0.5 * (x[:-1] + x[1:])
    return q


def build_mesh(geometry, spec, stacking, wrinkle=None, check=True):
    """Build the layered, optionally wrinkled and curved, 20-node mesh.

    Raises MeshTanglingError naming the element when a wrinkle inverts an
    element.
    """
    if stacking is not None and len(stacking) != geometry.n_plies:
        raise InvalidParameterError(
            f"stacking has {len(stacking)} plies, geometry expects {geometry.n_plies}")
    if wrinkle is not None:
        wrinkle = wrinkle.resolve(geometry)
    s_nodes, seg_s = _s_grid(geometry, spec, wrinkle)
    l_nodes, resin_l = _l_grid(geometry, spec, wrinkle)
    r_nodes, layers, kind_r, index_r = _r_grid(geometry, spec)
    ns, nl, nr = len(s_nodes) - 1, len(l_nodes) - 1, len(r_nodes) - 1

    sq, lq, rq = _quadratic(s_nodes), _quadratic(l_nodes), _quadratic(r_nodes)
    K2, J2, I2 = np.meshgrid(np.arange(2 * nr + 1), np.arange(2 * nl + 1), np.arange(2 * ns + 1), indexing="ij")
    valid = (K2 % 2) + (J2 % 2) + (I2 % 2) <= 1
    lat_id = np.full(valid.shape, -1, dtype=np.int64)
    lat_id[valid] = np.arange(int(valid.sum()))
    lattice = np.stack([I2[valid], J2[valid], K2[valid]], axis=1)
    flat = np.stack([sq[lattice[:, 0]], lq[lattice[:, 1]], rq[lattice[:, 2]]], axis=1)

    r_hat = flat[:, 2].copy()
    if wrinkle is not None and wrinkle.amplitude > 0:
        r_hat += wrinkle_offset(flat[:, 0], flat[:, 1], flat[:, 2], wrinkle, geometry)
    nodes = map_flat_to_part(flat[:, 0], flat[:, 1], r_hat, geometry)

    Ke, Je, Ie = np.meshgrid(np.arange(nr), np.arange(nl), np.arange(ns), indexing="ij")
    grid = np.stack([Ie.ravel(), Je.ravel(), Ke.ravel()], axis=1)
    off = REF_NODES.astype(int)
    li = 2 * grid[:, None, 0] + 1 + off[None, :, 0]
    lj = 2 * grid[:, None, 1] + 1 + off[None, :, 1]
    lk = 2 * grid[:, None, 2] + 1 + off[None, :, 2]
    elements = lat_id[lk, lj, li]

    kind = kind_r[grid[:, 2]].astype(np.int64)
    layer = index_r[grid[:, 2]].astype(np.int64)
    segment = seg_s[grid[:, 0]].astype(np.int64)
    kind[resin_l[grid[:, 1]]] = MaterialKind.RESIN
    kind[segment == STIFF_LAYER] = MaterialKind.STIFF
    centers = np.stack([
        0.5 * (s_nodes[grid[:, 0]] + s_nodes[grid[:, 0] + 1]),
        0.5 * (l_nodes[grid[:, 1]] + l_nodes[grid[:, 1] + 1]),
        0.5 * (r_nodes[grid[:, 2]] + r_nodes[grid[:, 2] + 1]),
    ], axis=1)

    mesh = StructuredMesh(
        geometry=geometry, spec=spec, nodes=nodes, flat=flat, lattice=lattice,
        elements=elements, kind=kind, layer=layer, segment=segment, grid=grid,
        centers_flat=centers, s_nodes=s_nodes, l_nodes=l_nodes, r_nodes=r_nodes,
        layers=layers, wrinkle=wrinkle, stacking=stacking,
    )
    if check:
        e, detj = mesh.min_jacobian()
        if detj <= 0:
            raise MeshTanglingError(e, detj)
    return mesh
