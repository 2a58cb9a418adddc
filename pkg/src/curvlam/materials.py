"""Stiffness tensors for plies, resin interfaces and the loading layer.

Voigt ordering is fixed to (11, 22, 33, 23, 13, 12) with engineering shear
strains. In the laminate frame axis 1 is the arc direction s, axis 2 the
width l and axis 3 the through-thickness direction r. A ply at 0 degrees has
its fibres along s.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import MaterialError, MaterialLookupError

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


class MaterialKind(IntEnum):
    PLY = 0
    INTERFACE = 1
    RESIN = 2
    STIFF = 3


@dataclass(frozen=True)
class OrthotropicProps:
    E11: float
    E22: float
    E33: float
    G12: float
    G13: float
    G23: float
    nu12: float
    nu13: float
    nu23: float


@dataclass(frozen=True)
class IsotropicProps:
    E: float
    nu: float


@dataclass(frozen=True)
class MaterialCatalog:
    """Material data for one model, moduli in GPa."""

    ply: OrthotropicProps
    interface: IsotropicProps
    resin: IsotropicProps
    stiff_factor: float = 1.0e3


# default ply/interface/resin properties, GPa
DEFAULT_PLY = OrthotropicProps(
    E11=162.0, E22=10.0, E33=10.0, G12=5.2, G13=5.2, G23=3.5,
    nu12=0.35, nu13=0.35, nu23=0.5,
)
DEFAULT_INTERFACE = IsotropicProps(E=10.0, nu=0.35)
DEFAULT_RESIN = IsotropicProps(E=8.5, nu=0.35)
DEFAULT_CATALOG = MaterialCatalog(DEFAULT_PLY, DEFAULT_INTERFACE, DEFAULT_RESIN)


def _check_spd(M, what):
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * np.abs(M).max()):
        raise MaterialError(f"{what} is not symmetric")
    ev = np.linalg.eigvalsh(M)
    if ev[0] <= 1e-10 * ev[-1]:
        raise MaterialError(f"{what} is not positive definite (min eigenvalue {ev[0]:.3e})")


def orthotropic_compliance(p):
    S = np.zeros((6, 6))
    S[0, 0] = 1.0 / p.E11
    S[1, 1] = 1.0 / p.E22
    S[2, 2] = 1.0 / p.E33
    S[0, 1] = S[1, 0] = -p.nu12 / p.E11
    S[0, 2] = S[2, 0] = -p.nu13 / p.E11
    S[1, 2] = S[2, 1] = -p.nu23 / p.E22
    S[3, 3] = 1.0 / p.G23
    S[4, 4] = 1.0 / p.G13
    S[5, 5] = 1.0 / p.G12
    return S


def orthotropic_stiffness(p):
    """Invert the engineering-constant compliance of an orthotropic ply.

    Raises MaterialError when the constants do not give a symmetric positive
    definite compliance.
    """
    moduli = (p.E11, p.E22, p.E33, p.G12, p.G13, p.G23)
    if min(moduli) <= 0:
        raise MaterialError("all moduli must be positive")
    S = orthotropic_compliance(p)
    _check_spd(S, "compliance")
    C = np.linalg.inv(S)
    return 0.5 * (C + C.T)


def isotropic_stiffness(p):
    if p.E <= 0:
        raise MaterialError("E must be positive")
    if not -1.0 < p.nu < 0.5:
        raise MaterialError(f"Poisson ratio {p.nu} outside (-1, 0.5)")
    lam = p.E * p.nu / ((1 + p.nu) * (1 - 2 * p.nu))
    mu = p.E / (2 * (1 + p.nu))
    C = np.zeros((6, 6))
    C[:3, :3] = lam
    C[[0, 1, 2], [0, 1, 2]] = lam + 2 * mu
    C[[3, 4, 5], [3, 4, 5]] = mu
    return C


_I = np.array([p[0] for p in VOIGT_PAIRS])
_J = np.array([p[1] for p in VOIGT_PAIRS])


def stress_rotation(R):
    """6x6 Voigt operator M with sigma' = M sigma for sigma' = R sigma R^T.

    Works on stacks: R may have shape (..., 3, 3). Stiffness transforms as
    M C M^T under the engineering-strain convention.
    """
    R = np.asarray(R, dtype=float)
    Ri_k = R[..., _I[:, None], _I[None, :]]
    Rj_l = R[..., _J[:, None], _J[None, :]]
    Ri_l = R[..., _I[:, None], _J[None, :]]
    Rj_k = R[..., _J[:, None], _I[None, :]]
    M = Ri_k * Rj_l
    shear = _I != _J
    M[..., :, shear] += (Ri_l * Rj_k)[..., :, shear]
    return M


def rotation_about_normal(angle_deg):
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate_stiffness(C, angle_deg):
    """Rotate a stiffness about the laminate normal (axis 3) by a ply angle."""
    M = stress_rotation(rotation_about_normal(angle_deg))
    Cr = M @ C @ M.T
    return 0.5 * (Cr + Cr.T)


@dataclass(frozen=True)
class StackingSequence:
    """Ply angles in degrees, innermost ply first."""

    angles: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        for a in self.angles:
            if not -90.0 < a <= 90.0:
                raise MaterialError(f"ply angle {a} outside (-90, 90]")

    def __len__(self):
        return len(self.angles)

    def __getitem__(self, i):
        return self.angles[i]


# [+-45/90/0/-+45/-+45/0/90/+-45]
STACKING_12 = StackingSequence(
    (45, -45, 90, 0, -45, 45, -45, 45, 0, 90, 45, -45)
)


def _expand(groups):
    out = []
    for g in groups:
        if isinstance(g, tuple):
            angles, repeat = g
            out.extend(angles * repeat)
        else:
            out.extend(g)
    return out


# [[-+45/90/0]_2/[-+45]_2/90/-+45/90/0/-+45/0/+-45/0/90/+-45/90/[+-45]_2/[0/90/+-45]_2]
STACKING_39 = StackingSequence(tuple(_expand([
    ([-45, 45, 90, 0], 2), ([-45, 45], 2), [90], [-45, 45], [90], [0],
    [-45, 45], [0], [45, -45], [0], [90], [45, -45], [90], ([45, -45], 2),
    ([0, 90, 45, -45], 2),
])))


class MaterialTable:
    """Caches the laminate-frame stiffness for each (kind, layer) tag."""

    def __init__(self, catalog, stacking):
        self.catalog = catalog
        self.stacking = stacking
        self._cache = {}

    def __call__(self, kind, layer=0):
        key = (int(kind), int(layer))
        if key not in self._cache:
            self._cache[key] = material_for_tag(key[0], key[1], self.stacking, self.catalog)
        return self._cache[key]

    def is_isotropic(self, kind):
        return int(kind) != MaterialKind.PLY


def material_for_tag(kind, layer, stacking, catalog):
    """Laminate-frame stiffness (GPa) for an element tag.

    ``layer`` is the ply index for PLY elements and ignored otherwise.
    """
    try:
        kind = MaterialKind(int(kind))
    except ValueError:
        raise MaterialLookupError(f"unknown material kind {kind!r}") from None
    if kind is MaterialKind.PLY:
        if not 0 <= layer < len(stacking):
            raise MaterialLookupError(f"ply index {layer} outside stacking of {len(stacking)}")
        return rotate_stiffness(orthotropic_stiffness(catalog.ply), stacking[layer])
    if kind is MaterialKind.INTERFACE:
        return isotropic_stiffness(catalog.interface)
    if kind is MaterialKind.RESIN:
        return isotropic_stiffness(catalog.resin)
    return catalog.stiff_factor * isotropic_stiffness(catalog.resin)
