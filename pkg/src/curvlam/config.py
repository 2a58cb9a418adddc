"""Run configuration: INI-style text with one section per block.

Example::

    [geometry]
    width = 15
    inner_radius = 6.6
    ...
    [wrinkle]
    angle = 8

Unknown keys, malformed values and violated invariants raise
ConfigParseError with the offending line number. Every default filled in
is logged.
"""

import configparser
import dataclasses
import logging
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigParseError, CurvlamError
from .materials import (DEFAULT_CATALOG, STACKING_12, STACKING_39, IsotropicProps, MaterialCatalog,
                        OrthotropicProps, StackingSequence)
from .mesh import CornerGeometry, MeshSpec, WrinkleParams

log = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).parent / "presets"
NAMED_STACKINGS = {"12-ply": STACKING_12.angles, "39-ply": STACKING_39.angles}
PRECONDITIONERS = ("none", "one-level", "geneo")


@dataclass
class GeometryBlock:
    width: float
    limb_length: float
    inner_radius: float
    ply_thickness: float
    interface_thickness: float
    n_plies: int
    resin_edge_width: float = 0.0
    curved: bool = True


@dataclass
class MeshBlock:
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


@dataclass
class StackingBlock:
    angles: tuple


@dataclass
class MaterialsBlock:
    E11: float = DEFAULT_CATALOG.ply.E11
    E22: float = DEFAULT_CATALOG.ply.E22
    E33: float = DEFAULT_CATALOG.ply.E33
    G12: float = DEFAULT_CATALOG.ply.G12
    G13: float = DEFAULT_CATALOG.ply.G13
    G23: float = DEFAULT_CATALOG.ply.G23
    nu12: float = DEFAULT_CATALOG.ply.nu12
    nu13: float = DEFAULT_CATALOG.ply.nu13
    nu23: float = DEFAULT_CATALOG.ply.nu23
    interface_E: float = DEFAULT_CATALOG.interface.E
    interface_nu: float = DEFAULT_CATALOG.interface.nu
    resin_E: float = DEFAULT_CATALOG.resin.E
    resin_nu: float = DEFAULT_CATALOG.resin.nu
    stiff_factor: float = DEFAULT_CATALOG.stiff_factor


@dataclass
class WrinkleBlock:
    amplitude: float | None = None
    angle: float | None = None
    s_def: float = 0.5
    l_def: float | None = None
    r_def: float | None = None
    b1: float = 0.2
    b2_minus: float = 0.5
    b2_plus: float = 0.25
    b3: float = 0.5

    @property
    def active(self):
        return self.amplitude is not None or self.angle is not None


@dataclass
class BoundaryBlock:
    moment: float = 0.0               # N mm per mm width
    periodic: bool = False
    clamp: str = "end-face"


@dataclass
class SolverBlock:
    preconditioner: str = "geneo"
    tol: float = 1e-4
    maxit: int = 2000
    criterion: str = "preconditioned"
    n_sub: int = 4
    overlap: int = 2
    axis: str = "width"
    n_ev: int = 10
    threshold: float | None = None


@dataclass
class OutputBlock:
    directory: str = "out"
    vtk: bool = True
    profiles: tuple = (0.0,)          # arc positions, degrees from the apex
    profile_width: float | None = None
    failure_region: str = "arc"
    s33: float = 61.0
    s13: float = 97.0


@dataclass
class RunConfig:
    geometry: GeometryBlock
    mesh: MeshBlock
    stacking: StackingBlock
    materials: MaterialsBlock = field(default_factory=MaterialsBlock)
    wrinkle: WrinkleBlock = field(default_factory=WrinkleBlock)
    boundary: BoundaryBlock = field(default_factory=BoundaryBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    # -- conversions to library objects
    def corner_geometry(self):
        return CornerGeometry(**dataclasses.asdict(self.geometry))

    def mesh_spec(self):
        return MeshSpec(**dataclasses.asdict(self.mesh))

    def stacking_sequence(self):
        return StackingSequence(tuple(self.stacking.angles))

    def catalog(self):
        m = self.materials
        ply = OrthotropicProps(m.E11, m.E22, m.E33, m.G12, m.G13, m.G23, m.nu12, m.nu13, m.nu23)
        return MaterialCatalog(ply, IsotropicProps(m.interface_E, m.interface_nu),
                               IsotropicProps(m.resin_E, m.resin_nu), m.stiff_factor)

    def wrinkle_template(self):
        w = self.wrinkle
        return WrinkleParams(w.amplitude or 0.0, w.s_def, w.l_def, w.r_def, w.b1, w.b2_minus, w.b2_plus, w.b3)

    def replace(self, **changes):
        """Copy with dotted-key overrides, e.g. ``replace(**{"wrinkle.angle": 8})``."""
        blocks = {f.name: dataclasses.replace(getattr(self, f.name)) for f in fields(self)}
        for key, value in changes.items():
            block, name = key.split(".")
            blocks[block] = dataclasses.replace(blocks[block], **{name: value})
        return RunConfig(**blocks)


BLOCKS = {f.name: f.type for f in fields(RunConfig)}
REQUIRED = ("geometry", "mesh", "stacking")


def _base_type(tp):
    args = getattr(tp, "__args__", None)
    if args:                          # X | None
        return next(a for a in args if a is not type(None)), True
    return tp, False


def _convert(text, tp, default):
    base, optional = _base_type(tp)
    t = text.strip()
    if optional and t.lower() in ("", "none"):
        return None
    if base is bool:
        if t.lower() in ("1", "yes", "true", "on"):
            return True
        if t.lower() in ("0", "no", "false", "off"):
            return False
        raise ValueError(f"expected a boolean, got {t!r}")
    if base is int:
        return int(t)
    if base is float:
        return float(t)
    if base is tuple:
        parts = [p for p in re.split(r"[,\s]+", t) if p]
        return tuple(float(p) for p in parts)
    return t


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _line_index(text):
    """Line numbers of section headers and keys (first occurrence)."""
    sections, keys = {}, {}
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip().lower()
            sections.setdefault(current, n)
            continue
        m = re.match(r"([^=:]+)[=:]", s)
        if m and current is not None:
            keys.setdefault((current, m.group(1).strip().lower()), n)
    return sections, keys


def parse_config(text):
    """Parse and validate configuration text into a RunConfig."""
    sections, keys = _line_index(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigParseError(str(exc).splitlines()[0], getattr(exc, "lineno", None)) from None

    for name in parser.sections():
        if name not in BLOCKS:
            raise ConfigParseError(f"unknown section [{name}]", sections.get(name))
    for name in REQUIRED:
        if not parser.has_section(name):
            raise ConfigParseError(f"missing required section [{name}]", None)

    built = {}
    for block, cls in BLOCKS.items():
        raw = dict(parser.items(block)) if parser.has_section(block) else {}
        built[block] = _build_block(block, cls, raw, sections, keys)

    try:
        cfg = RunConfig(**built)
        validate(cfg, sections, keys)
    except ConfigParseError:
        raise
    except (CurvlamError, ValueError) as exc:
        raise ConfigParseError(str(exc), sections.get("geometry")) from None
    return cfg


def _build_block(block, cls, raw, sections, keys):
    if block == "stacking":
        return _build_stacking(raw, sections, keys)
    known = {f.name.lower(): f for f in fields(cls)}
    values = {}
    for key, text in raw.items():
        if key not in known:
            raise ConfigParseError(f"unknown key {key!r} in [{block}]", keys.get((block, key)))
        f = known[key]
        try:
            values[f.name] = _convert(text, f.type, f.default)
        except ValueError as exc:
            raise ConfigParseError(f"[{block}] {f.name}: {exc}", keys.get((block, key))) from None
    for f in fields(cls):
        if f.name in values:
            continue
        if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigParseError(f"missing required key {f.name!r} in [{block}]", sections.get(block))
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        log.info("config default: %s.%s = %s", block, f.name, _format(default))
    return cls(**values)


def _build_stacking(raw, sections, keys):
    extra = set(raw) - {"angles", "name"}
    if extra:
        key = sorted(extra)[0]
        raise ConfigParseError(f"unknown key {key!r} in [stacking]", keys.get(("stacking", key)))
    if ("angles" in raw) == ("name" in raw):
        raise ConfigParseError("[stacking] needs exactly one of 'angles' or 'name'", sections.get("stacking"))
    if "name" in raw:
        name = raw["name"].strip()
        if name not in NAMED_STACKINGS:
            raise ConfigParseError(f"unknown stacking {name!r}", keys.get(("stacking", "name")))
        return StackingBlock(tuple(NAMED_STACKINGS[name]))
    try:
        return StackingBlock(_convert(raw["angles"], tuple, None))
    except ValueError as exc:
        raise ConfigParseError(f"[stacking] angles: {exc}", keys.get(("stacking", "angles"))) from None


def validate(cfg, sections=None, keys=None):
    """Cross-block invariants; raises ConfigParseError or library errors."""
    sections, keys = sections or {}, keys or {}

    def fail(msg, block, key=None):
        raise ConfigParseError(msg, keys.get((block, key.lower())) if key else sections.get(block))

    w = cfg.wrinkle
    if w.amplitude is not None and w.angle is not None:
        fail("wrinkle: give either amplitude or angle, not both", "wrinkle", "angle")
    if w.angle is not None and not (0.0 <= w.angle < 90.0):
        fail("wrinkle: angle must lie in [0, 90)", "wrinkle", "angle")
    if cfg.solver.preconditioner not in PRECONDITIONERS:
        fail(f"solver: preconditioner must be one of {', '.join(PRECONDITIONERS)}", "solver", "preconditioner")
    if cfg.solver.criterion not in ("preconditioned", "residual"):
        fail("solver: criterion must be 'preconditioned' or 'residual'", "solver", "criterion")
    if cfg.solver.axis not in ("width", "arc"):
        fail("solver: axis must be 'width' or 'arc'", "solver", "axis")
    if cfg.boundary.clamp != "end-face":
        fail("boundary: clamp must be 'end-face'", "boundary", "clamp")
    if cfg.output.failure_region not in ("arc", "all"):
        fail("output: failure_region must be 'arc' or 'all'", "output", "failure_region")
    if len(cfg.stacking.angles) != cfg.geometry.n_plies:
        fail(f"stacking has {len(cfg.stacking.angles)} angles for {cfg.geometry.n_plies} plies", "stacking")
    for block, build in (("geometry", cfg.corner_geometry), ("mesh", cfg.mesh_spec),
                         ("stacking", cfg.stacking_sequence), ("materials", cfg.catalog),
                         ("wrinkle", cfg.wrinkle_template)):
        try:
            build()
        except (CurvlamError, ValueError) as exc:
            fail(f"{block}: {exc}", block)


def serialize(cfg):
    """Text form with every field written out; parse(serialize(c)) == c."""
    out = []
    for block in BLOCKS:
        out.append(f"[{block}]")
        obj = getattr(cfg, block)
        for f in fields(obj):
            out.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)


def load_config(path):
    return parse_config(Path(path).read_text())


def preset_names():
    return sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))


def load_preset(name):
    path = PRESET_DIR / (name if name.endswith(".cfg") else name + ".cfg")
    if not path.exists():
        raise ConfigParseError(f"no preset named {name!r} (available: {', '.join(preset_names())})", None)
    return parse_config(path.read_text())
