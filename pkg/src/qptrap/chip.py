"""Chip geometry: film regions on top of a substrate box, injector and qubits.

Coordinates are centered on the chip: x in [-width/2, width/2], y in
[-height/2, height/2]; the film-covered top surface sits at
z = substrate_thickness and the backside at z = 0. Films have no thickness
in the geometry; they only change what happens to a phonon that reaches the
top surface under them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import yaml

from .transmon import Cosine, MultiChannel, ResonantABS, TransmonParams

QUBIT_LABELS = ("Near_Al", "Near_NbTiN", "Far_Al", "Far_NbTiN")


class ConfigError(ValueError):
    """Configuration text could not be parsed or is incomplete."""


class LayoutError(ValueError):
    """Layout violates a geometric or physical invariant."""


@dataclass(frozen=True)
class FilmMaterial:
    name: str
    gap: float  # µeV, 0 for a normal metal
    thickness: float  # nm
    absorb_prob: float
    recombine_reemit_prob: float

    def __post_init__(self):
        if self.gap < 0:
            raise LayoutError(f"material {self.name}: gap must be >= 0")
        if not 0 <= self.absorb_prob <= 1:
            raise LayoutError(f"material {self.name}: absorb_prob must lie in [0, 1]")
        if not 0 <= self.recombine_reemit_prob <= 1:
            raise LayoutError(f"material {self.name}: recombine_reemit_prob must lie in [0, 1]")
        if not self.thickness > 0:
            raise LayoutError(f"material {self.name}: thickness must be positive")

    @property
    def is_normal(self) -> bool:
        return self.gap == 0


@dataclass(frozen=True)
class Region:
    name: str
    rect: tuple[float, float, float, float]  # x0, y0, x1, y1 in mm
    material: FilmMaterial

    def __post_init__(self):
        x0, y0, x1, y1 = self.rect
        if not (x1 > x0 and y1 > y0):
            raise LayoutError(f"region {self.name}: rectangle has no area")

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.rect
        return (x1 - x0) * (y1 - y0)

    def contains(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= x < x1 and y0 <= y < y1


@dataclass(frozen=True)
class QubitSite:
    label: str
    position: tuple[float, float]
    sense_radius: float
    nanowire_gap: float  # µeV
    transmon: TransmonParams

    def __post_init__(self):
        if not self.sense_radius > 0:
            raise LayoutError(f"qubit {self.label}: sense_radius must be positive")
        if not self.nanowire_gap > 0:
            raise LayoutError(f"qubit {self.label}: nanowire_gap must be positive")


@dataclass(frozen=True)
class LayoutArrays:
    """Flat arrays consumed by the compiled transport kernel."""

    rects: np.ndarray
    region_material: np.ndarray
    mat_gap: np.ndarray
    mat_absorb: np.ndarray
    mat_reemit: np.ndarray
    qubit_pos: np.ndarray
    qubit_radius2: np.ndarray
    qubit_threshold: np.ndarray


@dataclass(frozen=True)
class ChipLayout:
    width: float
    height: float
    substrate_thickness: float
    sound_speed: float
    surface_specularity: float
    backside_absorb_prob: float
    regions: tuple[Region, ...]
    injector_pos: tuple[float, float]
    qubits: tuple[QubitSite, ...]
    materials: dict[str, FilmMaterial] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "qubits", tuple(self.qubits))
        mats = dict(self.materials)
        for r in self.regions:
            mats.setdefault(r.material.name, r.material)
        object.__setattr__(self, "materials", mats)
        validate_layout(self)

    def in_bounds(self, x: float, y: float) -> bool:
        return abs(x) <= self.width / 2 and abs(y) <= self.height / 2

    def qubit(self, label: str) -> QubitSite:
        for q in self.qubits:
            if q.label == label:
                return q
        raise KeyError(label)

    @property
    def material_names(self) -> list[str]:
        return list(self.materials)

    @cached_property
    def arrays(self) -> LayoutArrays:
        names = self.material_names
        mats = [self.materials[n] for n in names]
        return LayoutArrays(
            rects=np.array([r.rect for r in self.regions], dtype=float).reshape(-1, 4),
            region_material=np.array([names.index(r.material.name) for r in self.regions], dtype=np.int64),
            mat_gap=np.array([m.gap for m in mats], dtype=float),
            mat_absorb=np.array([m.absorb_prob for m in mats], dtype=float),
            mat_reemit=np.array([m.recombine_reemit_prob for m in mats], dtype=float),
            qubit_pos=np.array([q.position for q in self.qubits], dtype=float).reshape(-1, 2),
            qubit_radius2=np.array([q.sense_radius**2 for q in self.qubits], dtype=float),
            qubit_threshold=np.array([2.0 * q.nanowire_gap for q in self.qubits], dtype=float),
        )

    def replace_material(self, name: str, **changes) -> "ChipLayout":
        """Copy of the layout with fields of one material changed everywhere."""
        import dataclasses

        old = self.materials[name]
        new = dataclasses.replace(old, **changes)
        regions = [
            dataclasses.replace(r, material=new) if r.material.name == name else r
            for r in self.regions
        ]
        mats = dict(self.materials)
        mats[name] = new
        return dataclasses.replace(self, regions=tuple(regions), materials=mats)


def _overlap(a, b):
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return min(ax1, bx1) > max(ax0, bx0) and min(ay1, by1) > max(ay0, by0)


def validate_layout(layout: ChipLayout) -> None:
    """Raise :class:`LayoutError` naming the first offending region or site."""
    w2, h2 = layout.width / 2, layout.height / 2
    if not (layout.width > 0 and layout.height > 0 and layout.substrate_thickness > 0):
        raise LayoutError("chip dimensions must be positive")
    if not layout.sound_speed > 0:
        raise LayoutError("sound speed must be positive")
    for name, p in (
        ("surface_specularity", layout.surface_specularity),
        ("backside_absorb_prob", layout.backside_absorb_prob),
    ):
        if not 0 <= p <= 1:
            raise LayoutError(f"{name} must lie in [0, 1]")
    eps = 1e-12
    for r in layout.regions:
        x0, y0, x1, y1 = r.rect
        if x0 < -w2 - eps or x1 > w2 + eps or y0 < -h2 - eps or y1 > h2 + eps:
            raise LayoutError(f"region {r.name} extends outside the chip")
    for i, a in enumerate(layout.regions):
        for b in layout.regions[i + 1 :]:
            if _overlap(a.rect, b.rect):
                raise LayoutError(f"regions {a.name} and {b.name} overlap")
    if not layout.in_bounds(*layout.injector_pos):
        raise LayoutError("injector lies outside the chip")
    seen = set()
    for q in layout.qubits:
        if q.label in seen:
            raise LayoutError(f"duplicate qubit label {q.label}")
        seen.add(q.label)
        if not layout.in_bounds(*q.position):
            raise LayoutError(f"qubit {q.label} lies outside the chip")


def film_at(layout: ChipLayout, point) -> Optional[FilmMaterial]:
    """Material covering the top surface at ``point``, or None for bare substrate.

    Rectangles are half-open (``[x0, x1) x [y0, y1)``) so shared edges belong
    to exactly one region.
    """
    x, y = float(point[0]), float(point[1])
    if not layout.in_bounds(x, y):
        raise LayoutError(f"point ({x}, {y}) lies outside the chip")
    for r in layout.regions:
        if r.contains(x, y):
            return r.material
    return None


def distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


# ---------------------------------------------------------------------------
# configuration text


def _junction_from_dict(d: dict):
    model = d.get("model")
    if model == "cosine":
        return Cosine(float(d["ej_GHz"]))
    if model == "resonant_abs":
        return ResonantABS(float(d["eff_gap_GHz"]), float(d["transmission"]))
    if model == "multichannel":
        return MultiChannel(
            tuple((float(c["gap_GHz"]), float(c["transmission"])) for c in d["channels"])
        )
    raise ConfigError(f"unknown junction model {model!r}")


def _junction_to_dict(j) -> dict:
    if isinstance(j, Cosine):
        return {"model": "cosine", "ej_GHz": j.ej}
    if isinstance(j, ResonantABS):
        return {"model": "resonant_abs", "eff_gap_GHz": j.eff_gap, "transmission": j.transmission}
    return {
        "model": "multichannel",
        "channels": [{"gap_GHz": g, "transmission": t} for g, t in j.channels],
    }


def transmon_from_dict(d: dict, default_gap: float) -> TransmonParams:
    return TransmonParams(
        ec=float(d["ec_GHz"]),
        junction=_junction_from_dict(d["junction"]),
        lead_gap=float(d.get("lead_gap_ueV", default_gap)),
    )


def parse_yaml(text: str, source: str = "<config>"):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}, line {mark.line + 1}, column {mark.column + 1}" if mark else source
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}: {problem}") from exc


def layout_from_dict(cfg: dict) -> ChipLayout:
    try:
        chip = cfg["chip"]
        mats = {
            name: FilmMaterial(
                name=name,
                gap=float(m["gap_ueV"]),
                thickness=float(m["thickness_nm"]),
                absorb_prob=float(m["absorb_prob"]),
                recombine_reemit_prob=float(m["recombine_reemit_prob"]),
            )
            for name, m in (cfg.get("materials") or {}).items()
        }
        regions = []
        for i, r in enumerate(cfg.get("regions") or []):
            name = r.get("name", f"region[{i}]")
            if r["material"] not in mats:
                raise ConfigError(f"region {name}: material {r['material']!r} is not defined")
            regions.append(Region(name, tuple(float(v) for v in r["rect_mm"]), mats[r["material"]]))
        qubits = []
        for q in cfg.get("qubits") or []:
            gap = float(q["nanowire_gap_ueV"])
            qubits.append(
                QubitSite(
                    label=str(q["label"]),
                    position=tuple(float(v) for v in q["position_mm"]),
                    sense_radius=float(q.get("sense_radius_mm", 0.15)),
                    nanowire_gap=gap,
                    transmon=transmon_from_dict(q["transmon"], gap),
                )
            )
        injectors = cfg.get("injector")
        if isinstance(injectors, list):
            if len(injectors) != 1:
                raise LayoutError(f"exactly one injector required, got {len(injectors)}")
            injectors = injectors[0]
        return ChipLayout(
            width=float(chip["width_mm"]),
            height=float(chip["height_mm"]),
            substrate_thickness=float(chip["substrate_thickness_mm"]),
            sound_speed=float(chip.get("sound_speed_mm_per_us", 6.0)),
            surface_specularity=float(chip.get("surface_specularity", 0.5)),
            backside_absorb_prob=float(chip.get("backside_absorb_prob", 0.5)),
            regions=tuple(regions),
            injector_pos=tuple(float(v) for v in injectors["position_mm"]),
            qubits=tuple(qubits),
            materials=mats,
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ConfigError(f"malformed layout section: {exc}") from exc


def load_layout(config_text: str, source: str = "<config>") -> ChipLayout:
    """Parse and validate a layout from YAML text.

    The text may be a bare layout document or a scenario document with a
    ``layout`` mapping.
    """
    cfg = parse_yaml(config_text, source)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{source}: expected a mapping at top level")
    if "chip" not in cfg and isinstance(cfg.get("layout"), dict):
        cfg = cfg["layout"]
    return layout_from_dict(cfg)


def layout_to_dict(layout: ChipLayout) -> dict:
    return {
        "chip": {
            "width_mm": layout.width,
            "height_mm": layout.height,
            "substrate_thickness_mm": layout.substrate_thickness,
            "sound_speed_mm_per_us": layout.sound_speed,
            "surface_specularity": layout.surface_specularity,
            "backside_absorb_prob": layout.backside_absorb_prob,
        },
        "materials": {
            m.name: {
                "gap_ueV": m.gap,
                "thickness_nm": m.thickness,
                "absorb_prob": m.absorb_prob,
                "recombine_reemit_prob": m.recombine_reemit_prob,
            }
            for m in layout.materials.values()
        },
        "regions": [
            {"name": r.name, "material": r.material.name, "rect_mm": list(r.rect)}
            for r in layout.regions
        ],
        "injector": {"position_mm": list(layout.injector_pos)},
        "qubits": [
            {
                "label": q.label,
                "position_mm": list(q.position),
                "sense_radius_mm": q.sense_radius,
                "nanowire_gap_ueV": q.nanowire_gap,
                "transmon": {
                    "ec_GHz": q.transmon.ec,
                    "lead_gap_ueV": q.transmon.lead_gap,
                    "junction": _junction_to_dict(q.transmon.junction),
                },
            }
            for q in layout.qubits
        ],
    }


def dump_layout(layout: ChipLayout) -> str:
    return yaml.safe_dump(layout_to_dict(layout), sort_keys=False, default_flow_style=None)


def default_layout() -> ChipLayout:
    from importlib.resources import files

    text = files("qptrap.data").joinpath("default_layout.yaml").read_text()
    return load_layout(text, "default_layout.yaml")
