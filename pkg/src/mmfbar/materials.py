"""Material records, the shipped constants table, and layered stacks.

All quantities are SI.  Permittivity is stored absolute (F/m).  Only the
thickness-axis constants are modelled: ``c33`` at constant field, ``e33``
and the clamped permittivity ``eps33``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

EPS0 = 8.8541878128e-12  # F/m

TRACTION_FREE = "traction-free"
BOUNDARIES = (TRACTION_FREE,)


@dataclass(frozen=True)
class MaterialProps:
    """Thickness-axis constants of one material.

    ``mech_q`` may be ``math.inf`` for a lossless material; the JSON table
    writes that as ``null``.
    """

    name: str
    density: float  # kg/m^3
    c33: float  # Pa, constant field
    e33: float = 0.0  # C/m^2
    eps33: float = EPS0  # F/m, clamped
    mech_q: float = 50.0
    source_note: str = ""

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError(f"{self.name}: density must be positive")
        if not self.c33 > 0:
            raise ValueError(f"{self.name}: c33 must be positive")
        if not self.eps33 > 0:
            raise ValueError(f"{self.name}: eps33 must be positive")
        if not self.e33 >= 0:
            raise ValueError(f"{self.name}: e33 must be non-negative")
        if not self.mech_q > 0:
            raise ValueError(f"{self.name}: mech_q must be positive")

    @property
    def is_piezoelectric(self) -> bool:
        return self.e33 > 0

    def lossless(self) -> "MaterialProps":
        return replace(self, mech_q=math.inf)


@dataclass(frozen=True)
class Layer:
    material: MaterialProps
    thickness: float  # m


@dataclass(frozen=True)
class Stack:
    """Layers ordered top to bottom, with one driven piezoelectric layer.

    The electrodes are the faces of ``layers[piezo_index]``; whatever sits
    above and below it is acoustic load only.  ``area`` is the electrode
    overlap in m^2.
    """

    layers: tuple[Layer, ...]
    piezo_index: int
    area: float
    boundary: str = TRACTION_FREE

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def piezo(self) -> Layer:
        return self.layers[self.piezo_index]

    @property
    def above(self) -> tuple[Layer, ...]:
        """Layers over the top electrode, nearest first."""
        return tuple(reversed(self.layers[: self.piezo_index]))

    @property
    def below(self) -> tuple[Layer, ...]:
        """Layers under the bottom electrode, nearest first."""
        return self.layers[self.piezo_index + 1:]

    @property
    def static_capacitance(self) -> float:
        p = self.piezo
        return p.material.eps33 * self.area / p.thickness

    def lossless(self) -> "Stack":
        layers = tuple(Layer(l.material.lossless(), l.thickness) for l in self.layers)
        return replace(self, layers=layers)


def stiffened_stiffness(m: MaterialProps) -> float:
    """Piezoelectrically stiffened constant ``c33 + e33**2 / eps33``."""
    return m.c33 + m.e33 ** 2 / m.eps33


def complex_stiffness(m: MaterialProps) -> complex:
    """Stiffened constant with structural loss, ``c_D * (1 + j/Q)``."""
    return stiffened_stiffness(m) * complex(1.0, 1.0 / m.mech_q)


def longitudinal_velocity(m: MaterialProps) -> float:
    return math.sqrt(stiffened_stiffness(m) / m.density)


def intrinsic_kt2(m: MaterialProps) -> float:
    """Thickness coupling ``e33**2 / (eps33 * c_D)`` of the bare material."""
    return m.e33 ** 2 / (m.eps33 * stiffened_stiffness(m))


def validate_stack(s: Stack, require_piezo: bool = True) -> list[str]:
    """Return the violated stack invariants; an empty list means valid.

    With ``require_piezo=False`` an unpoled (``e33 = 0``) driven layer is
    accepted; the simulators use this to model the bare capacitor.
    """
    problems = []
    if not s.layers:
        problems.append("no layers")
    for i, layer in enumerate(s.layers):
        if not layer.thickness > 0:
            problems.append(f"layer {i} ({layer.material.name}): thickness must be positive")
    if not 0 <= s.piezo_index < len(s.layers):
        if s.layers:
            problems.append(f"piezo_index {s.piezo_index} out of range 0..{len(s.layers) - 1}")
    elif require_piezo and not s.piezo.material.e33 > 0:
        problems.append(
            f"piezo layer has e33 = 0 (layer {s.piezo_index}, {s.piezo.material.name})"
        )
    if not s.area > 0:
        problems.append("area must be positive")
    if s.boundary not in BOUNDARIES:
        problems.append(f"unsupported boundary {s.boundary!r}; expected one of {BOUNDARIES}")
    return problems


# -- constants table ---------------------------------------------------------

_FIELDS = {
    "name": "name",
    "density_kg_m3": "density",
    "c33_e_pa": "c33",
    "e33_c_m2": "e33",
    "eps33_s_f_m": "eps33",
    "mech_q": "mech_q",
    "source_note": "source_note",
}


def material_to_dict(m: MaterialProps) -> dict:
    d = {key: getattr(m, attr) for key, attr in _FIELDS.items()}
    if math.isinf(m.mech_q):
        d["mech_q"] = None
    return d


def material_from_dict(d: Mapping, where: str = "material") -> MaterialProps:
    unknown = sorted(set(d) - set(_FIELDS))
    if unknown:
        raise ValueError(f"{where}: unknown field(s) {unknown}")
    missing = sorted(set(_FIELDS) - set(d) - {"source_note", "mech_q"})
    if missing:
        raise ValueError(f"{where}: missing field(s) {missing}")
    kwargs = {attr: d[key] for key, attr in _FIELDS.items() if key in d}
    if kwargs.get("mech_q", 50.0) is None:
        kwargs["mech_q"] = math.inf
    for attr in ("density", "c33", "e33", "eps33", "mech_q"):
        if attr in kwargs and not isinstance(kwargs[attr], (int, float)):
            raise ValueError(f"{where}.{attr}: expected a number")
    return MaterialProps(**kwargs)


def dumps_material_table(materials: Mapping[str, MaterialProps] | Sequence[MaterialProps]) -> str:
    items = materials.values() if isinstance(materials, Mapping) else materials
    doc = {"materials": [material_to_dict(m) for m in items]}
    return json.dumps(doc, indent=2) + "\n"


def loads_material_table(text: str) -> dict[str, MaterialProps]:
    doc = json.loads(text)
    if not isinstance(doc, dict) or set(doc) != {"materials"}:
        raise ValueError("materials file must be an object with a single 'materials' list")
    table = {}
    for i, entry in enumerate(doc["materials"]):
        m = material_from_dict(entry, where=f"materials[{i}]")
        if m.name in table:
            raise ValueError(f"materials[{i}]: duplicate name {m.name!r}")
        table[m.name] = m
    return table


def load_material_table(path: str | Path | None = None) -> dict[str, MaterialProps]:
    """Load the shipped table, or a user table from ``path``."""
    if path is None:
        text = resources.files("mmfbar.data").joinpath("materials.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return loads_material_table(text)


def default_stack(materials: Mapping[str, MaterialProps] | None = None) -> Stack:
    """Al 37 nm / Sc0.3Al0.7N 85 nm / Al 37 nm on a 7 um x 16 um electrode."""
    table = load_material_table() if materials is None else materials
    al, scaln = table["Al"], table["ScAlN30"]
    return Stack(
        layers=(Layer(al, 37e-9), Layer(scaln, 85e-9), Layer(al, 37e-9)),
        piezo_index=1,
        area=112e-12,
    )
