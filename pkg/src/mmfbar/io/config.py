"""Strict JSON configuration files for stacks, fits and mBVD parameters.

Unknown keys are errors, and every message carries the dotted path of the
offending field so a typo in a long file is easy to find.
"""
from __future__ import annotations

import json
import math
from typing import Any, Mapping

from ..extraction import FitConfig
from ..materials import TRACTION_FREE, Layer, MaterialProps, Stack, load_material_table
from ..mbvd import MbvdParams


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the field path."""


def _obj(x: Any, path: str) -> dict:
    if not isinstance(x, dict):
        raise ConfigError(f"{path}: expected an object")
    return x


def _strict(d: dict, path: str, required: set, optional: set = frozenset()) -> None:
    unknown = sorted(set(d) - required - set(optional))
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {unknown}")
    missing = sorted(required - set(d))
    if missing:
        raise ConfigError(f"{path}: missing required field(s) {missing}")


def _num(x: Any, path: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(f"{path}: expected a finite number")
    return float(x)


def _int(x: Any, path: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(f"{path}: expected an integer")
    return x


def _parse(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


# -- stack -------------------------------------------------------------------


def stack_from_dict(d: Mapping, materials: Mapping[str, MaterialProps] | None = None) -> Stack:
    table = load_material_table() if materials is None else materials
    d = _obj(d, "stack")
    _strict(d, "stack", {"layers", "piezo_index", "area_um2"}, {"boundary"})
    if not isinstance(d["layers"], list) or not d["layers"]:
        raise ConfigError("stack.layers: expected a non-empty list")
    layers = []
    for i, entry in enumerate(d["layers"]):
        path = f"stack.layers[{i}]"
        entry = _obj(entry, path)
        _strict(entry, path, {"material", "thickness_nm"})
        name = entry["material"]
        if not isinstance(name, str):
            raise ConfigError(f"{path}.material: expected a material name")
        if name not in table:
            raise ConfigError(f"{path}.material: unknown material {name!r}; known: {', '.join(sorted(table))}")
        t = _num(entry["thickness_nm"], f"{path}.thickness_nm")
        if not t > 0:
            raise ConfigError(f"{path}.thickness_nm: thickness must be positive")
        layers.append(Layer(table[name], t / 1e9))
    idx = _int(d["piezo_index"], "stack.piezo_index")
    if not 0 <= idx < len(layers):
        raise ConfigError(f"stack.piezo_index: {idx} is not a layer index (0..{len(layers) - 1})")
    if not layers[idx].material.is_piezoelectric:
        raise ConfigError(f"stack.piezo_index: layer {idx} ({layers[idx].material.name}) is not piezoelectric")
    area = _num(d["area_um2"], "stack.area_um2")
    if not area > 0:
        raise ConfigError("stack.area_um2: area must be positive")
    boundary = d.get("boundary", TRACTION_FREE)
    if boundary != TRACTION_FREE:
        raise ConfigError(f"stack.boundary: only {TRACTION_FREE!r} is supported")
    return Stack(tuple(layers), idx, area / 1e12, boundary)


def stack_to_dict(s: Stack) -> dict:
    return {
        "layers": [{"material": l.material.name, "thickness_nm": l.thickness * 1e9} for l in s.layers],
        "piezo_index": s.piezo_index,
        "area_um2": s.area * 1e12,
        "boundary": s.boundary,
    }


def load_stack_config(text: str, materials: Mapping[str, MaterialProps] | None = None) -> Stack:
    """Stack from JSON text; layer materials are looked up by name."""
    return stack_from_dict(_parse(text, "stack"), materials)


def dumps_stack_config(s: Stack) -> str:
    return json.dumps(stack_to_dict(s), indent=2) + "\n"


# -- fit configuration -------------------------------------------------------

_FIT_OPTIONAL = {
    "em_bands_hz",
    "weights",
    "max_iterations",
    "tolerance",
    "seed",
    "starts",
    "fit_r0",
    "r_0_ohm",
    "prominence_db",
}


def _bands(x: Any, path: str) -> tuple:
    if not isinstance(x, list):
        raise ConfigError(f"{path}: expected a list of [low, high] pairs")
    out = []
    for i, b in enumerate(x):
        if not isinstance(b, list) or len(b) != 2:
            raise ConfigError(f"{path}[{i}]: expected [low, high]")
        lo, hi = _num(b[0], f"{path}[{i}][0]"), _num(b[1], f"{path}[{i}][1]")
        if not 0 < lo < hi:
            raise ConfigError(f"{path}[{i}]: need 0 < low < high")
        out.append((lo, hi))
    return tuple(out)


def fit_config_from_dict(d: Mapping) -> FitConfig:
    d = _obj(d, "fit")
    _strict(d, "fit", {"mode_windows_hz"}, _FIT_OPTIONAL)
    kw: dict = {"mode_windows": _bands(d["mode_windows_hz"], "fit.mode_windows_hz")}
    if not kw["mode_windows"]:
        raise ConfigError("fit.mode_windows_hz: at least one window is required")
    if "em_bands_hz" in d:
        kw["em_exclusion"] = _bands(d["em_bands_hz"], "fit.em_bands_hz")
    if "weights" in d:
        w = d["weights"]
        if not isinstance(w, list) or len(w) != 2:
            raise ConfigError("fit.weights: expected [amplitude, phase]")
        kw["weights"] = (_num(w[0], "fit.weights[0]"), _num(w[1], "fit.weights[1]"))
    for key in ("max_iterations", "seed", "starts"):
        if key in d:
            kw[key] = _int(d[key], f"fit.{key}")
    for key, attr in (("tolerance", "tolerance"), ("r_0_ohm", "r_0"), ("prominence_db", "prominence_db")):
        if key in d:
            kw[attr] = _num(d[key], f"fit.{key}")
    if "fit_r0" in d:
        if not isinstance(d["fit_r0"], bool):
            raise ConfigError("fit.fit_r0: expected true or false")
        kw["fit_r0"] = d["fit_r0"]
    try:
        return FitConfig(**kw)
    except ValueError as exc:
        raise ConfigError(f"fit: {exc}") from None


def fit_config_to_dict(cfg: FitConfig) -> dict:
    d = {"mode_windows_hz": [list(w) for w in cfg.mode_windows]}
    if cfg.em_exclusion is not None:
        d["em_bands_hz"] = [list(b) for b in cfg.em_exclusion]
    d.update(
        weights=list(cfg.weights),
        max_iterations=cfg.max_iterations,
        tolerance=cfg.tolerance,
        seed=cfg.seed,
        starts=cfg.starts,
        fit_r0=cfg.fit_r0,
        r_0_ohm=cfg.r_0,
        prominence_db=cfg.prominence_db,
    )
    return d


def load_fit_config(text: str) -> FitConfig:
    """Fit settings from JSON text.  Only ``mode_windows_hz`` is required."""
    return fit_config_from_dict(_parse(text, "fit"))


def dumps_fit_config(cfg: FitConfig) -> str:
    return json.dumps(fit_config_to_dict(cfg), indent=2) + "\n"


# -- mBVD parameters ---------------------------------------------------------


def load_mbvd_params(text: str) -> MbvdParams:
    try:
        return MbvdParams.from_dict(_obj(_parse(text, "mbvd"), "mbvd"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"mbvd: {exc}") from None


def dumps_mbvd_params(p: MbvdParams) -> str:
    return json.dumps(p.to_dict(), indent=2) + "\n"
