"""One-dimensional electro-acoustic model of a released layered stack.

Acoustic quantities are per unit area: "force" is stress (Pa), velocity is
particle velocity (m/s), and layer impedances are specific acoustic
impedances ``rho * v`` (Rayl).  The electrode area only enters through the
static capacitance and the final current-to-admittance scaling.

The driven layer is a Mason three-port; every other layer is a passive
two-port whose (stress, velocity) transfer matrix is chained out to the
traction-free outer surfaces.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .materials import Layer, MaterialProps, Stack, complex_stiffness, stiffened_stiffness, validate_stack
from .spectrum import (
    ComplexSpectrum,
    FrequencyGrid,
    ModeMetrics,
    extract_k2,
    find_modes,
    qp_phase_slope,
)

__all__ = [
    "layer_acoustic_matrix",
    "stack_admittance",
    "find_modes",
    "extract_k2",
    "simulate_modes",
    "sweep",
    "SweepRow",
]


def _freqs(g) -> np.ndarray:
    if isinstance(g, FrequencyGrid):
        return g.frequencies()
    return np.atleast_1d(np.asarray(g, dtype=float))


def _wave(m: MaterialProps):
    c = complex_stiffness(m)
    v = np.sqrt(c / m.density)
    return v, m.density * v


def layer_acoustic_matrix(layer: Layer, f) -> np.ndarray:
    """Transfer matrix relating (stress, velocity) at the two faces of a layer.

    ``[[cos t, jZ sin t], [j sin t / Z, cos t]]`` with ``t = 2 pi f d / v``
    and ``Z = rho v``; loss enters through the complex stiffness.  Returns an
    array of shape ``(len(f), 2, 2)``.
    """
    f = np.atleast_1d(np.asarray(f, dtype=float))
    v, z = _wave(layer.material)
    theta = 2 * np.pi * f * layer.thickness / v
    c, s = np.cos(theta), np.sin(theta)
    m = np.empty(f.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = c
    m[..., 0, 1] = 1j * z * s
    m[..., 1, 0] = 1j * s / z
    m[..., 1, 1] = c
    return m


def _face_load(layers: Sequence[Layer], f: np.ndarray) -> np.ndarray:
    """Acoustic impedance seen from an electrode face toward a free surface."""
    if not layers:
        return np.zeros(f.shape, dtype=complex)
    m = layer_acoustic_matrix(layers[0], f)
    for layer in layers[1:]:
        m = m @ layer_acoustic_matrix(layer, f)
    # free surface: zero stress at the far end
    return m[..., 0, 1] / m[..., 1, 1]


def _mason(s: Stack, f: np.ndarray):
    """Admittance of the stack at angular frequencies ``2 pi f``."""
    problems = validate_stack(s, require_piezo=False)
    if problems:
        raise ValueError("invalid stack: " + "; ".join(problems))
    p = s.piezo
    mat = p.material
    w = 2 * np.pi * f
    v, zp = _wave(mat)
    gamma = w * p.thickness / v
    h = mat.e33 / mat.eps33
    c0 = mat.eps33 / p.thickness  # per unit area
    a = zp / (1j * np.tan(gamma))
    b = zp / (1j * np.sin(gamma))
    phi = h / (1j * w)
    z_top = _face_load(s.above, f)
    z_bot = _face_load(s.below, f)
    det = (a + z_top) * (a + z_bot) - b * b
    # inward face velocities per unit current density
    v1 = -phi * ((a + z_bot) - b) / det
    v2 = -phi * ((a + z_top) - b) / det
    z_area = 1 / (1j * w * c0) + phi * (v1 + v2)
    return s.area / z_area


def stack_admittance(s: Stack, g) -> ComplexSpectrum:
    """Electrical admittance Y(f) of a released stack.

    ``g`` is a :class:`FrequencyGrid` or an array of frequencies in Hz.
    With ``e33 = 0`` this reduces to ``j w C_0`` of the piezo dielectric.
    """
    f = _freqs(g)
    y = _mason(s, f)
    return ComplexSpectrum(f, y, "admittance")


def plate_resonances(s: Stack, f_max: float) -> np.ndarray:
    """Open-circuit resonances of the lossless stack up to ``f_max``.

    With no charge on the electrodes the driven layer is a plain layer of
    stiffness ``c_D``; a traction-free plate resonates where the ``(0, 1)``
    entry of the chained transfer matrix vanishes.  These are the f_p of
    the lossless stack, numbered 1, 2, 3, ... from the lowest.
    """
    layers = [Layer(l.material.lossless(), l.thickness) for l in s.layers]
    transit = sum(l.thickness / math.sqrt(stiffened_stiffness(l.material) / l.material.density) for l in layers)
    # about 100 samples between consecutive resonances (spacing ~ 1 / (2 transit))
    n = int(np.ceil(f_max * transit * 200)) + 2
    f = np.linspace(f_max / n, f_max, n)
    m = layer_acoustic_matrix(layers[0], f)
    for layer in layers[1:]:
        m = m @ layer_acoustic_matrix(layer, f)
    g = m[:, 0, 1].imag
    i = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0)
    i = i[g[i] != g[i + 1]]
    # linear interpolation of each sign change
    return f[i] - g[i] * (f[i + 1] - f[i]) / (g[i + 1] - g[i])


def _mode_label(order: int) -> str:
    # odd orders are thickness-symmetric; even ones need an asymmetric stack
    return f"{'S' if order % 2 else 'A'}{order}"


def _refine(s: Stack, f0: float, half_span: float, maximise: bool) -> float:
    fl = np.linspace(f0 - half_span, f0 + half_span, 201)
    fl = fl[fl > 0]
    a = np.abs(stack_admittance(s, fl).values)
    i = int(np.argmax(a) if maximise else np.argmin(a))
    if 0 < i < len(fl) - 1:
        y0, y1, y2 = np.log(a[i - 1 : i + 2])
        den = y0 - 2 * y1 + y2
        if den != 0:
            return float(fl[i] + 0.5 * (y0 - y2) / den * (fl[1] - fl[0]))
    return float(fl[i])


def simulate_modes(
    s: Stack,
    g,
    prominence_db: float = 3.0,
    spectrum: ComplexSpectrum | None = None,
) -> list[ModeMetrics]:
    """Simulate, detect resonances, and report per-mode metrics.

    Detected extrema are re-located on a dense local grid around each
    sample, and Q_p is taken from the impedance phase slope evaluated on a
    +/-1% grid around f_p, so the result does not depend on the sweep
    density beyond detection.  Labels (S1, A2, S3, ...) give the order of
    the nearest open-circuit plate resonance: odd orders are symmetric,
    even orders antisymmetric.
    """
    y = spectrum if spectrum is not None else stack_admittance(s, g)
    f = y.frequencies
    step = float(np.max(np.diff(f))) if len(f) > 1 else 0.0
    out = []
    pairs = find_modes(y, prominence_db=prominence_db)
    plate = plate_resonances(s, 1.05 * max((p.f_p for p in pairs), default=f[-1]))
    for pair in pairs:
        f_s = _refine(s, pair.f_s, step, True)
        f_p = _refine(s, pair.f_p, step, False)
        if not f_s < f_p:
            f_s, f_p = pair.f_s, pair.f_p
        k2 = extract_k2(f_s, f_p)
        fl = np.linspace(f_p * 0.99, f_p * 1.01, 401)
        q_p = qp_phase_slope(stack_admittance(s, fl).to_impedance(), f_p)
        order = int(np.argmin(np.abs(plate - f_p))) + 1 if plate.size else 0
        label = _mode_label(order) if order else "unlabeled"
        out.append(ModeMetrics(label, f_s, f_p, k2, q_p, k2 * q_p))
    return out


# -- parameter sweeps --------------------------------------------------------

_MATERIAL_FIELDS = ("density", "c33", "e33", "eps33", "mech_q")
_PATH = re.compile(
    r"^(?:(?P<area>area)"
    r"|layers\[(?P<idx>\d+(?:\s*,\s*\d+)*)\]\.(?:(?P<thick>thickness)|material\.(?P<field>\w+)))$"
)


@dataclass(frozen=True)
class SweepRow:
    value: float
    modes: tuple[ModeMetrics, ...]


def _setter(s: Stack, parameter: str):
    m = _PATH.match(parameter.strip())
    if not m:
        raise ValueError(
            f"cannot resolve parameter {parameter!r}; expected 'area', "
            "'layers[i].thickness', 'layers[i,j].thickness' or 'layers[i].material.<field>'"
        )
    if m["area"]:
        return lambda x: replace(s, area=x)
    idx = sorted({int(i) for i in m["idx"].split(",")})
    if idx[-1] >= len(s.layers):
        raise ValueError(f"cannot resolve parameter {parameter!r}: stack has {len(s.layers)} layers")
    if m["thick"]:
        if s.piezo_index in idx:
            def set_piezo(x):
                if x <= 0:
                    raise ValueError("the piezoelectric layer cannot be removed")
                return _set_thickness(s, idx, x)
            return set_piezo
        return lambda x: _set_thickness(s, idx, x)
    fld = m["field"]
    if fld not in _MATERIAL_FIELDS:
        raise ValueError(f"cannot resolve parameter {parameter!r}: unknown material field {fld!r}")

    def set_material(x):
        layers = list(s.layers)
        for i in idx:
            layers[i] = Layer(replace(layers[i].material, **{fld: x}), layers[i].thickness)
        return replace(s, layers=tuple(layers))

    return set_material


def _set_thickness(s: Stack, idx, x: float) -> Stack:
    """Set thickness of the listed layers; zero removes them."""
    layers, piezo = [], s.piezo_index
    for i, layer in enumerate(s.layers):
        if i not in idx:
            layers.append(layer)
        elif x > 0:
            layers.append(Layer(layer.material, x))
        elif i < s.piezo_index:
            piezo -= 1
    return replace(s, layers=tuple(layers), piezo_index=piezo)


def sweep(s: Stack, parameter: str, values: Sequence[float], g, prominence_db: float = 3.0) -> list[SweepRow]:
    """Re-simulate the stack for each value of one scalar field.

    ``parameter`` uses a small path syntax: ``area``,
    ``layers[0,2].thickness`` (several layers at once; a thickness of 0
    omits those layers), or ``layers[1].material.e33``.
    """
    setter = _setter(s, parameter)
    rows = []
    for x in values:
        x = float(x)
        if x < 0:
            raise ValueError(f"{parameter} must be non-negative, got {x}")
        rows.append(SweepRow(x, tuple(simulate_modes(setter(x), g, prominence_db))))
    return rows
