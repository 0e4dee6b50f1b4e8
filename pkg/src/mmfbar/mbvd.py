"""Modified Butterworth-Van Dyke circuit with mmWave routing parasitics.

Topology: series ``R_s + j w L_s`` feeding a core made of the static branch
(``C_0`` in series with ``R_0``) in parallel with any number of motional
``R_m - L_m - C_m`` branches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectrum import ComplexSpectrum, FrequencyGrid, ModeMetrics, extract_k2, qp_phase_slope

__all__ = [
    "MotionalBranch",
    "MbvdParams",
    "mbvd_admittance",
    "branch_from_targets",
    "derived_metrics",
    "qp_phase_slope",
]

K2_LIMIT = 8 / math.pi ** 2


@dataclass(frozen=True)
class MotionalBranch:
    r_m: float
    l_m: float
    c_m: float

    def __post_init__(self):
        if not (self.r_m >= 0 and self.l_m > 0 and self.c_m > 0):
            raise ValueError("motional branch needs r_m >= 0, l_m > 0, c_m > 0")

    @property
    def f_s(self) -> float:
        return 1 / (2 * math.pi * math.sqrt(self.l_m * self.c_m))

    @property
    def q_m(self) -> float:
        """Motional quality factor ``w_s L_m / R_m``."""
        return 2 * math.pi * self.f_s * self.l_m / self.r_m if self.r_m > 0 else math.inf


@dataclass(frozen=True)
class MbvdParams:
    c_0: float
    r_s: float = 0.0
    l_s: float = 0.0
    r_0: float = 0.0
    branches: tuple[MotionalBranch, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.c_0 > 0:
            raise ValueError("c_0 must be positive")
        if min(self.r_s, self.l_s, self.r_0) < 0:
            raise ValueError("r_s, l_s and r_0 must be non-negative")
        fs = [b.f_s for b in self.branches]
        if any(b <= a for a, b in zip(fs, fs[1:])):
            raise ValueError("motional branches must have strictly increasing f_s")

    def to_dict(self) -> dict:
        return {
            "r_s_ohm": self.r_s,
            "l_s_h": self.l_s,
            "c_0_f": self.c_0,
            "r_0_ohm": self.r_0,
            "branches": [
                {"r_m_ohm": b.r_m, "l_m_h": b.l_m, "c_m_f": b.c_m} for b in self.branches
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MbvdParams":
        known = {"r_s_ohm", "l_s_h", "c_0_f", "r_0_ohm", "branches"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown mBVD field(s) {unknown}")
        if "c_0_f" not in d:
            raise ValueError("missing field c_0_f")
        branches = []
        for i, b in enumerate(d.get("branches", [])):
            extra = sorted(set(b) - {"r_m_ohm", "l_m_h", "c_m_f"})
            if extra:
                raise ValueError(f"branches[{i}]: unknown field(s) {extra}")
            try:
                branches.append(MotionalBranch(b["r_m_ohm"], b["l_m_h"], b["c_m_f"]))
            except KeyError as exc:
                raise ValueError(f"branches[{i}]: missing field {exc.args[0]}") from None
        return cls(
            c_0=d["c_0_f"],
            r_s=d.get("r_s_ohm", 0.0),
            l_s=d.get("l_s_h", 0.0),
            r_0=d.get("r_0_ohm", 0.0),
            branches=tuple(branches),
        )


def core_admittance(p: MbvdParams, f) -> np.ndarray:
    """Admittance of the resonator core, i.e. without ``R_s`` and ``L_s``."""
    w = 2 * np.pi * np.asarray(f, dtype=float)
    y = 1j * w * p.c_0 / (1 + 1j * w * p.r_0 * p.c_0)
    for b in p.branches:
        y = y + 1 / (b.r_m + 1j * w * b.l_m + 1 / (1j * w * b.c_m))
    return y


def mbvd_admittance(p: MbvdParams, g) -> ComplexSpectrum:
    f = g.frequencies() if isinstance(g, FrequencyGrid) else np.atleast_1d(np.asarray(g, float))
    w = 2 * np.pi * f
    y_core = core_admittance(p, f)
    if p.r_s == 0 and p.l_s == 0:
        return ComplexSpectrum(f, y_core, "admittance")
    return ComplexSpectrum(f, 1 / (p.r_s + 1j * w * p.l_s + 1 / y_core), "admittance")


def branch_from_targets(f_s: float, k2: float, q: float, c_0: float) -> MotionalBranch:
    """Motional branch giving series resonance ``f_s`` and coupling ``k2``.

    ``q`` is the motional quality factor ``w_s L_m / R_m``.
    """
    if not k2 > 0:
        raise ValueError("k2 must be positive; a zero-coupling branch is degenerate")
    if not k2 < K2_LIMIT:
        raise ValueError(f"k2 must be below 8/pi^2 = {K2_LIMIT:.6f}")
    if not (f_s > 0 and q > 0 and c_0 > 0):
        raise ValueError("f_s, q and c_0 must be positive")
    r = 8 * k2 / math.pi ** 2  # = C_m / (C_0 + C_m)
    c_m = c_0 * r / (1 - r)
    l_m = 1 / ((2 * math.pi * f_s) ** 2 * c_m)
    r_m = 2 * math.pi * f_s * l_m / q
    return MotionalBranch(r_m, l_m, c_m)


def params_from_targets(targets, c_0: float, r_s=0.0, l_s=0.0, r_0=0.0) -> MbvdParams:
    """Build an mBVD from ``(f_s, k2, q)`` triples, sorted by frequency."""
    branches = [branch_from_targets(f, k, q, c_0) for f, k, q in sorted(targets)]
    return MbvdParams(c_0=c_0, r_s=r_s, l_s=l_s, r_0=r_0, branches=tuple(branches))


def derived_metrics(p: MbvdParams, labels=None) -> list[ModeMetrics]:
    """Per-branch f_s, f_p, k2, Q_p and FoM.

    ``f_p = f_s sqrt(1 + C_m/C_0)`` and ``Q_p`` is the impedance phase slope
    of the full model at that frequency.  The model can be sampled at will,
    so the slope uses a chord of +/-1e-5 relative, far below any linewidth
    of interest, instead of the coarser default meant for measured data.
    """
    out = []
    for n, b in enumerate(p.branches):
        f_s = b.f_s
        f_p = f_s * math.sqrt(1 + b.c_m / p.c_0)
        k2 = extract_k2(f_s, f_p)
        fl = np.linspace(f_p * (1 - 2e-5), f_p * (1 + 2e-5), 81)
        q_p = qp_phase_slope(mbvd_admittance(p, fl), f_p, rel_window=1e-5)
        label = labels[n] if labels is not None and n < len(labels) else f"branch{n + 1}"
        out.append(ModeMetrics(label, f_s, f_p, k2, q_p, k2 * q_p))
    return out
