"""Frequency grids, sampled complex spectra and resonance bookkeeping."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.signal import find_peaks

QUANTITIES = ("admittance", "impedance", "reflection")


class ModeWarning(UserWarning):
    """A resonance feature that could not be fully resolved on the grid."""


@dataclass(frozen=True)
class FrequencyGrid:
    start: float
    stop: float
    points: int
    spacing: str = "linear"

    def __post_init__(self):
        if not 0 < self.start < self.stop:
            raise ValueError("frequency grid needs 0 < start < stop")
        if self.points < 2:
            raise ValueError("frequency grid needs at least 2 points")
        if self.spacing not in ("linear", "logarithmic"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    def frequencies(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.start, self.stop, self.points)
        return np.geomspace(self.start, self.stop, self.points)


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    frequencies: np.ndarray
    values: np.ndarray
    quantity: str = "admittance"

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if f.ndim != 1 or v.shape != f.shape:
            raise ValueError("values length must equal frequency count")
        if f.size > 1 and not np.all(np.diff(f) > 0):
            raise ValueError("frequencies must be strictly increasing")
        if self.quantity not in QUANTITIES:
            raise ValueError(f"quantity must be one of {QUANTITIES}")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.frequencies.size

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * self.frequencies

    def to_admittance(self) -> "ComplexSpectrum":
        if self.quantity == "admittance":
            return self
        if self.quantity == "impedance":
            return ComplexSpectrum(self.frequencies, 1 / self.values, "admittance")
        raise ValueError("reflection data needs a reference impedance; use y_from_s11")

    def to_impedance(self) -> "ComplexSpectrum":
        if self.quantity == "impedance":
            return self
        return ComplexSpectrum(self.frequencies, 1 / self.to_admittance().values, "impedance")

    def window(self, f_lo: float, f_hi: float) -> "ComplexSpectrum":
        m = (self.frequencies >= f_lo) & (self.frequencies <= f_hi)
        return ComplexSpectrum(self.frequencies[m], self.values[m], self.quantity)


@dataclass(frozen=True)
class ModeMetrics:
    label: str
    f_s: float
    f_p: float
    k2: float
    q_p: float
    fom: float

    def to_dict(self) -> dict:
        return asdict(self)


class ModePair(NamedTuple):
    f_s: float
    f_p: float
    label: str = "unlabeled"


def extract_k2(f_s: float, f_p: float) -> float:
    """Effective coupling ``(pi^2/8) (f_p^2 - f_s^2) / f_p^2``."""
    if not 0 < f_s < f_p:
        raise ValueError(f"need 0 < f_s < f_p, got f_s={f_s!r}, f_p={f_p!r}")
    return math.pi ** 2 / 8 * (f_p ** 2 - f_s ** 2) / f_p ** 2


def _vertex(f: np.ndarray, y: np.ndarray, i: int) -> float:
    """Abscissa of the parabola through samples i-1, i, i+1, clipped to them."""
    if i <= 0 or i >= len(f) - 1:
        return float(f[i])
    x0, x1, x2 = f[i - 1], f[i], f[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    d01, d12 = (y1 - y0) / (x1 - x0), (y2 - y1) / (x2 - x1)
    curv = (d12 - d01) / (x2 - x0)
    if curv == 0:
        return float(x1)
    # derivative of Newton form: d01 + curv * (2x - x0 - x1) = 0
    xv = 0.5 * (x0 + x1) - d01 / (2 * curv)
    return float(min(max(xv, x0), x2))


def find_modes(
    y: ComplexSpectrum,
    prominence_db: float = 3.0,
    labels: Sequence[str] | None = None,
) -> list[ModePair]:
    """Pair each prominent |Y| maximum with the following |Y| minimum.

    Extrema are located on ``20*log10|Y|`` and refined by a three-point
    parabola, so each frequency lands within one grid step of the sampled
    extremum.  Maxima whose minimum falls outside the grid are reported via
    :class:`ModeWarning` and dropped.  ``labels`` are assigned by ordinal.
    """
    if y.quantity != "admittance":
        raise ValueError("find_modes expects an admittance spectrum")
    if len(y) < 3:
        return []
    f = y.frequencies
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(np.abs(y.values))
    if not np.all(np.isfinite(db)):
        db = np.where(np.isfinite(db), db, np.nanmin(db[np.isfinite(db)]) if np.any(np.isfinite(db)) else 0.0)
    peaks, _ = find_peaks(db, prominence=prominence_db)
    dips, _ = find_peaks(-db, prominence=prominence_db)
    pairs = []
    for n, i in enumerate(peaks):
        nxt = peaks[n + 1] if n + 1 < len(peaks) else len(f)
        cand = dips[(dips > i) & (dips < nxt)]
        if cand.size == 0:
            warnings.warn(
                f"maximum at {f[i]:.6g} Hz lacks a paired minimum inside the grid",
                ModeWarning,
                stacklevel=2,
            )
            continue
        j = cand[0]
        f_s, f_p = _vertex(f, db, i), _vertex(f, -db, j)
        if not f_s < f_p:
            f_s, f_p = float(f[i]), float(f[j])
        pairs.append((f_s, f_p))
    out = []
    for n, (f_s, f_p) in enumerate(pairs):
        label = labels[n] if labels is not None and n < len(labels) else "unlabeled"
        out.append(ModePair(f_s, f_p, label))
    return out


def qp_phase_slope(z: ComplexSpectrum, f_p: float, rel_window: float = 0.002) -> float:
    """Anti-resonance quality factor ``(f_p/2) |d(phase)/df|`` at ``f_p``.

    The slope is a central difference of the unwrapped phase across
    ``f_p * (1 +/- rel_window)``.  Works on impedance or admittance (the
    sign of the phase is irrelevant).
    """
    f = z.frequencies
    lo, hi = f_p * (1 - rel_window), f_p * (1 + rel_window)
    if len(f) < 2 or lo < f[0] or hi > f[-1]:
        raise ValueError(f"f_p={f_p:.6g} Hz (with its evaluation window) lies outside the grid")
    n_in = int(np.count_nonzero((f >= lo) & (f <= hi)))
    if n_in < 5:
        raise ValueError(
            f"only {n_in} samples within +/-{rel_window:.2%} of f_p; at least 5 required"
        )
    phase = np.unwrap(np.angle(z.values))
    dphi = np.interp(hi, f, phase) - np.interp(lo, f, phase)
    return float(f_p / 2 * abs(dphi / (hi - lo)))


def spectrum_modes(
    y: ComplexSpectrum,
    prominence_db: float = 3.0,
    labels: Sequence[str] | None = None,
) -> list[ModeMetrics]:
    """Metrics of every resonance found in sampled data.

    Unlike a model, measured data cannot be re-sampled, so f_s and f_p are
    the parabola-refined grid extrema and Q_p uses the samples as given.
    A Q_p that the grid cannot resolve is reported as NaN with a warning.
    """
    y = y.to_admittance()
    z = y.to_impedance()
    out = []
    for n, pair in enumerate(find_modes(y, prominence_db)):
        k2 = extract_k2(pair.f_s, pair.f_p)
        try:
            q_p = qp_phase_slope(z, pair.f_p)
        except ValueError as exc:
            warnings.warn(f"Q_p unresolved at {pair.f_p:.6g} Hz: {exc}", ModeWarning, stacklevel=2)
            q_p = math.nan
        label = labels[n] if labels is not None and n < len(labels) else f"mode{n + 1}"
        out.append(ModeMetrics(label, pair.f_s, pair.f_p, k2, q_p, k2 * q_p))
    return out
