"""From measured network data to mBVD parameters and Bode Q.

The fit follows the usual order for mmWave resonators: the
electromagnetic elements (R_s, L_s, C_0, optionally R_0) are fitted first
on the off-resonance part of the spectrum, then the motional branches are
added with those held fixed, and a final joint pass polishes every element
together.  All stages minimise a weighted sum of squared errors in
log10|Y| and phase, and use a fixed set of perturbed starting points drawn
from ``FitConfig.seed`` so the result is reproducible bit for bit.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .mbvd import K2_LIMIT, MbvdParams, MotionalBranch, branch_from_targets, derived_metrics, mbvd_admittance
from .spectrum import ComplexSpectrum, ModeMetrics, extract_k2, find_modes

TOPOLOGIES = ("series-thru", "shunt")


class FitError(ValueError):
    """The data do not support the requested fit."""


# -- network conversions -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class TwoPortData:
    """Scattering matrices ``s[k]`` (2x2) at ``frequencies[k]``."""

    frequencies: np.ndarray
    s: np.ndarray
    z0: float | tuple[float, float] = 50.0

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        s = np.asarray(self.s, dtype=complex)
        if s.shape != (f.size, 2, 2):
            raise ValueError("s must have shape (n_freq, 2, 2)")
        if f.size > 1 and not np.all(np.diff(f) > 0):
            raise ValueError("frequencies must be strictly increasing")
        if np.any(np.asarray(self.z0, dtype=float) <= 0):
            raise ValueError("z0 must be positive")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "s", s)


@dataclass(frozen=True, eq=False)
class TwoPortY:
    """Admittance matrices plus a mask of frequencies where conversion failed."""

    frequencies: np.ndarray
    y: np.ndarray
    singular: np.ndarray


def _z0_vector(z0) -> np.ndarray:
    z = np.broadcast_to(np.asarray(z0, dtype=float), (2,))
    return z.copy()


def s_to_y(d: TwoPortData, rcond: float = 1e-13) -> TwoPortY:
    """``Y = G (I - S)(I + S)^-1 G`` with ``G = diag(1/sqrt(z0))``.

    Frequencies where ``I + S`` is numerically singular come back as NaN
    and are flagged in ``singular`` (with a warning), never dropped.
    """
    eye = np.eye(2)
    a = eye + d.s
    det = np.linalg.det(a)
    scale = np.linalg.norm(a, axis=(1, 2)) ** 2
    singular = np.abs(det) <= rcond * np.maximum(scale, 1.0)
    g = np.diag(1 / np.sqrt(_z0_vector(d.z0)))
    y = np.full(d.s.shape, np.nan + 0j)
    ok = ~singular
    if np.any(ok):
        # (I - S)(I + S)^-1  ==  solve from the right
        m = np.linalg.solve(np.swapaxes(a[ok], -1, -2), np.swapaxes(eye - d.s[ok], -1, -2))
        y[ok] = g @ np.swapaxes(m, -1, -2) @ g
    if np.any(singular):
        idx = np.flatnonzero(singular)
        warnings.warn(f"I + S is singular at {idx.size} frequencies (indices {idx[:10].tolist()})")
    return TwoPortY(d.frequencies, y, singular)


def y_to_s(y: np.ndarray, z0=50.0) -> np.ndarray:
    """Inverse of :func:`s_to_y` for an array of 2x2 admittance matrices."""
    y = np.asarray(y, dtype=complex)
    r = np.diag(np.sqrt(_z0_vector(z0)))
    yn = r @ y @ r
    eye = np.eye(2)
    m = np.linalg.solve(np.swapaxes(eye + yn, -1, -2), np.swapaxes(eye - yn, -1, -2))
    return np.swapaxes(m, -1, -2)


def device_admittance(y2p: TwoPortY, topology: str = "series-thru") -> ComplexSpectrum:
    """Admittance of the device under test from two-port Y data.

    ``series-thru`` treats the device as the element between the ports,
    ``-(Y12 + Y21)/2``; ``shunt`` takes it from port 1 to ground,
    ``Y11 + (Y12 + Y21)/2``.
    """
    y12, y21 = y2p.y[:, 0, 1], y2p.y[:, 1, 0]
    if topology == "series-thru":
        v = -(y12 + y21) / 2
    elif topology == "shunt":
        v = y2p.y[:, 0, 0] + (y12 + y21) / 2
    else:
        raise ValueError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")
    return ComplexSpectrum(y2p.frequencies, v, "admittance")


def y_to_s11(y: ComplexSpectrum, z0: float = 50.0) -> ComplexSpectrum:
    """One-port reflection ``(1 - z0 Y)/(1 + z0 Y)``; singular points become NaN."""
    yv = y.to_admittance().values
    den = 1 + z0 * yv
    bad = den == 0
    if np.any(bad):
        warnings.warn(f"1 + z0*Y vanishes at {int(bad.sum())} frequencies")
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(bad, np.nan + 0j, (1 - z0 * yv) / np.where(bad, 1, den))
    return ComplexSpectrum(y.frequencies, s, "reflection")


def y_from_s11(s11: ComplexSpectrum, z0: float = 50.0) -> ComplexSpectrum:
    s = s11.values
    den = z0 * (1 + s)
    bad = den == 0
    if np.any(bad):
        warnings.warn(f"S11 = -1 at {int(bad.sum())} frequencies")
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(bad, np.nan + 0j, (1 - s) / np.where(bad, 1, den))
    return ComplexSpectrum(s11.frequencies, y, "admittance")


def add_noise(y: ComplexSpectrum, level_db: float, seed: int = 0) -> ComplexSpectrum:
    """Additive complex Gaussian noise with rms ``10**(level_db/20) * |y|``."""
    rng = np.random.default_rng(seed)
    n = rng.standard_normal((2, len(y)))
    sigma = 10 ** (level_db / 20) * np.abs(y.values) / math.sqrt(2)
    return ComplexSpectrum(y.frequencies, y.values + sigma * (n[0] + 1j * n[1]), y.quantity)


# -- fitting -----------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    mode_windows: tuple[tuple[float, float], ...]
    em_exclusion: tuple[tuple[float, float], ...] | None = None
    weights: tuple[float, float] = (1.0, 1.0)
    max_iterations: int = 400
    tolerance: float = 1e-12
    seed: int = 0
    starts: int = 3
    fit_r0: bool = False
    r_0: float = 0.0
    prominence_db: float = 3.0

    def __post_init__(self):
        wins = tuple(sorted((float(a), float(b)) for a, b in self.mode_windows))
        object.__setattr__(self, "mode_windows", wins)
        if self.em_exclusion is not None:
            bands = tuple(sorted((float(a), float(b)) for a, b in self.em_exclusion))
            object.__setattr__(self, "em_exclusion", bands)
        for lo, hi in wins + (self.em_exclusion or ()):
            if not 0 < lo < hi:
                raise ValueError(f"window ({lo}, {hi}) needs 0 < lo < hi")
        for (_, hi), (lo, _) in zip(wins, wins[1:]):
            if lo < hi:
                raise ValueError("mode windows overlap")
        if self.starts < 1 or self.max_iterations < 1:
            raise ValueError("starts and max_iterations must be positive")
        if len(self.weights) != 2 or min(self.weights) < 0 or max(self.weights) <= 0:
            raise ValueError("weights must be a non-negative (amplitude, phase) pair")

    def em_mask(self, f: np.ndarray) -> np.ndarray:
        """Samples used by the electromagnetic stage."""
        if self.em_exclusion is not None:
            m = np.zeros(f.shape, bool)
            for lo, hi in self.em_exclusion:
                m |= (f >= lo) & (f <= hi)
            return m
        m = np.ones(f.shape, bool)
        for lo, hi in self.mode_windows:
            m &= ~((f >= lo) & (f <= hi))
        return m

    def mode_mask(self, f: np.ndarray) -> np.ndarray:
        m = np.zeros(f.shape, bool)
        for lo, hi in self.mode_windows:
            m |= (f >= lo) & (f <= hi)
        return m

    def check_against(self, f: np.ndarray) -> None:
        for lo, hi in self.mode_windows:
            if lo < f[0] or hi > f[-1]:
                raise FitError(f"mode window ({lo:.6g}, {hi:.6g}) Hz lies outside the measured grid")


@dataclass(frozen=True)
class EmFit:
    r_s: float
    l_s: float
    c_0: float
    r_0: float
    residual: float  # rms of the weighted residual vector
    converged: bool
    message: str = ""


@dataclass(frozen=True)
class MotionalFit:
    branches: tuple[MotionalBranch, ...]
    residual: float
    converged: bool
    message: str = ""


@dataclass(frozen=True)
class FitResult:
    params: MbvdParams
    em: EmFit
    motional: MotionalFit
    residual: float
    converged: bool
    metrics: tuple[ModeMetrics, ...]
    diagnostics: tuple[str, ...] = field(default_factory=tuple)

    def report(self) -> dict:
        return {
            "converged": self.converged,
            "residual_rms": {
                "stage1_em": self.em.residual,
                "stage2_motional": self.motional.residual,
                "stage3_joint": self.residual,
            },
            "modes": [
                dict(m.to_dict(), q_motional=b.q_m)
                for m, b in zip(self.metrics, self.params.branches)
            ],
            "diagnostics": list(self.diagnostics),
        }


def _residual(model: np.ndarray, data: np.ndarray, weights) -> np.ndarray:
    ratio = model / data
    return np.concatenate([weights[0] * np.log10(np.abs(ratio)), weights[1] * np.angle(ratio)])


def _solve(fun, x0, lower, scale, cfg: FitConfig):
    """Bounded damped least squares from ``cfg.starts`` deterministic starts.

    Every element is positive and spans many decades, so the search runs on
    ``log(x)``; zero-valued starts are lifted to ``1e-6 * scale``.
    """
    rng = np.random.default_rng(cfg.seed)
    x0 = np.asarray(x0, float)
    lower = np.asarray(lower, float)
    floor = np.maximum(lower, 1e-6 * np.asarray(scale, float))
    lo = np.where(lower > 0, np.log(np.where(lower > 0, lower, 1.0)), -np.inf)
    size = None

    def fun_u(u):
        nonlocal size
        with np.errstate(all="ignore"):
            r = fun(np.exp(u))
        size = size or r.size
        # trial steps far outside the physical range get a flat penalty
        return r if np.all(np.isfinite(r)) else np.full(size, 1e3)

    best = None
    for k in range(cfg.starts):
        start = x0 if k == 0 else x0 * rng.uniform(0.8, 1.2, size=x0.size)
        u0 = np.maximum(np.log(np.maximum(start, floor)), lo + 1e-9)
        res = least_squares(
            fun_u,
            u0,
            bounds=(lo, np.inf),
            method="trf",
            max_nfev=cfg.max_iterations * (x0.size + 1),
            ftol=cfg.tolerance,
            xtol=cfg.tolerance,
            gtol=cfg.tolerance,
        )
        if best is None or res.cost < best.cost:
            best = res
    best.x = np.exp(best.x)
    return best


def _rms(res) -> float:
    return float(np.sqrt(2 * res.cost / max(res.fun.size, 1)))


def em_seed(y: ComplexSpectrum, mask: np.ndarray | None = None):
    """Closed-form branchless estimate from ``Z = R + j(w L_s - 1/(w C_0))``.

    C_0 comes from the lowest-frequency decile, where the series inductance
    is negligible; L_s then from a one-parameter regression of
    ``w Im(Z) + 1/C_0`` on ``w^2``.
    """
    f = y.frequencies if mask is None else y.frequencies[mask]
    yv = y.values if mask is None else y.values[mask]
    w = 2 * np.pi * f
    z = 1 / yv
    low = slice(0, max(3, f.size // 10))
    c_0 = float(np.median(-1 / (w[low] * z[low].imag)))
    if not c_0 > 0:
        c_0 = float(np.median(np.abs(yv.imag / w)))
    rhs = w * z.imag + 1 / c_0
    l_s = float(np.dot(w ** 2, rhs) / np.dot(w ** 2, w ** 2))
    return max(float(np.median(z.real)), 0.0), max(l_s, 0.0), c_0


def fit_em_params(y: ComplexSpectrum, cfg: FitConfig) -> EmFit:
    """Stage 1: branchless mBVD fitted to the off-resonance samples."""
    y = y.to_admittance()
    f = y.frequencies
    mask = cfg.em_mask(f)
    if mask.sum() < 0.2 * f.size:
        raise FitError("electromagnetic bands must cover at least 20% of the grid")
    fm, ym = f[mask], y.values[mask]
    r_tot, l_s, c_0 = em_seed(y, mask)
    r_s = max(r_tot - cfg.r_0, 0.0)

    if cfg.fit_r0:
        def model(x):
            return mbvd_admittance(MbvdParams(c_0=x[2], r_s=x[0], l_s=x[1], r_0=x[3]), fm).values
        x0 = [r_s, l_s, c_0, 0.0]
        scale = np.array([max(r_s, 1.0), max(l_s, 1e-11), c_0, 1.0])
    else:
        def model(x):
            return mbvd_admittance(MbvdParams(c_0=x[2], r_s=x[0], l_s=x[1], r_0=cfg.r_0), fm).values
        x0 = [r_s, l_s, c_0]
        scale = np.array([max(r_s, 1.0), max(l_s, 1e-11), c_0])

    lower = np.zeros(len(x0))
    lower[2] = c_0 * 1e-6
    res = _solve(lambda x: _residual(model(x), ym, cfg.weights), x0, lower, scale, cfg)
    x = res.x
    r_0 = float(x[3]) if cfg.fit_r0 else cfg.r_0
    return EmFit(float(x[0]), float(x[1]), float(x[2]), r_0, _rms(res), res.status > 0, res.message)


def _core(y: ComplexSpectrum, r_s: float, l_s: float) -> ComplexSpectrum:
    w = y.omega
    return ComplexSpectrum(y.frequencies, 1 / (1 / y.values - r_s - 1j * w * l_s), "admittance")


def _seed_branch(core: ComplexSpectrum, f_s, f_p, c_0, r_0) -> MotionalBranch:
    k2 = min(extract_k2(f_s, f_p), 0.99 * K2_LIMIT)
    proto = branch_from_targets(f_s, k2, 1.0, c_0)
    i = int(np.argmin(np.abs(core.frequencies - f_s)))
    w = 2 * np.pi * core.frequencies[i]
    y_mot = core.values[i] - 1j * w * c_0 / (1 + 1j * w * r_0 * c_0)
    q = 50.0
    if y_mot.real > 0:
        q = float(np.clip(2 * math.pi * f_s * proto.l_m * y_mot.real, 1.0, 1e5))
    return branch_from_targets(f_s, k2, q, c_0)


def _match_windows(core: ComplexSpectrum, cfg: FitConfig) -> list:
    pairs = find_modes(core, prominence_db=cfg.prominence_db)
    found = []
    for lo, hi in cfg.mode_windows:
        inside = [p for p in pairs if lo <= p.f_s <= hi]
        if not inside:
            raise FitError(f"no resonance in window ({lo:.6g}, {hi:.6g}) Hz")
        if len(inside) > 1:
            raise FitError(f"{len(inside)} resonances in window ({lo:.6g}, {hi:.6g}) Hz; expected one")
        found.append(inside[0])
    return found


def fit_motional(y: ComplexSpectrum, em: EmFit, cfg: FitConfig) -> MotionalFit:
    """Stage 2: one motional branch per mode window, EM elements held fixed."""
    y = y.to_admittance()
    f = y.frequencies
    cfg.check_against(f)
    core = _core(y, em.r_s, em.l_s)
    try:
        found = _match_windows(core, cfg)
    except FitError:
        # A biased L_s can fold the parasitic self-resonance onto a mode;
        # the closed-form estimate is cruder but keeps the modes apart.
        r_tot, l_s, _c0 = em_seed(y, cfg.em_mask(f))
        found = _match_windows(_core(y, max(r_tot - em.r_0, 0.0), l_s), cfg)
    seeds = [_seed_branch(core, p.f_s, p.f_p, em.c_0, em.r_0) for p in found]

    mask = cfg.mode_mask(f)
    fm, ym = f[mask], y.values[mask]

    def params(x):
        br = tuple(MotionalBranch(*x[3 * i : 3 * i + 3]) for i in range(len(seeds)))
        return MbvdParams(c_0=em.c_0, r_s=em.r_s, l_s=em.l_s, r_0=em.r_0, branches=br)

    x0 = np.array([v for b in seeds for v in (b.r_m, b.l_m, b.c_m)])
    lower = np.array([v for b in seeds for v in (0.0, b.l_m * 1e-6, b.c_m * 1e-6)])

    def fun(x):
        try:
            return _residual(mbvd_admittance(params(x), fm).values, ym, cfg.weights)
        except ValueError:  # branches crossed over in frequency
            return np.full(2 * fm.size, 1e3)

    res = _solve(fun, x0, lower, np.maximum(x0, lower), cfg)
    return MotionalFit(params(res.x).branches, _rms(res), res.status > 0, res.message)


def fit_mbvd(y: ComplexSpectrum, cfg: FitConfig) -> FitResult:
    """Full pipeline: EM stage, motional stage, then a joint polish."""
    y = y.to_admittance()
    diagnostics = []
    em = fit_em_params(y, cfg)
    if not em.converged:
        diagnostics.append(f"stage 1 did not converge: {em.message}")
    mot = fit_motional(y, em, cfg)
    if not mot.converged:
        diagnostics.append(f"stage 2 did not converge: {mot.message}")

    n_em = 4 if cfg.fit_r0 else 3

    def params(x):
        r_0 = x[3] if cfg.fit_r0 else cfg.r_0
        br = tuple(MotionalBranch(*x[n_em + 3 * i : n_em + 3 * i + 3]) for i in range(len(mot.branches)))
        return MbvdParams(c_0=x[2], r_s=x[0], l_s=x[1], r_0=r_0, branches=br)

    x0 = [em.r_s, em.l_s, em.c_0] + ([em.r_0] if cfg.fit_r0 else [])
    x0 = np.array(x0 + [v for b in mot.branches for v in (b.r_m, b.l_m, b.c_m)])
    scale = np.maximum(np.abs(x0), [1.0, 1e-11, em.c_0] + ([1.0] if cfg.fit_r0 else []) + [0.0] * (x0.size - n_em))
    lower = np.zeros_like(x0)
    lower[2] = em.c_0 * 1e-6
    lower[n_em:] = np.where(np.arange(x0.size - n_em) % 3 == 0, 0.0, x0[n_em:] * 1e-6)

    def fun(x):
        try:
            return _residual(mbvd_admittance(params(x), y.frequencies).values, y.values, cfg.weights)
        except ValueError:
            return np.full(2 * len(y), 1e3)

    joint = _solve(fun, x0, lower, scale, replace(cfg, starts=1))
    if joint.status <= 0:
        diagnostics.append(f"stage 3 did not converge: {joint.message}")
    p = params(joint.x)
    converged = em.converged and mot.converged and joint.status > 0
    return FitResult(p, em, mot, _rms(joint), converged, tuple(derived_metrics(p)), tuple(diagnostics))


def auto_fit_config(y: ComplexSpectrum, prominence_db: float = 3.0, seed: int = 0, **kw) -> FitConfig:
    """Mode windows found from the data itself.

    The series parasitics are estimated in closed form over the whole
    spectrum, removed, and each resonance of the remaining core gets a
    window of twice its f_s-f_p spacing on either side, clipped halfway to
    its neighbours.  Used when no fit configuration is supplied.
    """
    y = y.to_admittance()
    f = y.frequencies
    pairs: list = []
    mask = np.ones(f.shape, bool)
    for _ in range(2):
        r_s, l_s, _c0 = em_seed(y, mask)
        core = _core(y, r_s, l_s)
        pairs = find_modes(core, prominence_db=prominence_db)
        mask = np.ones(f.shape, bool)
        for p in pairs:
            d = p.f_p - p.f_s
            mask &= ~((f >= p.f_s - 3 * d) & (f <= p.f_p + 3 * d))
        if mask.sum() < 0.2 * f.size:
            mask = np.ones(f.shape, bool)
    if not pairs:
        raise FitError("no resonances found in the spectrum")
    windows = []
    for n, p in enumerate(pairs):
        d = p.f_p - p.f_s
        lo, hi = max(p.f_s - 2 * d, f[0]), min(p.f_p + 2 * d, f[-1])
        if n > 0:
            lo = max(lo, 0.5 * (pairs[n - 1].f_p + p.f_s))
        if n + 1 < len(pairs):
            hi = min(hi, 0.5 * (p.f_p + pairs[n + 1].f_s))
        windows.append((float(lo), float(hi)))
    return FitConfig(mode_windows=tuple(windows), seed=seed, prominence_db=prominence_db, **kw)


# -- Bode Q ------------------------------------------------------------------


def smooth_ma(series, window: int) -> np.ndarray:
    """Centred moving average whose window shrinks symmetrically at the ends.

    NaN samples are skipped in each average.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if window > n:
        raise ValueError(f"window {window} exceeds series length {n}")
    if window == 1:
        return x.copy()
    h = window // 2
    idx = np.arange(n)
    half = np.minimum(h, np.minimum(idx, n - 1 - idx))
    finite = np.isfinite(x)
    cs = np.concatenate([[0.0], np.cumsum(np.where(finite, x, 0.0))])
    cn = np.concatenate([[0], np.cumsum(finite)])
    lo, hi = idx - half, idx + half + 1
    count = cn[hi] - cn[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, (cs[hi] - cs[lo]) / count, np.nan)


@dataclass(frozen=True, eq=False)
class BodeQ:
    frequencies: np.ndarray
    q_raw: np.ndarray
    q_smoothed: np.ndarray
    valid: np.ndarray  # |S11| < 1
    window: int

    def max_in(self, f_lo: float, f_hi: float) -> tuple[float, float]:
        """(frequency, value) of the largest smoothed Q inside a band."""
        m = (self.frequencies >= f_lo) & (self.frequencies <= f_hi) & self.valid
        m &= np.isfinite(self.q_smoothed)
        if not np.any(m):
            raise ValueError("no valid Bode Q samples in the band")
        i = np.flatnonzero(m)[np.argmax(self.q_smoothed[m])]
        return float(self.frequencies[i]), float(self.q_smoothed[i])


def bode_q(s11: ComplexSpectrum, smooth_window: int = 11) -> BodeQ:
    """Frequency-resolved ``Q = w tau_g |S11| / (1 - |S11|^2)``.

    ``tau_g = -d(phase)/dw`` by central differences (one-sided at the ends)
    on the unwrapped phase.  Points with ``|S11| >= 1`` are NaN in the raw
    series and excluded from smoothing and maxima.
    """
    if s11.quantity != "reflection":
        raise ValueError("bode_q expects a reflection spectrum")
    if len(s11) < 3:
        raise ValueError("need at least 3 points for the group delay")
    w = s11.omega
    mag = np.abs(s11.values)
    valid = np.isfinite(mag) & (mag < 1)
    phase = np.unwrap(np.angle(s11.values))
    tau = -np.gradient(phase, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(valid, w * tau * mag / (1 - mag ** 2), np.nan)
    return BodeQ(s11.frequencies, q, smooth_ma(q, smooth_window), valid, smooth_window)
