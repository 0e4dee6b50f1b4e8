"""Touchstone v1 reader and writer for 1- and 2-port S-parameter files.

Data are held in Hz and as complex S values; the option line's frequency
unit and number format are kept so a written file looks like the one read.
Angles are degrees in the file and radians nowhere else but here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FREQ_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
FORMATS = ("RI", "MA", "DB")
_UNIT_NAMES = {"HZ": "Hz", "KHZ": "kHz", "MHZ": "MHz", "GHZ": "GHz"}


class TouchstoneError(ValueError):
    """Malformed Touchstone text; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class OptionLine:
    freq_unit: str = "GHz"
    parameter: str = "S"
    format: str = "MA"
    z0: float = 50.0

    def __post_init__(self):
        unit = self.freq_unit.upper()
        if unit not in FREQ_UNITS:
            raise ValueError(f"unknown frequency unit {self.freq_unit!r}")
        object.__setattr__(self, "freq_unit", _UNIT_NAMES[unit])
        if self.parameter.upper() != "S":
            raise ValueError("only S parameters are supported")
        object.__setattr__(self, "parameter", "S")
        if self.format.upper() not in FORMATS:
            raise ValueError(f"unknown data format {self.format!r}")
        object.__setattr__(self, "format", self.format.upper())
        if not (math.isfinite(self.z0) and self.z0 > 0):
            raise ValueError("reference impedance must be positive")

    @property
    def scale(self) -> float:
        return FREQ_UNITS[self.freq_unit.upper()]

    def text(self) -> str:
        return f"# {self.freq_unit.upper()} S {self.format} R {self.z0!r}"


@dataclass(frozen=True, eq=False)
class TouchstoneDocument:
    """A 1- or 2-port S-parameter table.

    ``s`` has shape ``(n, ports, ports)``; ``comments`` are the ``!`` lines
    (without the marker), in file order.
    """

    ports: int
    frequencies: np.ndarray
    s: np.ndarray
    options: OptionLine = field(default_factory=OptionLine)
    comments: tuple[str, ...] = ()
    version: int = 1

    def __post_init__(self):
        if self.ports not in (1, 2):
            raise ValueError("only 1- and 2-port files are supported")
        if self.version != 1:
            raise ValueError("only Touchstone version 1 is supported")
        f = np.asarray(self.frequencies, dtype=float).reshape(-1)
        s = np.asarray(self.s, dtype=complex)
        if s.size == 0:
            s = s.reshape(0, self.ports, self.ports)
        if s.shape != (f.size, self.ports, self.ports):
            raise ValueError(f"s must have shape ({f.size}, {self.ports}, {self.ports}), got {s.shape}")
        if f.size and not (np.all(np.isfinite(f)) and f[0] >= 0 and np.all(np.diff(f) > 0)):
            raise ValueError("frequencies must be finite, non-negative and strictly increasing")
        if not np.all(np.isfinite(s)):
            raise ValueError("S values must be finite")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "s", s)
        comments = tuple(str(c) for c in self.comments)
        if any(c.splitlines() not in ([c], []) for c in comments):
            raise ValueError("comments cannot contain line breaks")
        object.__setattr__(self, "comments", comments)

    def __len__(self):
        return self.frequencies.size

    def allclose(self, other: "TouchstoneDocument", rtol: float = 1e-12) -> bool:
        """Same layout and options, numbers equal to ``rtol`` (relative)."""
        if (self.ports, self.options, self.comments, len(self)) != (
            other.ports,
            other.options,
            other.comments,
            len(other),
        ):
            return False
        tol_f = rtol * max(1.0, float(np.max(np.abs(self.frequencies), initial=0.0)))
        tol_s = rtol * max(1.0, float(np.max(np.abs(self.s), initial=0.0)))
        return bool(
            np.all(np.abs(self.frequencies - other.frequencies) <= tol_f)
            and np.all(np.abs(self.s - other.s) <= tol_s)
        )


def _parse_options(body: str, lineno: int) -> OptionLine:
    unit, param, fmt, z0 = "GHZ", "S", "MA", 50.0
    toks = body.split()
    i = 0
    while i < len(toks):
        t = toks[i].upper()
        if t in FREQ_UNITS:
            unit = t
        elif t in ("S", "Y", "Z", "H", "G"):
            if t != "S":
                raise TouchstoneError(f"{t} parameters are not supported; only S", lineno)
            param = t
        elif t in FORMATS:
            fmt = t
        elif t == "R":
            if i + 1 >= len(toks):
                raise TouchstoneError("malformed option line: R needs a value", lineno)
            z0 = _number(toks[i + 1], lineno)
            if not z0 > 0:
                raise TouchstoneError("malformed option line: reference impedance must be positive", lineno)
            i += 1
        else:
            raise TouchstoneError(f"malformed option line: unexpected token {toks[i]!r}", lineno)
        i += 1
    return OptionLine(unit, param, fmt, z0)


def _number(tok: str, lineno: int) -> float:
    try:
        x = float(tok)
    except ValueError:
        raise TouchstoneError(f"not a number: {tok[:40]!r}", lineno) from None
    if not math.isfinite(x):
        raise TouchstoneError(f"non-finite value {tok[:40]!r}", lineno)
    return x


def _to_complex(a: np.ndarray, b: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "RI":
        return a + 1j * b
    mag = a if fmt == "MA" else 10.0 ** (a / 20)
    return mag * np.exp(1j * np.deg2rad(b))


def _from_complex(s: np.ndarray, fmt: str) -> tuple[np.ndarray, np.ndarray]:
    if fmt == "RI":
        return s.real, s.imag
    ang = np.rad2deg(np.angle(s))
    mag = np.abs(s)
    if fmt == "MA":
        return mag, ang
    # a zero magnitude has no dB value; -6000 dB stands in for it
    return 20 * np.log10(np.maximum(mag, 1e-300)), ang


def parse_touchstone(text: str | bytes, ports: int | None = None) -> TouchstoneDocument:
    """Parse Touchstone v1 text.

    ``ports`` is usually implied by the file extension; when omitted it is
    inferred from the first data row (3 numbers: 1-port, 9: 2-port).  Any
    problem raises :class:`TouchstoneError` naming the offending line.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TouchstoneError(f"not UTF-8 text (byte {exc.start})") from None
    if ports is not None and ports not in (1, 2):
        raise TouchstoneError("only 1- and 2-port files are supported")

    options: OptionLine | None = None
    comments: list[str] = []
    rows: list[list[float]] = []
    last_f = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line, bang, comment = raw.partition("!")
        if bang:
            comments.append(comment)
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            raise TouchstoneError("Touchstone v2 keywords are not supported (v1 only)", lineno)
        if line.startswith("#"):
            if options is not None:
                continue  # later option lines are ignored by convention
            if rows:
                raise TouchstoneError("option line must precede the data", lineno)
            options = _parse_options(line[1:], lineno)
            continue
        nums = [_number(t, lineno) for t in line.split()]
        if ports is None:
            if len(nums) not in (3, 9):
                raise TouchstoneError(
                    f"expected 3 (1-port) or 9 (2-port) numbers per row, got {len(nums)}", lineno
                )
            ports = 1 if len(nums) == 3 else 2
        want = 1 + 2 * ports * ports
        if len(nums) != want:
            raise TouchstoneError(f"expected {want} numbers for a {ports}-port row, got {len(nums)}", lineno)
        if nums[0] < 0:
            raise TouchstoneError("negative frequency", lineno)
        if not nums[0] > last_f:
            raise TouchstoneError("frequencies must be strictly increasing", lineno)
        last_f = nums[0]
        rows.append(nums)

    options = options or OptionLine()
    ports = ports or 1
    data = np.array(rows, dtype=float).reshape(len(rows), 1 + 2 * ports * ports)
    f = data[:, 0] * options.scale
    with np.errstate(over="ignore", invalid="ignore"):
        vals = _to_complex(data[:, 1::2], data[:, 2::2], options.format)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(vals), axis=1))[0])
        raise TouchstoneError(f"value out of range in data row {bad + 1}")
    if not (np.all(np.isfinite(f)) and np.all(np.diff(f) > 0)):
        raise TouchstoneError("frequencies overflow or collapse after unit scaling")
    # file order is S11 S21 S12 S22, i.e. column-major
    s = vals.reshape(-1, ports, ports).transpose(0, 2, 1)
    return TouchstoneDocument(ports, f, s, options, tuple(comments))


def write_touchstone(doc: TouchstoneDocument) -> str:
    """Touchstone v1 text that parses back to ``doc`` (17 significant digits)."""
    out = [f"!{c}" for c in doc.comments]
    out.append(doc.options.text())
    flat = doc.s.transpose(0, 2, 1).reshape(len(doc), doc.ports * doc.ports)
    a, b = _from_complex(flat, doc.options.format)
    f = doc.frequencies / doc.options.scale
    for k in range(len(doc)):
        nums = [f[k]]
        for x, y in zip(a[k], b[k]):
            nums += [x, y]
        out.append(" ".join(f"{v:.17g}" for v in nums))
    return "\n".join(out) + "\n"
