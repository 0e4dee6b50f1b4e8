"""CSV and JSON result files.

CSV uses ``\\n`` line endings and full-precision scientific notation, so
values survive a write/read cycle exactly.
"""
from __future__ import annotations

import csv
import io
import json
from typing import Iterable, Sequence

import numpy as np

from ..extraction import BodeQ
from ..spectrum import QUANTITIES, ComplexSpectrum, ModeMetrics
from ..stacksim import SweepRow

SPECTRUM_HEADER = ("freq_hz", "re", "im", "quantity")
BODE_HEADER = ("freq_hz", "q_raw", "q_smoothed")
SWEEP_HEADER = ("value", "label", "f_s_hz", "f_p_hz", "k2", "q_p", "fom")


def _g(x: float) -> str:
    return f"{x:.17e}"


def _csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def spectrum_to_csv(y: ComplexSpectrum) -> str:
    v = y.values
    return _csv(
        SPECTRUM_HEADER,
        ((_g(f), _g(z.real), _g(z.imag), y.quantity) for f, z in zip(y.frequencies, v)),
    )


def spectrum_from_csv(text: str) -> ComplexSpectrum:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(h.strip() for h in rows[0]) != SPECTRUM_HEADER:
        raise ValueError(f"line 1: expected header {','.join(SPECTRUM_HEADER)}")
    f, v, kinds = [], [], set()
    for n, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != 4:
            raise ValueError(f"line {n}: expected 4 columns, got {len(r)}")
        try:
            f.append(float(r[0]))
            v.append(complex(float(r[1]), float(r[2])))
        except ValueError:
            raise ValueError(f"line {n}: not a number") from None
        kinds.add(r[3].strip())
    if len(kinds) > 1:
        raise ValueError("mixed quantities in one file")
    kind = kinds.pop() if kinds else "admittance"
    if kind not in QUANTITIES:
        raise ValueError(f"unknown quantity {kind!r}")
    return ComplexSpectrum(np.array(f), np.array(v, dtype=complex), kind)


def bode_to_csv(b: BodeQ) -> str:
    return _csv(
        BODE_HEADER,
        ((_g(f), _g(r), _g(s)) for f, r, s in zip(b.frequencies, b.q_raw, b.q_smoothed)),
    )


def modes_to_json(modes: Sequence[ModeMetrics]) -> str:
    return json.dumps({"modes": [m.to_dict() for m in modes]}, indent=2) + "\n"


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    """One line per (swept value, mode)."""
    out = []
    for row in rows:
        for m in row.modes:
            out.append((_g(row.value), m.label, _g(m.f_s), _g(m.f_p), _g(m.k2), _g(m.q_p), _g(m.fom)))
    return _csv(SWEEP_HEADER, out)
