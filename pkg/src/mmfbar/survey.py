"""Figure-of-merit table for high-frequency acoustic resonators.

Entries carry frequency, k2 and Q; the FoM ``k2 * Q`` is stored at full
precision and only rounded (to 2 decimals) for display.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

CSV_HEADER = ("label", "frequency_hz", "k2", "q", "technology")


def fom(k2: float, q: float) -> float:
    """``k2 * q`` for ``0 < k2 < 1`` and ``q > 0``."""
    if not (math.isfinite(k2) and 0 < k2 < 1):
        raise ValueError(f"k2 must lie in (0, 1), got {k2!r}")
    if not (math.isfinite(q) and q > 0):
        raise ValueError(f"q must be positive, got {q!r}")
    return k2 * q


def display(x: float) -> str:
    """Two-decimal string used in tables and reports."""
    return f"{x:.2f}"


@dataclass(frozen=True)
class SurveyEntry:
    label: str
    frequency: float
    k2: float
    q: float
    technology: str = ""
    fom: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.frequency) and self.frequency > 0):
            raise ValueError(f"{self.label}: frequency must be positive")
        object.__setattr__(self, "fom", fom(self.k2, self.q))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "frequency_hz": self.frequency,
            "k2": self.k2,
            "q": self.q,
            "technology": self.technology,
            "fom": self.fom,
        }


def this_work() -> list[SurveyEntry]:
    """The measured S1 and S3 results of the 85 nm ScAlN resonator."""
    return [
        SurveyEntry("this work S1", 21.4e9, 0.070, 62, "sputtered-ScAlN"),
        SurveyEntry("this work S3", 55.4e9, 0.040, 19, "sputtered-ScAlN"),
    ]


def rank(entries: Iterable[SurveyEntry], min_frequency: float = 0.0) -> list[SurveyEntry]:
    """Entries at or above ``min_frequency``, best FoM first.

    Ties go to the higher frequency, then to the lexicographically smaller
    label, so the order never depends on the input order.
    """
    kept = [e for e in entries if e.frequency >= min_frequency]
    return sorted(kept, key=lambda e: (-e.fom, -e.frequency, e.label, e.k2, e.q, e.technology))


def loads_csv(text: str) -> list[SurveyEntry]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
        raise ValueError(f"line 1: expected header {','.join(CSV_HEADER)}")
    out = []
    for n, r in enumerate(rows[1:], start=2):
        if not r or not "".join(r).strip():
            continue
        if len(r) != len(CSV_HEADER):
            raise ValueError(f"line {n}: expected {len(CSV_HEADER)} columns, got {len(r)}")
        try:
            out.append(SurveyEntry(r[0], float(r[1]), float(r[2]), float(r[3]), r[4]))
        except ValueError as exc:
            raise ValueError(f"line {n}: {exc}") from None
    return out


def dumps_csv(entries: Sequence[SurveyEntry]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for e in entries:
        w.writerow([e.label, repr(e.frequency), repr(e.k2), repr(e.q), e.technology])
    return buf.getvalue()


def dumps_json(entries: Sequence[SurveyEntry]) -> str:
    rows = []
    for e in entries:
        d = e.to_dict()
        d["fom_display"] = display(e.fom)
        rows.append(d)
    return json.dumps({"entries": rows}, indent=2) + "\n"
