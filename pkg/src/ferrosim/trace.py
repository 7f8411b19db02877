"""Time-aligned simulation records and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Trace:
    time: np.ndarray
    signals: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.signals = {k: np.asarray(v, dtype=float) for k, v in self.signals.items()}
        if self.time.size > 1 and not np.all(np.diff(self.time) > 0):
            raise ValueError("trace time must be strictly increasing")
        for name, sig in self.signals.items():
            if sig.shape != self.time.shape:
                raise ValueError(f"signal {name!r} has length {sig.size}, expected {self.time.size}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.signals[name]

    def __contains__(self, name: str) -> bool:
        return name in self.signals

    def __len__(self) -> int:
        return self.time.size

    def window(self, t0: float, t1: float) -> "Trace":
        """Samples with ``t0 <= t <= t1`` (meta carried over)."""
        m = (self.time >= t0) & (self.time <= t1)
        return Trace(self.time[m], {k: v[m] for k, v in self.signals.items()}, dict(self.meta))

    def at(self, name: str, t: float) -> float:
        return float(np.interp(t, self.time, self.signals[name]))


def _fmt(x: float) -> str:
    return f"{x:.8e}"


def trace_to_csv(trace: Trace) -> str:
    names = list(trace.signals)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *names])
    cols = [trace.time] + [trace.signals[n] for n in names]
    for row in zip(*cols):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def write_trace_csv(trace: Trace, path) -> None:
    Path(path).write_text(trace_to_csv(trace), encoding="utf-8")


def read_trace_csv(path) -> Trace:
    """Read a CSV written by :func:`write_trace_csv` (or any file with a ``t`` column first)."""
    text = Path(path).read_text(encoding="utf-8")
    return trace_from_csv(text)


def trace_from_csv(text: str) -> Trace:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise ValueError("CSV must start with a header whose first column is 't'")
    names = [n.strip() for n in rows[0][1:]]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        data = np.zeros((0, len(names) + 1))
    return Trace(data[:, 0], {n: data[:, i + 1] for i, n in enumerate(names)})
