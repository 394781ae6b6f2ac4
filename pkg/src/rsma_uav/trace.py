"""Per-iteration run records shared by the optimizers."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np


@dataclass
class TraceRecord:
    iteration: int
    wsr: float
    position: tuple[float, float, float] | None = None
    rates: tuple[float, ...] = ()
    status: str = "ok"
    wall_clock: float = 0.0


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)
    status: str = "ok"
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def log(self, wsr, position=None, rates=(), status="ok") -> TraceRecord:
        rec = TraceRecord(len(self.records), float(wsr),
                          None if position is None else tuple(float(v) for v in position),
                          tuple(float(r) for r in rates), status,
                          time.perf_counter() - self._t0)
        self.records.append(rec)
        return rec

    @property
    def wsr(self) -> np.ndarray:
        return np.array([r.wsr for r in self.records])

    @property
    def iterations(self) -> int:
        return max(len(self.records) - 1, 0)

    def is_monotone(self, tol: float = 1e-6) -> bool:
        w = self.wsr
        return bool(np.all(np.diff(w) >= -tol))

    def __len__(self):
        return len(self.records)
