"""Per-iteration energy records shared by all solvers."""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

TRACE_HEADER = ("stage", "iter", "elapsed_s", "relaxed_objective", "integer_energy")


@dataclass
class TraceRow:
    stage: str
    iter: int
    elapsed_s: float
    relaxed_objective: float
    integer_energy: float


@dataclass
class EnergyTrace:
    """Relaxed objective and rounded integer energy per iteration.

    ``integer_energy`` is NaN when a solver runs with integer tracing off.
    """

    stage: str
    rows: list = field(default_factory=list)
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def record(self, it, relaxed, integer=float("nan")):
        self.rows.append(TraceRow(self.stage, int(it), time.perf_counter() - self._t0, float(relaxed), float(integer)))

    def __len__(self):
        return len(self.rows)

    @property
    def relaxed(self):
        return np.array([r.relaxed_objective for r in self.rows])

    @property
    def integer(self):
        return np.array([r.integer_energy for r in self.rows])

    @property
    def elapsed(self):
        return self.rows[-1].elapsed_s if self.rows else 0.0


def write_traces(path, traces):
    """Write traces as CSV with the fixed header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for tr in traces:
            for r in tr.rows:
                w.writerow([r.stage, r.iter, f"{r.elapsed_s:.6f}", repr(r.relaxed_objective), repr(r.integer_energy)])


@dataclass
class SolverResult:
    """Final assignment, its trace and solver-specific extras."""

    y: np.ndarray
    trace: EnergyTrace
    info: dict = field(default_factory=dict)
