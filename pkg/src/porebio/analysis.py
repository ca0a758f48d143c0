"""Aggregated observables, trajectories and attractor diagnostics.

``agg1`` collapses node masses to five totals ``[B, N, M1, M2, C]``; ``agg2``
lumps the organic pools into ``[B, N + M1 + M2, C]`` and ``proj`` keeps
``[B, N, C]``. Long runs are summarized by these vectors, which is how
convergence of every initial distribution toward the dead-biomass plane
``B = 0`` is made visible.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InputError
from .kinetics import SystemState

__all__ = [
    "agg1",
    "agg2",
    "proj",
    "Trajectory",
    "AttractorReport",
    "attractor_report",
    "conservation_audit",
    "export_trajectory",
    "read_trajectory",
    "CSV_HEADER",
]

CSV_HEADER = ("t", "B", "N", "M1", "M2", "C", "conservation_error")


def agg1(state) -> np.ndarray:
    """Total mass of each compound, summed over nodes."""
    masses = state.masses if isinstance(state, SystemState) else np.asarray(state, float)
    return masses.reshape(-1, 5).sum(axis=0)


def agg2(v) -> np.ndarray:
    """``[B, N, M1, M2, C] -> [B, N + M1 + M2, C]``."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 0], v[..., 1] + v[..., 2] + v[..., 3], v[..., 4]], axis=-1)


def proj(v) -> np.ndarray:
    """``[B, N, M1, M2, C] -> [B, N, C]``."""
    v = np.asarray(v, dtype=float)
    return v[..., [0, 1, 4]]


@dataclass
class Trajectory:
    """Time series of total masses, with optional full-state snapshots."""

    times: list = field(default_factory=list)
    totals: list = field(default_factory=list)
    conservation_error: list = field(default_factory=list)
    snapshots: Optional[list] = None

    def record(self, state: SystemState, keep_snapshot: bool = False) -> None:
        if self.times and state.time <= self.times[-1]:
            raise InputError("trajectory times must be strictly increasing")
        tot = agg1(state)
        self.times.append(state.time)
        self.totals.append(tot)
        c0 = float(np.sum(self.totals[0]))
        drift = abs(float(np.sum(tot)) - c0)
        self.conservation_error.append(drift / c0 if c0 > 0 else drift)
        if keep_snapshot:
            if self.snapshots is None:
                self.snapshots = []
            self.snapshots.append(state)

    def __len__(self):
        return len(self.times)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    @property
    def agg1(self) -> np.ndarray:
        """``(n_records, 5)`` array of totals."""
        return np.asarray(self.totals, dtype=float).reshape(-1, 5)

    @property
    def agg2(self) -> np.ndarray:
        return agg2(self.agg1)

    @property
    def proj(self) -> np.ndarray:
        return proj(self.agg1)

    @property
    def initial_carbon(self) -> float:
        return float(np.sum(self.totals[0])) if self.totals else 0.0


@dataclass
class AttractorReport:
    time_to_mb_extinction: Optional[float]
    terminal_point: list
    terminal_bounding_box: list  # [[min, max]] per AGG2 axis over the trailing window
    converged: bool
    final_mb_fraction: float
    max_mb_increase_in_window: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path


def attractor_report(traj: Trajectory, mb_threshold_fraction: float = 1e-3,
                     window: float = 90.0, jitter: float = 1e-6) -> AttractorReport:
    """Has the run settled in the dead-biomass plane?

    Converged when the final total biomass is at most
    ``mb_threshold_fraction`` times the initial total carbon and biomass never
    rises by more than ``jitter`` (same relative scale) between records in the
    trailing ``window`` days.

    ``time_to_mb_extinction`` is the first record from which total biomass
    stays at or below the threshold until the end (``None`` if it ends above).
    """
    if len(traj) == 0:
        raise InputError("empty trajectory")
    t = traj.t
    span = t[-1] - t[0]
    if span < window:
        raise InputError(f"trajectory spans {span:g} days, shorter than the {window:g}-day window")
    A = traj.agg1
    B = A[:, 0]
    total0 = traj.initial_carbon
    threshold = mb_threshold_fraction * total0
    # start of the final stretch below threshold; biomass starts below it in
    # typical scenarios and only later blooms and dies back
    above = np.flatnonzero(B > threshold)
    if above.size == 0:
        extinct_at = float(t[0])
    elif above[-1] + 1 < len(B):
        extinct_at = float(t[above[-1] + 1])
    else:
        extinct_at = None

    in_window = t >= t[-1] - window
    Bw = B[in_window]
    rises = np.diff(Bw)
    max_rise = float(rises.max()) if rises.size else 0.0
    scale = total0 if total0 > 0 else 1.0
    monotone = max_rise <= jitter * scale
    converged = bool(B[-1] <= threshold and monotone)

    G = agg2(A[in_window])
    box = [[float(G[:, k].min()), float(G[:, k].max())] for k in range(3)]
    return AttractorReport(
        time_to_mb_extinction=extinct_at,
        terminal_point=[float(x) for x in agg2(A[-1])],
        terminal_bounding_box=box,
        converged=converged,
        final_mb_fraction=float(B[-1] / total0) if total0 > 0 else 0.0,
        max_mb_increase_in_window=max_rise,
    )


def conservation_audit(traj: Trajectory) -> float:
    """Largest relative drift of total carbon from the first record."""
    if len(traj) < 2:
        raise InputError("conservation audit needs at least two records")
    totals = traj.agg1.sum(axis=1)
    c0 = totals[0]
    drift = np.abs(totals - c0)
    return float(drift.max() / c0) if c0 > 0 else float(drift.max())


def export_trajectory(traj: Trajectory, path) -> Path:
    """Write ``t,B,N,M1,M2,C,conservation_error`` rows.

    Floats use Python's shortest round-trip repr, so the file is
    locale-independent and re-parses to the exact recorded values.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, tot, err in zip(traj.times, traj.totals, traj.conservation_error):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in tot] + [repr(float(err))])
    return path


def read_trajectory(path) -> Trajectory:
    """Parse a CSV written by :func:`export_trajectory`."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise InputError(f"{path} is not a trajectory CSV")
    traj = Trajectory()
    for row in rows[1:]:
        vals = [float(x) for x in row]
        traj.times.append(vals[0])
        traj.totals.append(np.array(vals[1:6]))
        traj.conservation_error.append(vals[6])
    return traj
