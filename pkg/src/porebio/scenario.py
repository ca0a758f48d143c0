"""Random initial conditions: DOM spread over the network, MB in patches.

Randomness comes from NumPy's PCG64 bit generator seeded with the scenario
seed, so a given ``(network, spec)`` pair always yields the same state.
Draw order: DOM density, heterogeneous weights (if any), MB fraction, patch
count, then one center per patch.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.sparse import csgraph

from .analysis import agg1
from .errors import InputError
from .kinetics import CO2, DOM, FOM, MB, SOM, SystemState
from .network import PoreNetwork

__all__ = [
    "ScenarioSpec",
    "generate",
    "batch",
    "summarize",
    "write_summary",
    "export_state",
    "import_state",
]


@dataclass(frozen=True)
class ScenarioSpec:
    dom_mode: str = "homogeneous"  # or "heterogeneous"
    dom_density_range: tuple = (1e-7, 9e-4)  # ug per voxel volume
    mb_fraction_range: tuple = (5e-4, 1.5e-3)  # of total DOM
    patch_count_range: tuple = (3, 10)  # inclusive
    patch_radius: int = 1  # graph hops
    seed: int = 0
    initial_som: float = 0.0  # ug per node
    initial_fom: float = 0.0
    initial_co2: float = 0.0

    def __post_init__(self):
        if self.dom_mode not in ("homogeneous", "heterogeneous"):
            raise InputError(f"dom_mode must be homogeneous or heterogeneous, got {self.dom_mode!r}")
        for name in ("dom_density_range", "mb_fraction_range", "patch_count_range"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise InputError(f"{name} must be a nonempty nonnegative range")
            object.__setattr__(self, name, (lo, hi))
        if self.mb_fraction_range[1] > 1:
            raise InputError("mb_fraction_range must lie in [0, 1]")
        if self.patch_count_range[0] < 1 or any(int(x) != x for x in self.patch_count_range):
            raise InputError("patch_count_range must hold positive integers")
        if self.patch_radius < 0:
            raise InputError("patch_radius must be >= 0")
        if min(self.initial_som, self.initial_fom, self.initial_co2) < 0:
            raise InputError("initial masses must be nonnegative")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown scenario option(s): {', '.join(sorted(unknown))}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _resolution(net: PoreNetwork) -> float:
    res = float(net.meta.get("resolution_um", 1.0))
    if res <= 0:
        raise InputError("network resolution must be positive")
    return res


def generate(net: PoreNetwork, spec: ScenarioSpec) -> SystemState:
    """Initial node masses (ugC) at t = 0."""
    n = net.n_nodes
    if n == 0:
        raise InputError("network is empty")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    v = net.volumes
    vtot = float(v.sum())
    masses = np.zeros((n, 5))

    density = rng.uniform(*spec.dom_density_range)
    total_dom = density * vtot / _resolution(net) ** 3
    if spec.dom_mode == "homogeneous":
        masses[:, DOM] = total_dom * (v / vtot)
    else:
        w = rng.random(n)
        masses[:, DOM] = total_dom * (w / w.sum())

    frac = rng.uniform(*spec.mb_fraction_range)
    total_mb = frac * total_dom
    lo, hi = (int(x) for x in spec.patch_count_range)
    k = int(rng.integers(lo, hi + 1))
    adj_cache = None
    for _ in range(k):
        center = int(rng.integers(n))
        if spec.patch_radius == 0:
            nodes = np.array([center])
        else:
            if adj_cache is None:
                adj_cache = net.adjacency()
            dist = csgraph.shortest_path(adj_cache, unweighted=True, indices=center,
                                         directed=False)
            nodes = np.flatnonzero(dist <= spec.patch_radius)
        masses[nodes, MB] += (total_mb / k) * v[nodes] / v[nodes].sum()

    masses[:, SOM] = spec.initial_som
    masses[:, FOM] = spec.initial_fom
    masses[:, CO2] = spec.initial_co2
    return SystemState(0.0, masses)


def batch(net: PoreNetwork, spec_template: ScenarioSpec, count: int,
          base_seed: int) -> list[SystemState]:
    """``count`` scenarios seeded ``base_seed + 0 .. count - 1``."""
    if count < 1:
        raise InputError("count must be >= 1")
    return [generate(net, replace(spec_template, seed=base_seed + k)) for k in range(count)]


def summarize(states, seeds, modes=None) -> list[dict]:
    """One row of initial totals per scenario."""
    rows = []
    for k, (state, seed) in enumerate(zip(states, seeds)):
        tot = agg1(state)
        rows.append({
            "scenario": k,
            "seed": int(seed),
            "mode": modes[k] if modes is not None else "",
            "MB": float(tot[MB]),
            "DOM": float(tot[DOM]),
            "mb_fraction": float(tot[MB] / tot[DOM]) if tot[DOM] > 0 else 0.0,
            "total_carbon": float(tot.sum()),
        })
    return rows


def write_summary(rows: list[dict], path) -> Path:
    path = Path(path)
    if not rows:
        path.write_text("")
        return path
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def export_state(state: SystemState, path) -> Path:
    """JSON ``{"time": t, "nodes": {"<id>": [b, n, m1, m2, c]}}``."""
    doc = {"time": state.time,
           "nodes": {str(i): [float(x) for x in row] for i, row in enumerate(state.masses)}}
    path = Path(path)
    path.write_text(json.dumps(doc) + "\n")
    return path


def import_state(path) -> SystemState:
    try:
        doc = json.loads(Path(path).read_text())
        nodes = doc["nodes"]
        ids = sorted(int(k) for k in nodes)
        if ids != list(range(len(ids))):
            raise InputError("state node ids must be 0..n-1")
        masses = [nodes[str(i)] for i in ids]
        return SystemState(float(doc.get("time", 0.0)), masses)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed state file {path}: {exc}") from exc
