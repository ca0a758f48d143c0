"""Finite-volume reference solver for the continuum model on voxel grids.

Densities (ugC / um^3) live on pore voxels. Diffusion uses the 7-point
stencil with zero flux through faces that touch solid or the image border;
reaction terms are the same as on the network. Time stepping is explicit
Euler under enforced stability/positivity bounds, which keeps the solver
transparent enough to serve as an independent check of the network model on
small geometries.

Monod half-saturation: the network applies ``K_b`` to node *masses*, the
grid to voxel *densities*. :func:`compare_with_network` converts with the
mean ball-region volume (pore volume / node count). The conversion is exact
when every ball owns the same share of the pore space (a single ball, or two
equal overlapping spheres) and only approximate when ball sizes vary.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .analysis import agg1 as _agg1
from .errors import InputError
from .image_io import VolumeImage, synth_volume
from .integrator import Integrator, SolverConfig
from .kinetics import BioParams, SystemState, reaction_rhs
from .network import PoreNetwork, extract_network

__all__ = [
    "GridState",
    "fd_laplacian",
    "VoxelLaplacian",
    "stable_dt",
    "oracle_step",
    "oracle_run",
    "assign_voxels_to_balls",
    "ComparisonReport",
    "compare_with_network",
    "MAX_ORACLE_DIM",
    "dumbbell_fixture",
    "single_pore_fixture",
]

MAX_ORACLE_DIM = 64
_SAFETY = 0.9


@dataclass(frozen=True, eq=False)
class GridState:
    """Five density fields ``(5, nx, ny, nz)``; zero on solid voxels."""

    time: float
    fields: np.ndarray
    mask: np.ndarray
    resolution: float

    def __post_init__(self):
        f = np.array(self.fields, dtype=float, copy=True)
        mask = np.asarray(self.mask, dtype=bool)
        if f.ndim != 4 or f.shape[0] != 5 or f.shape[1:] != mask.shape:
            raise InputError("fields must have shape (5,) + mask.shape")
        f[:, ~mask] = 0.0
        object.__setattr__(self, "fields", f)
        object.__setattr__(self, "mask", mask)

    @property
    def voxel_volume(self) -> float:
        return self.resolution ** 3

    def masses(self) -> np.ndarray:
        """Total mass per compound (ugC)."""
        return self.fields.reshape(5, -1).sum(axis=1) * self.voxel_volume


def fd_laplacian(field, mask, resolution: float) -> np.ndarray:
    """7-point Laplacian with no-flux faces at solid and image borders."""
    f = np.where(mask, np.asarray(field, dtype=float), 0.0)
    out = np.zeros_like(f)
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        open_face = mask[lo] & mask[hi]
        flux = np.where(open_face, f[hi] - f[lo], 0.0)
        out[lo] += flux
        out[hi] -= flux
    return np.where(mask, out, 0.0) / resolution ** 2


class VoxelLaplacian:
    """The same stencil as a sparse matrix over the pore voxels only."""

    def __init__(self, mask, resolution: float):
        self.mask = np.asarray(mask, dtype=bool)
        self.index = -np.ones(self.mask.shape, dtype=np.int64)
        self.n = int(self.mask.sum())
        self.index[self.mask] = np.arange(self.n)
        rows, cols = [], []
        for axis in range(3):
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            a, b = self.index[tuple(lo)], self.index[tuple(hi)]
            keep = (a >= 0) & (b >= 0)
            rows.append(a[keep])
            cols.append(b[keep])
        i = np.concatenate(rows)
        j = np.concatenate(cols)
        deg = np.bincount(i, minlength=self.n) + np.bincount(j, minlength=self.n)
        data = np.concatenate([np.ones(2 * len(i)), -deg.astype(float)])
        r = np.concatenate([i, j, np.arange(self.n)])
        c = np.concatenate([j, i, np.arange(self.n)])
        self.matrix = sparse.csr_matrix((data, (r, c)), shape=(self.n, self.n)) / resolution ** 2

    def gather(self, field) -> np.ndarray:
        return np.asarray(field)[..., self.mask]

    def scatter(self, values) -> np.ndarray:
        values = np.asarray(values)
        out = np.zeros(values.shape[:-1] + self.mask.shape)
        out[..., self.mask] = values
        return out


def _diffusivities(params: BioParams) -> np.ndarray:
    return np.array([params.D_b, params.D_n, 0.0, 0.0, params.D_c])


def stable_dt(params: BioParams, resolution: float, densities=None) -> float:
    """Largest explicit step keeping the update stable and nonnegative.

    Diffusion: ``dt <= 0.9 h^2 / (6 max D)``. Reaction (when densities are
    given): Monod uptake may not drain more DOM than present, and linear
    losses may not exceed the pool.
    """
    bounds = [np.inf]
    dmax = _diffusivities(params).max()
    if dmax > 0:
        bounds.append(_SAFETY * resolution ** 2 / (6.0 * dmax))
    linear = max(params.eta + params.mu, params.c1, params.c2)
    if linear > 0:
        bounds.append(_SAFETY / linear)
    if densities is not None:
        bmax = float(np.max(densities[0])) if np.size(densities[0]) else 0.0
        if bmax > 0 and params.K > 0:
            bounds.append(_SAFETY * params.K_b / (params.K * bmax))
    return float(min(bounds))


def _rates(u, params, lap):
    """Reaction plus diffusion rates for pore-voxel densities ``u`` (n_vox, 5)."""
    r = reaction_rhs(u, params)
    D = _diffusivities(params)
    for k in np.flatnonzero(D > 0):
        r[:, k] += D[k] * (lap.matrix @ u[:, k])
    return r


def oracle_step(gs: GridState, params: BioParams, dt: float,
                lap: Optional[VoxelLaplacian] = None) -> GridState:
    """One explicit Euler step; refuses steps beyond :func:`stable_dt`."""
    if dt <= 0:
        raise InputError("dt must be positive")
    limit = stable_dt(params, gs.resolution, gs.fields[:, gs.mask])
    if dt > limit * (1 + 1e-12):
        raise InputError(f"dt={dt:g} exceeds the explicit stability bound {limit:g}")
    lap = lap or VoxelLaplacian(gs.mask, gs.resolution)
    u = lap.gather(gs.fields).T
    u = u + dt * _rates(u, params, lap)
    return GridState(gs.time + dt, lap.scatter(u.T), gs.mask, gs.resolution)


def oracle_run(gs: GridState, params: BioParams, t_end: float, record_every: float,
               dt_max: float = np.inf):
    """Integrate to ``t_end`` with the largest admissible explicit steps.

    Returns ``(times, totals, final_state)`` where ``totals[k]`` is the total
    mass of each compound at ``times[k]``; records fall exactly on multiples of
    ``record_every``.
    """
    lap = VoxelLaplacian(gs.mask, gs.resolution)
    u = lap.gather(gs.fields).T.copy()
    vol = gs.voxel_volume
    t = gs.time
    times, totals = [t], [u.sum(axis=0) * vol]
    n_rec = int(round((t_end - gs.time) / record_every))
    for k in range(1, n_rec + 1):
        target = gs.time + k * record_every
        while t < target:
            dt = min(dt_max, stable_dt(params, gs.resolution, u.T), target - t)
            u = u + dt * _rates(u, params, lap)
            t = target if target - t - dt <= 1e-12 * record_every else t + dt
        times.append(t)
        totals.append(u.sum(axis=0) * vol)
    return np.array(times), np.array(totals), GridState(t, lap.scatter(u.T), gs.mask,
                                                         gs.resolution)


def assign_voxels_to_balls(img: VolumeImage, net: PoreNetwork) -> np.ndarray:
    """Ball index for every pore voxel (in ``argwhere`` order).

    A voxel goes to the nearest ball whose interior contains its center,
    ties going to the larger ball; voxels inside no ball (not produced by
    :func:`~porebio.network.extract_balls`) fall back to the nearest center.
    """
    pts = (np.argwhere(img.voxels) + 0.5) * img.resolution
    tree = cKDTree(net.centers)
    k = min(net.n_nodes, 16)
    out = np.empty(len(pts), dtype=np.int64)
    d, idx = tree.query(pts, k=k)
    d, idx = d.reshape(len(pts), k), idx.reshape(len(pts), k)
    for v in range(len(pts)):
        best = None
        for dist, b in zip(d[v], idx[v]):
            if dist < net.radii[b]:
                key = (dist, -net.radii[b], b)
                if best is None or key < best:
                    best = key
        if best is None:
            inside = np.flatnonzero(np.linalg.norm(net.centers - pts[v], axis=1) < net.radii)
            if inside.size:
                dd = np.linalg.norm(net.centers[inside] - pts[v], axis=1)
                keys = sorted(zip(dd, -net.radii[inside], inside))
                out[v] = keys[0][2]
            else:
                out[v] = idx[v][0]
        else:
            out[v] = best[2]
    return out


@dataclass
class ComparisonReport:
    times: list
    network_totals: list
    oracle_totals: list
    discrepancy: list  # relative l1 distance of the AGG1 vectors per record
    species_discrepancy: list  # per record, relative difference of each total
    n_nodes: int
    n_pore_voxels: int
    meta: dict = field(default_factory=dict)

    def at(self, t: float) -> int:
        return int(np.argmin(np.abs(np.asarray(self.times) - t)))

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("times", "network_totals", "oracle_totals", "discrepancy",
                 "species_discrepancy", "n_nodes", "n_pore_voxels", "meta")}

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n")
        return path


def _rel(a, b):
    denom = max(abs(a), abs(b))
    return abs(a - b) / denom if denom > 0 else 0.0


def compare_with_network(img: VolumeImage, params: BioParams, densities, t_end: float,
                         record_every: float = 1.0, dt_network: float = 1e-3,
                         dt_oracle_max: float = 1e-3,
                         net: Optional[PoreNetwork] = None) -> ComparisonReport:
    """Run the network model and the voxel model from matched initial data.

    ``densities`` has shape ``(5, nx, ny, nz)`` (ugC / um^3). Voxel masses
    are lumped into balls with :func:`assign_voxels_to_balls`. The oracle runs
    with immobile biomass and CO2 (``D_b = D_c = 0``) like the network.
    """
    if max(img.dims) > MAX_ORACLE_DIM:
        raise InputError(f"oracle geometry {img.dims} exceeds the {MAX_ORACLE_DIM}^3 limit")
    densities = np.asarray(densities, dtype=float)
    if densities.shape != (5,) + img.dims:
        raise InputError(f"densities must have shape {(5,) + img.dims}")
    if np.any(densities[:, img.voxels] < 0):
        raise InputError("densities must be nonnegative")
    net = net if net is not None else extract_network(img)
    owner = assign_voxels_to_balls(img, net)
    vox_mass = densities[:, img.voxels].T * img.voxel_volume
    masses = np.zeros((net.n_nodes, 5))
    np.add.at(masses, owner, vox_mass)

    cfg = SolverConfig(dt=dt_network, t_end=t_end,
                       snapshot_stride=max(1, int(round(record_every / dt_network))))
    traj = Integrator(net, params, cfg).run(SystemState(0.0, masses))

    pore_volume = img.n_pore * img.voxel_volume
    grid_params = replace(params, D_b=0.0, D_c=0.0,
                          K_b=params.K_b / (pore_volume / net.n_nodes))
    gs = GridState(0.0, densities, img.voxels, img.resolution)
    times, oracle_tot, _ = oracle_run(gs, grid_params, t_end, record_every, dt_oracle_max)

    net_tot = traj.agg1
    if len(net_tot) != len(oracle_tot):
        raise InputError("record_every must be a multiple of dt_network")
    disc, spec = [], []
    for a, b in zip(net_tot, oracle_tot):
        scale = max(np.abs(a).sum(), np.abs(b).sum())
        disc.append(float(np.abs(a - b).sum() / scale) if scale > 0 else 0.0)
        spec.append([_rel(x, y) for x, y in zip(a, b)])
    return ComparisonReport(
        times=[float(t) for t in times],
        network_totals=net_tot.tolist(),
        oracle_totals=oracle_tot.tolist(),
        discrepancy=disc,
        species_discrepancy=spec,
        n_nodes=net.n_nodes,
        n_pore_voxels=img.n_pore,
        meta={"params": params.to_dict(), "grid_K_b": grid_params.K_b,
              "dt_network": dt_network, "dt_oracle_max": dt_oracle_max},
    )


def dumbbell_fixture(dom: float = 0.02, mb: float = 2e-5):
    """Two overlapping spheres (radius 8 voxels, centers 11 voxels apart).

    All DOM (``dom`` ugC) starts in the left half of the pore space and
    biomass (``mb`` ugC) is spread uniformly, so DOM has to diffuse through
    the waist to feed the right-hand population. Returns ``(img, densities)``.
    """
    img = synth_volume({"dims": [34, 22, 22], "resolution": 24.0, "shapes": [
        {"kind": "sphere", "center": [11, 11, 11], "radius": 8},
        {"kind": "sphere", "center": [22, 11, 11], "radius": 8}]})
    left = np.zeros(img.dims, dtype=bool)
    left[:img.dims[0] // 2] = True
    left &= img.voxels
    dens = np.zeros((5,) + img.dims)
    dens[1][left] = dom / (left.sum() * img.voxel_volume)
    dens[0][img.voxels] = mb / (img.n_pore * img.voxel_volume)
    return img, dens


def single_pore_fixture(dom: float = 0.02, mb: float = 2e-5, fom: float = 0.01):
    """One sphere (radius 6 voxels) with uniform DOM, biomass and FOM.

    Extraction yields a single ball, so the comparison exercises the
    reaction terms only. Returns ``(img, densities)``.
    """
    img = synth_volume({"dims": [17, 17, 17], "resolution": 24.0, "shapes": [
        {"kind": "sphere", "center": [8, 8, 8], "radius": 6}]})
    vol = img.n_pore * img.voxel_volume
    dens = np.zeros((5,) + img.dims)
    for k, total in ((0, mb), (1, dom), (3, fom)):
        dens[k][img.voxels] = total / vol
    return img, dens
