"""Maximal-ball pore networks.

The pore space is approximated by a small set of maximal inscribed balls
chosen greedily over the Euclidean distance transform; overlapping balls are
joined by edges whose geometric conductance ``Q = A / L`` (contact disk area
over center distance) drives the graph diffusion operator.

Greedy covering rule
--------------------
1. Rank pore voxels by distance-transform value (largest first, ties broken
   by voxel index order).
2. Take the highest-ranked voxel whose center is not yet covered and emit
   the ball centered there with radius equal to its distance value.
3. A voxel is covered when its center lies strictly inside a ball.
4. Repeat until every pore voxel is covered, then drop redundant balls
   (smallest first) whose voxels are all covered by other balls.

The strict rule matters for thin features: in a one-voxel-wide tube every
voxel gets its own unit ball, so consecutive balls overlap instead of
touching tangentially.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import InputError
from .image_io import VolumeImage

__all__ = [
    "Ball",
    "PoreEdge",
    "PoreNetwork",
    "distance_transform",
    "extract_balls",
    "build_edges",
    "extract_network",
    "export_network",
    "import_network",
]


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float, float]  # um
    radius: float  # um

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * np.pi * self.radius ** 3


@dataclass(frozen=True)
class PoreEdge:
    i: int
    j: int
    contact_area: float  # um^2
    center_distance: float  # um

    @property
    def conductance(self) -> float:
        return self.contact_area / self.center_distance


def _as_array(x, dtype, shape_tail=()):
    arr = np.array(x, dtype=dtype, copy=True)
    if arr.size == 0:
        arr = arr.reshape((0,) + shape_tail)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PoreNetwork:
    """Balls (nodes) plus contact edges, stored as flat arrays.

    Node ``k`` has ``centers[k]`` (um), ``radii[k]`` (um) and ``volumes[k]``
    (um^3). Edge ``e`` joins nodes ``edge_i[e]`` and ``edge_j[e]`` (ordered
    ``i < j`` by extraction, not required on import) with contact ``areas[e]``
    (um^2), center distance ``dists[e]`` (um) and conductance
    ``q[e] = areas[e] / dists[e]`` (um).
    """

    centers: np.ndarray
    radii: np.ndarray
    volumes: np.ndarray
    edge_i: np.ndarray
    edge_j: np.ndarray
    areas: np.ndarray
    dists: np.ndarray
    q: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "centers", _as_array(self.centers, float, (3,)))
        for name in ("radii", "volumes", "areas", "dists", "q"):
            object.__setattr__(self, name, _as_array(getattr(self, name), float))
        for name in ("edge_i", "edge_j"):
            object.__setattr__(self, name, _as_array(getattr(self, name), np.int64))
        n = len(self.radii)
        if self.centers.shape != (n, 3) or self.volumes.shape != (n,):
            raise InputError("node arrays have inconsistent lengths")
        m = len(self.edge_i)
        if any(a.shape != (m,) for a in (self.edge_j, self.areas, self.dists, self.q)):
            raise InputError("edge arrays have inconsistent lengths")
        if m:
            if self.edge_i.min() < 0 or max(self.edge_i.max(), self.edge_j.max()) >= n:
                raise InputError("edge references a missing node")
            if np.any(self.edge_i == self.edge_j):
                raise InputError("self-loop edge")
            lo = np.minimum(self.edge_i, self.edge_j)
            hi = np.maximum(self.edge_i, self.edge_j)
            if len(np.unique(lo * n + hi)) != m:
                raise InputError("duplicate edge")

    @classmethod
    def from_balls(cls, balls, meta=None) -> "PoreNetwork":
        centers = np.array([b.center for b in balls], dtype=float).reshape(-1, 3)
        radii = np.array([b.radius for b in balls], dtype=float)
        edges = build_edges(balls)
        return cls(
            centers=centers,
            radii=radii,
            volumes=4.0 / 3.0 * np.pi * radii ** 3,
            edge_i=[e.i for e in edges],
            edge_j=[e.j for e in edges],
            areas=[e.contact_area for e in edges],
            dists=[e.center_distance for e in edges],
            q=[e.conductance for e in edges],
            meta=dict(meta or {}),
        )

    @property
    def n_nodes(self) -> int:
        return len(self.radii)

    @property
    def n_edges(self) -> int:
        return len(self.edge_i)

    @property
    def balls(self) -> list[Ball]:
        return [Ball(tuple(c), float(r)) for c, r in zip(self.centers, self.radii)]

    @property
    def edges(self) -> list[PoreEdge]:
        return [PoreEdge(int(i), int(j), float(a), float(d))
                for i, j, a, d in zip(self.edge_i, self.edge_j, self.areas, self.dists)]

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())

    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 adjacency matrix."""
        n = self.n_nodes
        rows = np.concatenate([self.edge_i, self.edge_j])
        cols = np.concatenate([self.edge_j, self.edge_i])
        return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))

    def components(self) -> tuple[int, np.ndarray]:
        """Number of connected components and the label of each node."""
        return csgraph.connected_components(self.adjacency(), directed=False)

    def within_hops(self, node: int, hops: int) -> np.ndarray:
        """Sorted indices of nodes at graph distance <= ``hops`` from ``node``."""
        dist = csgraph.shortest_path(self.adjacency(), unweighted=True, indices=node,
                                     directed=False)
        return np.flatnonzero(dist <= hops)


# -- extraction -------------------------------------------------------------

def _face_distance(dims) -> np.ndarray:
    """Distance (voxel units) from each voxel center to the nearest image face."""
    out = None
    for axis, n in enumerate(dims):
        idx = np.arange(n, dtype=float)
        d = np.minimum(idx + 0.5, n - idx - 0.5)
        shape = [1, 1, 1]
        shape[axis] = n
        d = d.reshape(shape)
        out = d if out is None else np.minimum(out, d)
    return np.broadcast_to(out, tuple(dims))


def distance_transform(img: VolumeImage) -> np.ndarray:
    """Exact Euclidean distance (um) from each pore voxel center to the nearest
    solid voxel center or image face; zero on solid voxels.
    """
    pore = img.voxels
    face = _face_distance(pore.shape)
    if pore.all():
        dist = np.array(face, dtype=float)
    else:
        dist = np.minimum(ndimage.distance_transform_edt(pore), face)
    return np.where(pore, dist, 0.0) * img.resolution


def _strictly_inside(tree, pts, center, radius):
    cand = tree.query_ball_point(center, radius)
    if not cand:
        return np.empty(0, dtype=np.int64)
    cand = np.asarray(cand, dtype=np.int64)
    d2 = ((pts[cand] - center) ** 2).sum(axis=1)
    return np.sort(cand[d2 < radius * radius])


def extract_balls(img: VolumeImage) -> list[Ball]:
    """Greedy minimal covering of the pore space by maximal inscribed balls."""
    if img.n_pore == 0:
        raise InputError("volume has no pore voxels; the network would be empty")
    dt = distance_transform(img) / img.resolution
    pts = np.argwhere(img.voxels).astype(float)
    values = dt[img.voxels]
    order = np.argsort(-values, kind="stable")
    tree = cKDTree(pts)

    covered = np.zeros(len(pts), dtype=bool)
    chosen: list[int] = []
    members: list[np.ndarray] = []
    for idx in order:
        if covered[idx]:
            continue
        inside = _strictly_inside(tree, pts, pts[idx], values[idx])
        covered[inside] = True
        chosen.append(int(idx))
        members.append(inside)

    # drop balls that cover nothing exclusively, smallest (then latest) first
    count = np.zeros(len(pts), dtype=np.int64)
    for m in members:
        count[m] += 1
    keep = np.ones(len(chosen), dtype=bool)
    for k in sorted(range(len(chosen)), key=lambda k: (values[chosen[k]], -k)):
        if np.all(count[members[k]] >= 2):
            keep[k] = False
            count[members[k]] -= 1

    res = img.resolution
    return [Ball(tuple((pts[idx] + 0.5) * res), float(values[idx] * res))
            for idx, kept in zip(chosen, keep) if kept]


def contact_area(ri: float, rj: float, d: float) -> float:
    """Area of the intersection disk of two spheres at center distance ``d``.

    Zero when the balls are disjoint or tangent; the smaller ball's
    great-circle disk when one ball contains the other's intersection circle.
    """
    if d <= 0:
        raise ValueError("coincident ball centers")
    if d >= ri + rj:
        return 0.0
    x = (d * d - rj * rj + ri * ri) / (2.0 * d)
    if x < -ri or x > ri:
        return float(np.pi * min(ri, rj) ** 2)
    return float(np.pi * (ri * ri - x * x))


def build_edges(balls) -> list[PoreEdge]:
    """Edges between every pair of overlapping balls with positive contact area."""
    if len(balls) == 0:
        raise InputError("need at least one ball")
    centers = np.array([b.center for b in balls], dtype=float).reshape(-1, 3)
    radii = np.array([b.radius for b in balls], dtype=float)
    if len(balls) < 2:
        return []
    tree = cKDTree(centers)
    pairs = sorted(tree.query_pairs(2.0 * radii.max()))
    edges = []
    for i, j in pairs:
        d = float(np.sqrt(((centers[i] - centers[j]) ** 2).sum()))
        if d == 0.0:
            raise ValueError(f"balls {i} and {j} share a center")
        area = contact_area(radii[i], radii[j], d)
        if area > 0.0:
            edges.append(PoreEdge(i, j, area, d))
    return edges


def extract_network(img: VolumeImage) -> PoreNetwork:
    """Balls plus edges, tagged with the source image metadata."""
    balls = extract_balls(img)
    return PoreNetwork.from_balls(balls, meta={"resolution_um": img.resolution,
                                               "source": img.source})


# -- JSON round trip --------------------------------------------------------

def export_network(net: PoreNetwork, path) -> Path:
    doc = {
        "nodes": [
            {"id": k, "x": float(c[0]), "y": float(c[1]), "z": float(c[2]),
             "r": float(r), "v": float(v)}
            for k, (c, r, v) in enumerate(zip(net.centers, net.radii, net.volumes))
        ],
        "edges": [
            {"i": int(i), "j": int(j), "area": float(a), "dist": float(d), "q": float(q)}
            for i, j, a, d, q in zip(net.edge_i, net.edge_j, net.areas, net.dists, net.q)
        ],
        "meta": dict(net.meta),
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def _network_from_doc(doc: Any) -> PoreNetwork:
    try:
        nodes = doc["nodes"]
        edges = doc.get("edges", [])
        meta = doc.get("meta", {})
        ids = [int(n["id"]) for n in nodes]
        centers = [[float(n["x"]), float(n["y"]), float(n["z"])] for n in nodes]
        radii = np.array([float(n["r"]) for n in nodes])
        volumes = np.array([float(n["v"]) if "v" in n else 4 / 3 * np.pi * float(n["r"]) ** 3
                            for n in nodes])
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"malformed node record: {exc}") from exc
    if len(set(ids)) != len(ids):
        raise InputError("duplicate node id")
    if np.any(radii <= 0) or np.any(volumes <= 0):
        raise InputError("node radius and volume must be positive")
    if not np.allclose(volumes, 4 / 3 * np.pi * radii ** 3, rtol=1e-9, atol=0):
        raise InputError("node volume inconsistent with radius")
    if len(np.unique(np.asarray(centers).reshape(-1, 3), axis=0)) != len(centers):
        raise InputError("two nodes share a center")
    index = {nid: k for k, nid in enumerate(ids)}
    ei, ej, area, dist, q = [], [], [], [], []
    try:
        for e in edges:
            a, b = int(e["i"]), int(e["j"])
            if a not in index or b not in index:
                raise InputError(f"edge ({a}, {b}) references a missing node")
            a, b = index[a], index[b]
            ar, di = float(e["area"]), float(e["dist"])
            qq = float(e["q"]) if "q" in e else ar / di
            if di <= 0 or ar < 0 or not np.isclose(qq, ar / di, rtol=1e-12, atol=0):
                raise InputError(f"edge ({a}, {b}) has inconsistent geometry")
            ei.append(a), ej.append(b), area.append(ar), dist.append(di), q.append(qq)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed edge record: {exc}") from exc
    return PoreNetwork(centers=centers, radii=radii, volumes=volumes, edge_i=ei,
                       edge_j=ej, areas=area, dists=dist, q=q, meta=dict(meta))


def import_network(path) -> PoreNetwork:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"missing network file {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"network file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError("network file must hold a JSON object")
    return _network_from_doc(doc)
