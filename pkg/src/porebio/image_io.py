"""Binary pore-space volumes: loading, cropping, porosity and synthetic test shapes.

On disk a volume is a dense 8-bit ``.raw`` file plus a JSON sidecar::

    {"nx": 50, "ny": 50, "nz": 50, "resolution_um": 24.0, "pore_value": 0}

Bytes are stored x-fastest (x, then y, then z). In memory the voxels are a
boolean array of shape ``(nx, ny, nz)`` indexed ``[x, y, z]`` where ``True``
marks pore space. The physical center of voxel ``(i, j, k)`` is
``((i, j, k) + 0.5) * resolution``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "VolumeImage",
    "CropRegion",
    "load_volume",
    "save_volume",
    "crop",
    "porosity",
    "synth_volume",
]

_META_FIELDS = ("nx", "ny", "nz", "resolution_um", "pore_value")


@dataclass(frozen=True, eq=False)
class VolumeImage:
    """Segmented 3D image; ``voxels[i, j, k]`` is True for pore space."""

    voxels: np.ndarray
    resolution: float = 1.0
    source: str = field(default="", compare=False)

    def __post_init__(self):
        vox = np.asarray(self.voxels)
        if vox.ndim != 3 or min(vox.shape) < 1:
            raise InputError(f"volume must be 3D and nonempty, got shape {vox.shape}")
        if not np.isfinite(self.resolution) or self.resolution <= 0:
            raise InputError(f"resolution must be positive, got {self.resolution}")
        if vox.dtype != bool:
            vals = np.unique(vox)
            if not np.all(np.isin(vals, (0, 1))):
                raise InputError("voxel labels must be binary (0 = solid, 1 = pore)")
        vox = np.array(vox, dtype=bool, copy=True)
        vox.flags.writeable = False
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.voxels.shape)

    @property
    def n_pore(self) -> int:
        return int(np.count_nonzero(self.voxels))

    @property
    def voxel_volume(self) -> float:
        return self.resolution ** 3

    def __eq__(self, other):
        if not isinstance(other, VolumeImage):
            return NotImplemented
        return (self.resolution == other.resolution
                and self.voxels.shape == other.voxels.shape
                and bool(np.array_equal(self.voxels, other.voxels)))


@dataclass(frozen=True)
class CropRegion:
    """Half-open box ``[lo, hi)`` in voxel indices."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise InputError("crop bounds must be integer triples")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def parse(cls, text: str) -> "CropRegion":
        """Parse ``"x0:x1,y0:y1,z0:z1"``."""
        try:
            pairs = [tuple(int(v) for v in part.split(":")) for part in text.split(",")]
        except ValueError as exc:
            raise InputError(f"bad crop specification {text!r}") from exc
        if len(pairs) != 3 or any(len(p) != 2 for p in pairs):
            raise InputError(f"bad crop specification {text!r}")
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def check(self, dims: Sequence[int]) -> None:
        for a, b, n in zip(self.lo, self.hi, dims):
            if not (0 <= a < b <= n):
                raise InputError(f"crop region {self.lo}..{self.hi} outside volume {tuple(dims)}")


def _read_meta(meta_path: Path) -> dict[str, Any]:
    try:
        meta = json.loads(Path(meta_path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"missing metadata file {meta_path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"metadata {meta_path} is not valid JSON: {exc}") from exc
    if not isinstance(meta, dict):
        raise InputError(f"metadata {meta_path} must be a JSON object")
    missing = [k for k in _META_FIELDS if k not in meta]
    if missing:
        raise InputError(f"metadata {meta_path} lacks field(s): {', '.join(missing)}")
    return meta


def sidecar_path(raw_path) -> Path:
    """Default JSON sidecar location for a ``.raw`` file."""
    return Path(raw_path).with_suffix(".json")


def load_volume(raw_path, meta_path=None) -> VolumeImage:
    """Read a raw 8-bit volume and its JSON sidecar.

    Every byte equal to ``pore_value`` becomes pore; anything else is solid.
    """
    raw_path = Path(raw_path)
    meta = _read_meta(Path(meta_path) if meta_path is not None else sidecar_path(raw_path))
    try:
        nx, ny, nz = (int(meta[k]) for k in ("nx", "ny", "nz"))
        resolution = float(meta["resolution_um"])
        pore_value = int(meta["pore_value"])
    except (TypeError, ValueError) as exc:
        raise InputError(f"malformed metadata values: {exc}") from exc
    if min(nx, ny, nz) < 1:
        raise InputError(f"dimensions must be >= 1, got {(nx, ny, nz)}")
    try:
        data = raw_path.read_bytes()
    except FileNotFoundError as exc:
        raise InputError(f"missing raw file {raw_path}") from exc
    expected = nx * ny * nz
    if len(data) != expected:
        raise InputError(
            f"{raw_path} holds {len(data)} bytes but metadata declares "
            f"{nx}x{ny}x{nz} = {expected}")
    arr = np.frombuffer(data, dtype=np.uint8).reshape((nx, ny, nz), order="F")
    return VolumeImage(arr == pore_value, resolution, source=str(raw_path))


def save_volume(img: VolumeImage, raw_path, meta_path=None, pore_value: int = 0,
                solid_value: int = 255) -> tuple[Path, Path]:
    """Write ``img`` as raw bytes (x-fastest) plus sidecar. Returns both paths."""
    if pore_value == solid_value or not (0 <= pore_value <= 255 and 0 <= solid_value <= 255):
        raise InputError("pore and solid byte values must differ and fit in a byte")
    raw_path = Path(raw_path)
    meta_path = Path(meta_path) if meta_path is not None else sidecar_path(raw_path)
    out = np.where(img.voxels, np.uint8(pore_value), np.uint8(solid_value)).astype(np.uint8)
    raw_path.write_bytes(out.tobytes(order="F"))
    nx, ny, nz = img.dims
    meta = {"nx": nx, "ny": ny, "nz": nz, "resolution_um": img.resolution,
            "pore_value": pore_value}
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return raw_path, meta_path


def crop(img: VolumeImage, region: CropRegion) -> VolumeImage:
    region.check(img.dims)
    sl = tuple(slice(a, b) for a, b in zip(region.lo, region.hi))
    return VolumeImage(img.voxels[sl], img.resolution, source=img.source)


def porosity(img: VolumeImage) -> float:
    """Fraction of voxels that are pore."""
    return img.n_pore / img.voxels.size


# -- synthetic volumes ------------------------------------------------------

def _grid(dims):
    return np.indices(dims, dtype=float)


def _paint_sphere(vox, grid, center, radius):
    if radius <= 0:
        raise InputError(f"sphere radius must be positive, got {radius}")
    c = np.asarray(center, dtype=float).reshape(3, 1, 1, 1)
    vox |= ((grid - c) ** 2).sum(axis=0) <= radius ** 2


def _paint_tube(vox, grid, start, end, radius):
    """Capsule: points within ``radius`` of the segment start-end."""
    if radius <= 0:
        raise InputError(f"tube radius must be positive, got {radius}")
    a = np.asarray(start, dtype=float).reshape(3, 1, 1, 1)
    b = np.asarray(end, dtype=float).reshape(3, 1, 1, 1)
    ab = b - a
    denom = float((ab ** 2).sum())
    if denom == 0.0:
        raise InputError("tube start and end coincide")
    t = np.clip(((grid - a) * ab).sum(axis=0) / denom, 0.0, 1.0)
    vox |= ((grid - (a + t * ab)) ** 2).sum(axis=0) <= radius ** 2


def synth_volume(spec: Mapping[str, Any]) -> VolumeImage:
    """Build a binary test volume from a shape description.

    ``spec`` keys: ``dims`` (triple), ``resolution`` (default 1.0) and
    ``shapes``, a list of dicts with ``kind`` one of

    * ``sphere``: ``center``, ``radius``
    * ``tube``: ``start``, ``end``, ``radius`` (capsule around a segment)
    * ``blobs``: ``count``, ``radius_range``, ``seed``; random spheres

    Coordinates are voxel indices (the center of voxel ``(i, j, k)`` is the
    point ``(i, j, k)``); a voxel is pore when its center lies inside a shape.
    """
    try:
        dims = tuple(int(v) for v in spec["dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("synthetic spec needs integer 'dims'") from exc
    if len(dims) != 3 or min(dims) < 1:
        raise InputError(f"bad dims {dims}")
    vox = np.zeros(dims, dtype=bool)
    shapes = spec.get("shapes", [])
    grid = _grid(dims) if shapes else None
    for shape in shapes:
        kind = shape.get("kind")
        if kind == "sphere":
            _paint_sphere(vox, grid, shape["center"], float(shape["radius"]))
        elif kind == "tube":
            _paint_tube(vox, grid, shape["start"], shape["end"], float(shape["radius"]))
        elif kind == "blobs":
            rng = np.random.default_rng(int(shape.get("seed", 0)))
            rmin, rmax = (float(v) for v in shape["radius_range"])
            if rmin <= 0 or rmax < rmin:
                raise InputError(f"bad blob radius range {(rmin, rmax)}")
            for _ in range(int(shape["count"])):
                center = rng.uniform(0, 1, 3) * (np.array(dims) - 1)
                _paint_sphere(vox, grid, center, rng.uniform(rmin, rmax))
        else:
            raise InputError(f"unknown shape kind {kind!r}")
    return VolumeImage(vox, float(spec.get("resolution", 1.0)), source="synthetic")
