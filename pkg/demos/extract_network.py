"""
From a voxel image to a pore network
====================================

A segmented micro-CT sample is a 3D array of pore and solid voxels. Here we
build a small synthetic sample, store it in the raw + JSON format used for
real scans, read it back, and reduce its pore space to overlapping maximal
balls.
"""
import tempfile
from pathlib import Path

import numpy as np

from porebio.image_io import CropRegion, crop, load_volume, porosity, save_volume, synth_volume
from porebio.network import export_network, extract_network

###############################################################################
# A sample with three crossing channels and a chamber, 24 um voxels.
spec = {
    "dims": [40, 40, 40],
    "resolution": 24.0,
    "shapes": [
        {"kind": "tube", "start": [4, 4, 4], "end": [35, 30, 20], "radius": 2.6},
        {"kind": "tube", "start": [4, 30, 10], "end": [35, 6, 30], "radius": 2.2},
        {"kind": "tube", "start": [20, 2, 36], "end": [20, 37, 4], "radius": 2.0},
        {"kind": "sphere", "center": [20, 18, 18], "radius": 5},
    ],
}
img = synth_volume(spec)
print(f"{img.dims} voxels, porosity {porosity(img):.4f}")

###############################################################################
# Round trip through disk. The raw file holds one byte per voxel, x fastest;
# the sidecar records the shape, the voxel size and the pore label.
workdir = Path(tempfile.mkdtemp())
raw, meta = save_volume(img, workdir / "sample.raw")
print(meta.read_text())
img = load_volume(raw)

###############################################################################
# Each ball is centered on a pore voxel with radius equal to the distance to
# the nearest solid voxel, so it is maximal. Balls are picked greedily, largest
# first, until every pore voxel center sits inside one. Overlapping balls are
# linked, and the contact disk area over the center distance gives the
# conductance used by diffusion.
net = extract_network(img)
n_comp, _ = net.components()
print(f"{net.n_nodes} balls, {net.n_edges} contacts, {n_comp} component(s)")
print(f"ball radii {net.radii.min():.1f} .. {net.radii.max():.1f} um")
print(f"pore volume {img.n_pore * img.voxel_volume:.3e} um^3, "
      f"ball volume {net.total_volume:.3e} um^3 (balls overlap)")

###############################################################################
# Real scans are usually cropped to a region of interest first.
sub = crop(img, CropRegion.parse("10:30,10:30,10:30"))
print(f"cropped to {sub.dims}: {extract_network(sub).n_nodes} balls")

path = export_network(net, workdir / "network.json")
print(f"network written to {path}")
