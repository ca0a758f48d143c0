"""
Every scenario ends with dead biomass
=====================================

Whatever the initial DOM amount, its spatial distribution or the placement
of the MB patches, the trajectories collapse onto the plane of zero biomass.
We run a few seeds in both DOM modes and look at the terminal points of
``[B, N + M1 + M2, C]``.
"""
from dataclasses import replace

from porebio.analysis import attractor_report
from porebio.image_io import synth_volume
from porebio.integrator import Integrator, SolverConfig
from porebio.kinetics import BioParams
from porebio.network import extract_network
from porebio.scenario import ScenarioSpec, generate

###############################################################################
# A smaller network keeps this demo to a few minutes.
net = extract_network(synth_volume({"dims": [30, 30, 30], "resolution": 24.0, "shapes": [
    {"kind": "tube", "start": [3, 3, 3], "end": [26, 24, 15], "radius": 2.4},
    {"kind": "tube", "start": [3, 24, 8], "end": [26, 5, 22], "radius": 2.0},
    {"kind": "sphere", "center": [15, 14, 12], "radius": 4}]}))
print(f"{net.n_nodes} balls")

params = BioParams(D_n=5e7)
cfg = SolverConfig(dt=0.01, t_end=918.0)
template = ScenarioSpec()

print(" mode           seed   initial C     final B/C0   organic C      CO2   converged")
for mode in ("homogeneous", "heterogeneous"):
    for seed in range(3):
        s0 = generate(net, replace(template, seed=seed, dom_mode=mode))
        traj = Integrator(net, params, cfg).run(s0)
        rep = attractor_report(traj)
        b, organic, co2 = rep.terminal_point
        print(f" {mode:14s} {seed:4d} {s0.total_carbon:11.3e} {rep.final_mb_fraction:11.2e} "
              f"{organic:11.3e} {co2:11.3e}   {rep.converged}")

###############################################################################
# The terminal points differ in how carbon is split between CO2 and organic
# matter, but all of them sit at B close to 0.
