"""Microbial decomposition of organic carbon on pore networks.

Pipeline: a binary micro-CT volume (:mod:`porebio.image_io`) is reduced to a
graph of overlapping maximal balls (:mod:`porebio.network`); five carbon
pools per ball react through Monod kinetics (:mod:`porebio.kinetics`) while
dissolved organic matter diffuses along the graph
(:mod:`porebio.diffusion`). :mod:`porebio.integrator` advances the coupled
system with conservative implicit steps, :mod:`porebio.scenario` draws random
initial conditions and :mod:`porebio.analysis` reduces runs to aggregated
trajectories. :mod:`porebio.oracle` is a voxel-grid reference solver for
cross-checks on small geometries.
"""
from .analysis import (AttractorReport, Trajectory, agg1, agg2, attractor_report,
                       conservation_audit, export_trajectory, proj, read_trajectory)
from .diffusion import DiffusionOperator, ImplicitDiffusion, assemble
from .errors import InputError, InvariantViolation, NumericalError
from .image_io import CropRegion, VolumeImage, crop, load_volume, porosity, save_volume, synth_volume
from .integrator import Integrator, SolverConfig, convergence_order, run, step
from .kinetics import BioParams, SystemState, reaction_jacobian, reaction_rhs
from .network import PoreNetwork, export_network, extract_network, import_network
from .scenario import ScenarioSpec, batch, generate

__version__ = "0.1.0"

__all__ = [
    "AttractorReport", "Trajectory", "agg1", "agg2", "attractor_report",
    "conservation_audit", "export_trajectory", "proj", "read_trajectory",
    "DiffusionOperator", "ImplicitDiffusion", "assemble",
    "InputError", "InvariantViolation", "NumericalError",
    "CropRegion", "VolumeImage", "crop", "load_volume", "porosity", "save_volume",
    "synth_volume",
    "Integrator", "SolverConfig", "convergence_order", "run", "step",
    "BioParams", "SystemState", "reaction_jacobian", "reaction_rhs",
    "PoreNetwork", "export_network", "extract_network", "import_network",
    "ScenarioSpec", "batch", "generate",
]
