"""Command-line interface.

Subcommands mirror the processing chain::

    porebio extract  IMAGE.raw [--crop x0:x1,y0:y1,z0:z1]   -> network.json
    porebio scenario --network network.json --seed 3         -> state_seed3.json
    porebio simulate --network network.json --D-n 5e7        -> trajectory.csv, attractor.json, audit.json
    porebio batch    --network network.json --count 10       -> one CSV per run + summary.csv
    porebio oracle   --fixture dumbbell --D-n 1e4            -> oracle_report.json
    porebio analyze  trajectory.csv                          -> attractor report on stdout

Settings come from three layers, later ones winning: built-in defaults, the
JSON file given with ``--config`` and individual flags. The config file has
optional blocks ``params``, ``solver``, ``scenario`` and ``analysis`` whose
keys are the field names of :class:`~porebio.kinetics.BioParams`,
:class:`~porebio.integrator.SolverConfig`,
:class:`~porebio.scenario.ScenarioSpec` and the analysis thresholds below.
The diffusion coefficient ``D_n`` has no default and must be supplied.

Exit status is 0 only when every output was written and every audit passed.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import oracle as _oracle
from .analysis import (attractor_report, conservation_audit, export_trajectory,
                       read_trajectory)
from .errors import InputError, InvariantViolation, NumericalError
from .image_io import CropRegion, crop, load_volume, porosity
from .integrator import Integrator, SolverConfig
from .kinetics import BioParams
from .network import export_network, extract_network, import_network
from .scenario import ScenarioSpec, export_state, generate, import_state, summarize, write_summary

ANALYSIS_DEFAULTS = {
    "mb_threshold_fraction": 1e-3,
    "window": 90.0,
    "jitter": 1e-6,
    "conservation_tol": 1e-8,
}

# flag dest -> (config block, field)
_FIELD_FLAGS = {
    "D_n": ("params", "D_n"), "K": ("params", "K"), "K_b": ("params", "K_b"),
    "mu": ("params", "mu"), "eta": ("params", "eta"), "rho": ("params", "rho"),
    "c1": ("params", "c1"), "c2": ("params", "c2"),
    "dt": ("solver", "dt"), "t_end": ("solver", "t_end"),
    "snapshot_stride": ("solver", "snapshot_stride"),
    "seed": ("scenario", "seed"), "mode": ("scenario", "dom_mode"),
    "patch_radius": ("scenario", "patch_radius"),
    "window": ("analysis", "window"), "threshold": ("analysis", "mb_threshold_fraction"),
}


class RunConfig:
    """Merged settings for one command invocation."""

    def __init__(self, blocks: dict[str, dict]):
        unknown = set(blocks) - {"params", "solver", "scenario", "analysis"}
        if unknown:
            raise InputError(f"unknown config block(s): {', '.join(sorted(unknown))}")
        self.blocks = {k: dict(blocks.get(k, {})) for k in ("params", "solver", "scenario", "analysis")}
        extra = set(self.blocks["analysis"]) - set(ANALYSIS_DEFAULTS)
        if extra:
            raise InputError(f"unknown analysis option(s): {', '.join(sorted(extra))}")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        blocks: dict[str, dict] = {}
        if getattr(args, "config", None):
            path = Path(args.config)
            if not path.is_file():
                raise InputError(f"config file {path} not found")
            try:
                blocks = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise InputError(f"config file {path} is not valid JSON: {exc}") from exc
            if not isinstance(blocks, dict):
                raise InputError("config file must hold a JSON object")
        cfg = cls(blocks)
        for dest, (block, key) in _FIELD_FLAGS.items():
            val = getattr(args, dest, None)
            if val is not None:
                cfg.blocks[block][key] = val
        return cfg

    def params(self) -> BioParams:
        if "D_n" not in self.blocks["params"]:
            raise InputError("D_n has no default; pass --D-n or set params.D_n in --config")
        return BioParams.from_dict(self.blocks["params"])

    def solver(self) -> SolverConfig:
        return SolverConfig.from_dict(self.blocks["solver"])

    def scenario(self) -> ScenarioSpec:
        return ScenarioSpec.from_dict(self.blocks["scenario"])

    def analysis(self) -> dict:
        return {**ANALYSIS_DEFAULTS, **self.blocks["analysis"]}

    def to_dict(self) -> dict:
        out = {"analysis": self.analysis()}
        for name in ("params", "solver", "scenario"):
            try:
                out[name] = getattr(self, name)().to_dict()
            except InputError:
                out[name] = dict(self.blocks[name])
        return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_network(path):
    if path is None:
        raise InputError("--network is required")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"network file {p} not found")
    return import_network(p)


def _write_json(path: Path, doc: Any) -> Path:
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


# -- extract ------------------------------------------------------------------
def cmd_extract(args) -> int:
    img = load_volume(args.image, args.meta)
    if args.crop:
        img = crop(img, CropRegion.parse(args.crop))
    net = extract_network(img)
    path = export_network(net, _out_dir(args) / args.name)
    n_comp, _ = net.components()
    print(f"nodes={net.n_nodes} edges={net.n_edges} components={n_comp} "
          f"porosity={porosity(img):.6g} pore_voxels={img.n_pore}")
    print(f"wrote {path}")
    return 0


# -- scenario -----------------------------------------------------------------
def cmd_scenario(args) -> int:
    cfg = RunConfig.from_args(args)
    net = _load_network(args.network)
    spec = cfg.scenario()
    state = generate(net, spec)
    path = export_state(state, _out_dir(args) / f"state_seed{spec.seed}.json")
    row = summarize([state], [spec.seed], [spec.dom_mode])[0]
    print(json.dumps(row))
    print(f"wrote {path}")
    return 0


# -- simulate -----------------------------------------------------------------
def _analyse(traj, analysis: dict) -> tuple[Optional[dict], float]:
    audit = conservation_audit(traj) if len(traj) > 1 else 0.0
    span = traj.t[-1] - traj.t[0]
    if span < analysis["window"]:
        return None, audit
    rep = attractor_report(traj, analysis["mb_threshold_fraction"], analysis["window"],
                           analysis["jitter"])
    return rep.to_dict(), audit


def cmd_simulate(args) -> int:
    cfg = RunConfig.from_args(args)
    params, solver, analysis = cfg.params(), cfg.solver(), cfg.analysis()
    net = _load_network(args.network)
    if args.state:
        state0 = import_state(args.state)
    else:
        state0 = generate(net, cfg.scenario())
    out = _out_dir(args)
    _write_json(out / "config.json", cfg.to_dict())
    traj = Integrator(net, params, solver).run(state0)
    export_trajectory(traj, out / "trajectory.csv")
    report, audit = _analyse(traj, analysis)
    ok = audit <= analysis["conservation_tol"]
    _write_json(out / "audit.json", {"conservation_error": audit,
                                     "tolerance": analysis["conservation_tol"], "passed": ok})
    if report is None:
        _write_json(out / "attractor.json", {"skipped": "run shorter than the analysis window"})
        print(f"records={len(traj)} conservation_error={audit:.3e} (attractor report skipped)")
    else:
        _write_json(out / "attractor.json", report)
        print(f"records={len(traj)} conservation_error={audit:.3e} "
              f"converged={report['converged']} extinction_time={report['time_to_mb_extinction']}")
    if not ok:
        print(f"error: conservation audit failed ({audit:.3e} > {analysis['conservation_tol']:g})",
              file=sys.stderr)
        return 1
    return 0


# -- batch --------------------------------------------------------------------
def _batch_job(job: dict) -> dict:
    """Run one scenario; never raises, failures are reported in the row."""
    row = {"scenario": job["index"], "seed": job["spec"].seed, "mode": job["spec"].dom_mode}
    try:
        state0 = generate(job["net"], job["spec"])
        init = summarize([state0], [job["spec"].seed])[0]
        row.update({k: init[k] for k in ("MB", "DOM", "mb_fraction", "total_carbon")})
        traj = Integrator(job["net"], job["params"], job["solver"]).run(state0)
        export_trajectory(traj, job["csv"])
        report, audit = _analyse(traj, job["analysis"])
        row["conservation_error"] = audit
        if report is not None:
            row["extinction_time"] = report["time_to_mb_extinction"]
            row["terminal_B"], row["terminal_organic"], row["terminal_CO2"] = report["terminal_point"]
            row["converged"] = report["converged"]
        ok = audit <= job["analysis"]["conservation_tol"]
        row["status"] = "ok" if ok else "audit_failed"
    except (InputError, NumericalError, InvariantViolation, OSError) as exc:
        row["status"] = "failed"
        row["error"] = str(exc)
    return row


_SUMMARY_FIELDS = ("scenario", "seed", "mode", "MB", "DOM", "mb_fraction", "total_carbon",
                   "extinction_time", "terminal_B", "terminal_organic", "terminal_CO2",
                   "converged", "conservation_error", "status", "error")


def cmd_batch(args) -> int:
    cfg = RunConfig.from_args(args)
    params, solver, analysis = cfg.params(), cfg.solver(), cfg.analysis()
    template = cfg.scenario()
    if args.count < 1:
        raise InputError("--count must be >= 1")
    if args.jobs < 1:
        raise InputError("--jobs must be >= 1")
    net = _load_network(args.network)
    out = _out_dir(args)
    _write_json(out / "config.json", cfg.to_dict())
    modes = ["homogeneous", "heterogeneous"] if args.both_modes else [template.dom_mode]
    jobs = []
    for mode in modes:
        for k in range(args.count):
            spec = replace(template, seed=template.seed + k, dom_mode=mode)
            idx = len(jobs)
            jobs.append({"index": idx, "net": net, "params": params, "solver": solver,
                         "analysis": analysis, "spec": spec,
                         "csv": out / f"scenario_{idx:03d}_{mode}_seed{spec.seed}.csv"})
    if args.jobs == 1:
        rows = [_batch_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_batch_job, jobs))
    rows = [{k: row.get(k, "") for k in _SUMMARY_FIELDS} for row in rows]
    write_summary(rows, out / "summary.csv")
    failed = [r for r in rows if r["status"] != "ok"]
    n_conv = sum(1 for r in rows if r["converged"] is True)
    print(f"runs={len(rows)} failed={len(failed)} converged={n_conv}")
    for r in failed:
        print(f"scenario {r['scenario']} (seed {r['seed']}, {r['mode']}): {r['status']} "
              f"{r['error']}", file=sys.stderr)
    return 1 if failed else 0


# -- oracle -------------------------------------------------------------------
def _densities_from_state(img, net, masses) -> np.ndarray:
    """Spread each ball's masses uniformly over the voxels assigned to it."""
    owner = _oracle.assign_voxels_to_balls(img, net)
    counts = np.bincount(owner, minlength=net.n_nodes)
    if np.any(counts == 0):
        raise InputError("some balls own no pore voxel; cannot map masses to the grid")
    per_voxel = masses[owner] / (counts[owner, None] * img.voxel_volume)
    dens = np.zeros((5,) + img.dims)
    dens[:, img.voxels] = per_voxel.T
    return dens


def cmd_oracle(args) -> int:
    cfg = RunConfig.from_args(args)
    params, analysis = cfg.params(), cfg.analysis()
    net = None
    if args.fixture:
        make = {"dumbbell": _oracle.dumbbell_fixture,
                "single-pore": _oracle.single_pore_fixture}[args.fixture]
        img, dens = make()
        if args.network:
            net = _load_network(args.network)
    else:
        if not args.image:
            raise InputError("give --image (with --network) or --fixture")
        img = load_volume(args.image, args.meta)
        if max(img.dims) > _oracle.MAX_ORACLE_DIM:
            raise InputError(f"image {img.dims} exceeds the oracle limit of "
                             f"{_oracle.MAX_ORACLE_DIM} voxels per axis")
        net = _load_network(args.network)
        dens = _densities_from_state(img, net, generate(net, cfg.scenario()).masses)
    t_end = cfg.blocks["solver"].get("t_end", 30.0)
    dt = cfg.blocks["solver"].get("dt", 1e-3)
    rep = _oracle.compare_with_network(img, params, dens, t_end=t_end,
                                       record_every=args.record_every, dt_network=dt,
                                       dt_oracle_max=dt, net=net)
    path = rep.to_json(_out_dir(args) / "oracle_report.json")
    tot = np.asarray(rep.oracle_totals).sum(axis=1)
    drift = float(np.abs(tot - tot[0]).max() / tot[0]) if tot[0] > 0 else 0.0
    last = rep.species_discrepancy[-1]
    print(f"nodes={rep.n_nodes} voxels={rep.n_pore_voxels} t={rep.times[-1]:g} "
          f"discrepancy={rep.discrepancy[-1]:.3e} B={last[0]:.3e} N={last[1]:.3e} "
          f"oracle_conservation={drift:.3e}")
    print(f"wrote {path}")
    if drift > analysis["conservation_tol"]:
        print(f"error: oracle conservation audit failed ({drift:.3e})", file=sys.stderr)
        return 1
    return 0


# -- analyze ------------------------------------------------------------------
def cmd_analyze(args) -> int:
    cfg = RunConfig.from_args(args)
    analysis = cfg.analysis()
    traj = read_trajectory(args.trajectory)
    report, audit = _analyse(traj, analysis)
    if report is None:
        raise InputError(f"trajectory spans less than the {analysis['window']:g}-day window")
    doc = {"attractor": report, "conservation_error": audit,
           "conservation_passed": audit <= analysis["conservation_tol"]}
    print(json.dumps(doc, indent=2))
    if args.out:
        _write_json(_out_dir(args) / "analysis.json", doc)
    return 0 if doc["conservation_passed"] else 1


# -- parser -------------------------------------------------------------------
def _add_common(p, out_default: Optional[str] = "."):
    p.add_argument("--config", help="JSON file with params/solver/scenario/analysis blocks")
    p.add_argument("--out", default=out_default, help="output directory (default: %(default)s)")


def _add_params(p):
    g = p.add_argument_group("kinetic parameters (override --config)")
    g.add_argument("--D-n", dest="D_n", type=float, help="DOM diffusion coefficient, um^2/day")
    g.add_argument("--K", type=float, help="maximal MB growth rate, 1/day")
    g.add_argument("--K-b", dest="K_b", type=float, help="Monod half-saturation, ugC")
    g.add_argument("--mu", type=float, help="MB mortality rate, 1/day")
    g.add_argument("--eta", type=float, help="MB respiration rate, 1/day")
    g.add_argument("--rho", type=float, help="recycled fraction of dead MB")
    g.add_argument("--c1", type=float, help="SOM decomposition rate, 1/day")
    g.add_argument("--c2", type=float, help="FOM decomposition rate, 1/day")


def _add_solver(p):
    g = p.add_argument_group("time stepping (override --config)")
    g.add_argument("--dt", type=float, help="time step, days")
    g.add_argument("--t-end", dest="t_end", type=float, help="final time, days")
    g.add_argument("--snapshot-stride", dest="snapshot_stride", type=int,
                   help="record every N steps")


def _add_scenario(p):
    g = p.add_argument_group("initial conditions (override --config)")
    g.add_argument("--seed", type=int, help="scenario seed")
    g.add_argument("--mode", choices=["homogeneous", "heterogeneous"], help="DOM distribution")
    g.add_argument("--patch-radius", dest="patch_radius", type=int,
                   help="MB patch radius in graph hops")


def _add_analysis(p):
    g = p.add_argument_group("analysis thresholds (override --config)")
    g.add_argument("--window", type=float, help="trailing window for the attractor test, days")
    g.add_argument("--threshold", type=float,
                   help="MB extinction threshold as a fraction of initial carbon")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="porebio", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract a maximal-ball network from a volume")
    p.add_argument("image", help=".raw volume (sidecar JSON next to it)")
    p.add_argument("--meta", help="sidecar path if not IMAGE with .json suffix")
    p.add_argument("--crop", help="crop region x0:x1,y0:y1,z0:z1 (half-open)")
    p.add_argument("--name", default="network.json", help="output file name")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("scenario", help="generate a random initial state")
    p.add_argument("--network", help="network JSON")
    _add_common(p)
    _add_scenario(p)
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("simulate", help="run one scenario")
    p.add_argument("--network", help="network JSON")
    p.add_argument("--state", help="initial state JSON (default: generate from the scenario)")
    _add_common(p)
    _add_params(p)
    _add_solver(p)
    _add_scenario(p)
    _add_analysis(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("batch", help="run seeds SEED .. SEED+COUNT-1")
    p.add_argument("--network", help="network JSON")
    p.add_argument("--count", type=int, default=10, help="scenarios per mode")
    p.add_argument("--both-modes", action="store_true",
                   help="run every seed with homogeneous and heterogeneous DOM")
    p.add_argument("--jobs", type=int, default=1, help="concurrent scenarios")
    _add_common(p)
    _add_params(p)
    _add_solver(p)
    _add_scenario(p)
    _add_analysis(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("oracle", help="compare the network model with the voxel solver")
    p.add_argument("--image", help=".raw volume (at most 64 voxels per axis)")
    p.add_argument("--meta", help="sidecar path")
    p.add_argument("--network", help="network JSON for --image")
    p.add_argument("--fixture", choices=["dumbbell", "single-pore"],
                   help="built-in geometry and initial densities")
    p.add_argument("--record-every", dest="record_every", type=float, default=1.0,
                   help="comparison interval, days")
    _add_common(p)
    _add_params(p)
    _add_solver(p)
    _add_scenario(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("analyze", help="attractor report and audit for a trajectory CSV")
    p.add_argument("trajectory", help="CSV written by simulate or batch")
    _add_common(p, out_default=None)
    _add_analysis(p)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, NumericalError, InvariantViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
