"""Implicit time stepping of the coupled reaction-diffusion system on a network.

Each step is a Lie splitting of two backward-Euler substeps:

1. reaction: per node, solve ``s+ = s + dt * reaction_rhs(s+)`` by Newton's
   method (5x5 systems, batched over nodes);
2. diffusion: backward Euler for DOM only; biomass, SOM, FOM and CO2 stay in
   their ball.

Both substeps preserve total carbon exactly in exact arithmetic (Newton
updates keep linear invariants, the diffusion update is in flux form) and
keep masses nonnegative for ``dt * K < 1``. Negative values beyond round-off
raise :class:`InvariantViolation` rather than being clipped.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .analysis import Trajectory
from .diffusion import ImplicitDiffusion, assemble
from .errors import InputError, InvariantViolation, NumericalError
from .kinetics import DOM, BioParams, SystemState, reaction_jacobian, reaction_rhs
from .network import PoreNetwork

__all__ = [
    "SolverConfig",
    "Integrator",
    "step",
    "run",
    "convergence_order",
]

NEG_TOL = 1e-14
_MAX_HALVINGS = 5
_MAX_POSITIVITY_HALVINGS = 60


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.01  # days
    t_end: float = 918.0  # days
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    linear_tol: float = 1e-10
    linear_max_iter: int = 10_000
    snapshot_stride: int = 100
    keep_snapshots: bool = False

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InputError("dt must be positive")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise InputError("t_end must be nonnegative")
        for name in ("newton_tol", "linear_tol"):
            if not 0 < getattr(self, name) < 1:
                raise InputError(f"{name} must lie in (0, 1)")
        if self.newton_max_iter < 1 or self.linear_max_iter < 1:
            raise InputError("iteration limits must be positive")
        if self.snapshot_stride < 1:
            raise InputError("snapshot_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        n = round(self.t_end / self.dt)
        if abs(n * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise InputError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")
        return int(n)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class Integrator:
    """Stepper bound to one network, parameter set and time step.

    The diffusion matrix and its factorization are built once here; stepping
    is a pure function of the incoming state, so repeated runs are
    reproducible bit for bit.
    """

    def __init__(self, net: PoreNetwork, params: BioParams, cfg: SolverConfig,
                 preconditioner: str = "lu"):
        self.net, self.params, self.cfg = net, params, cfg
        self.op = assemble(net)
        self.diffusion = ImplicitDiffusion(self.op, params.D_n, cfg.dt, tol=cfg.linear_tol,
                                           max_iter=cfg.linear_max_iter,
                                           preconditioner=preconditioner)
        self.newton_iterations = 0

    # -- substeps ---------------------------------------------------------
    def reaction_substep(self, masses: np.ndarray) -> np.ndarray:
        """Backward Euler for the node-local kinetics (Newton, batched)."""
        p, dt = self.params, self.cfg.dt
        s0 = np.asarray(masses, dtype=float)
        s = s0.copy()
        scale = np.abs(s0).sum(axis=1)
        atol = self.cfg.newton_tol * np.where(scale > 0, scale, 1.0)
        eye = np.eye(5)

        R = s - s0 - dt * reaction_rhs(s, p)
        res = np.abs(R).max(axis=1)
        active = np.flatnonzero(res > atol)
        it = 0
        while active.size:
            if it == self.cfg.newton_max_iter:
                worst = active[np.argmax(res[active] / atol[active])]
                raise NumericalError(
                    f"Newton did not converge at node {worst}: residual "
                    f"{res[worst]:.3e} (tolerance {atol[worst]:.3e})")
            it += 1
            sa, s0a, Ra = s[active], s0[active], R[active]
            J = eye - dt * reaction_jacobian(sa, p)
            delta = np.linalg.solve(J, Ra[..., None])[..., 0]
            alpha = np.ones(len(active))
            trial = sa - delta
            # the concave uptake term lets full steps overshoot into n < 0,
            # where a spurious root lives; stay inside the nonnegative cone
            floor = -NEG_TOL * scale[active, None]
            for _ in range(_MAX_POSITIVITY_HALVINGS):
                outside = (trial < floor).any(axis=1)
                if not outside.any():
                    break
                alpha[outside] *= 0.5
                trial[outside] = sa[outside] - alpha[outside, None] * delta[outside]
            else:
                node = active[np.flatnonzero((trial < floor).any(axis=1))[0]]
                raise NumericalError(f"Newton step cannot stay nonnegative at node {node}")
            Rt = trial - s0a - dt * reaction_rhs(trial, p)
            rt = np.abs(Rt).max(axis=1)
            for _ in range(_MAX_HALVINGS):
                worse = rt > res[active]
                if not worse.any():
                    break
                alpha[worse] *= 0.5
                trial[worse] = sa[worse] - alpha[worse, None] * delta[worse]
                Rt[worse] = trial[worse] - s0a[worse] - dt * reaction_rhs(trial[worse], p)
                rt[worse] = np.abs(Rt[worse]).max(axis=1)
            s[active], R[active], res[active] = trial, Rt, rt
            active = active[rt > atol[active]]
        self.newton_iterations = it
        return s

    def diffusion_substep(self, masses: np.ndarray) -> np.ndarray:
        out = np.array(masses, dtype=float, copy=True)
        if self.params.D_n > 0 and self.op.n > 1:
            out[:, DOM] = self.diffusion(out[:, DOM])
        return out

    def _check_positive(self, masses, time, where):
        floor = -NEG_TOL * max(float(np.abs(masses).sum()), np.finfo(float).tiny)
        if masses.min() < floor:
            node, k = np.unravel_index(np.argmin(masses), masses.shape)
            raise InvariantViolation(
                f"negative mass {masses[node, k]:.3e} for species {k} at node {node} "
                f"after {where} substep (t={time:g})")

    # -- public API -------------------------------------------------------
    def step(self, state: SystemState) -> SystemState:
        if state.n_nodes != self.net.n_nodes:
            raise InputError(f"state has {state.n_nodes} nodes, network {self.net.n_nodes}")
        t_new = state.time + self.cfg.dt
        m = self.reaction_substep(state.masses)
        self._check_positive(m, t_new, "reaction")
        m = self.diffusion_substep(m)
        self._check_positive(m, t_new, "diffusion")
        return SystemState(t_new, m)

    def run(self, state0: SystemState,
            observers: Iterable[Callable[[SystemState, int], None]] = (),
            n_steps: Optional[int] = None) -> Trajectory:
        """Advance ``n_steps`` (default ``cfg.n_steps``) and record every
        ``snapshot_stride`` steps plus the final state."""
        if state0.masses.min() < 0:
            raise InputError("initial state has negative masses")
        if state0.n_nodes != self.net.n_nodes:
            raise InputError(f"state has {state0.n_nodes} nodes, network {self.net.n_nodes}")
        n_steps = self.cfg.n_steps if n_steps is None else int(n_steps)
        observers = list(observers)
        stride, keep = self.cfg.snapshot_stride, self.cfg.keep_snapshots
        traj = Trajectory()
        t0, dt = state0.time, self.cfg.dt
        state = state0
        traj.record(state, keep)
        for obs in observers:
            obs(state, 0)
        m = state0.masses
        for k in range(1, n_steps + 1):
            t = t0 + k * dt
            try:
                m = self.reaction_substep(m)
                self._check_positive(m, t, "reaction")
                m = self.diffusion_substep(m)
                self._check_positive(m, t, "diffusion")
            except (NumericalError, InvariantViolation) as exc:
                raise type(exc)(f"{exc} [step {k}, t={t:g} days]") from exc
            if k % stride == 0 or k == n_steps:
                state = SystemState(t, m)
                traj.record(state, keep)
                for obs in observers:
                    obs(state, k)
        self.final_state = SystemState(t0 + n_steps * dt, m)
        return traj


def step(state: SystemState, net: PoreNetwork, params: BioParams,
         cfg: SolverConfig) -> SystemState:
    """Single split step; builds the operator each call (use :class:`Integrator`
    for repeated stepping)."""
    return Integrator(net, params, cfg).step(state)


def run(state0: SystemState, net: PoreNetwork, params: BioParams, cfg: SolverConfig,
        observers: Iterable[Callable[[SystemState, int], None]] = ()) -> Trajectory:
    return Integrator(net, params, cfg).run(state0, observers)


def convergence_order(problem: Callable[[float], Any], dts: Sequence[float],
                      exact: Any = None) -> float:
    """Observed temporal order of accuracy.

    ``problem(dt)`` returns the solution (scalar or array) at a fixed final
    time. With ``exact`` the errors against it are fitted; otherwise
    successive differences between runs (Richardson) are fitted, which for a
    geometric sequence of steps scale with the same power of ``dt``.
    """
    dts = [float(d) for d in dts]
    if len(dts) < 3:
        raise InputError("need at least three step sizes")
    ratios = [a / b for a, b in zip(dts, dts[1:])]
    if any(r <= 1 for r in ratios) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise InputError("step sizes must form a decreasing geometric progression")
    sols = [np.atleast_1d(np.asarray(problem(dt), dtype=float)) for dt in dts]
    if exact is not None:
        ex = np.atleast_1d(np.asarray(exact, dtype=float))
        errs = [np.abs(u - ex).max() for u in sols]
        h = dts
    else:
        errs = [np.abs(a - b).max() for a, b in zip(sols, sols[1:])]
        h = dts[:-1]
    if min(errs) <= 0:
        raise NumericalError("zero error; order is undefined")
    slope = np.polyfit(np.log(h), np.log(errs), 1)[0]
    return float(slope)
