"""Transformation terms of the five-compound decomposition model.

State vectors are ordered ``(b, n, m1, m2, c)``:

=====  =====================================  ======
index  compound                               unit
=====  =====================================  ======
0      MB, microbial biomass                  ugC
1      DOM, dissolved organic matter          ugC
2      SOM, soil organic matter               ugC
3      FOM, fresh organic matter              ugC
4      CO2, respired carbon                   ugC
=====  =====================================  ======

All functions broadcast over leading axes, so an ``(n_nodes, 5)`` array of
node masses is evaluated in one call.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any, Mapping

import numpy as np

from .errors import InputError

__all__ = [
    "SPECIES",
    "MB", "DOM", "SOM", "FOM", "CO2",
    "BioParams",
    "SystemState",
    "monod",
    "reaction_rhs",
    "reaction_jacobian",
]

SPECIES = ("b", "n", "m1", "m2", "c")
MB, DOM, SOM, FOM, CO2 = range(5)


@dataclass(frozen=True)
class BioParams:
    """Kinetic constants (per day) and diffusion coefficients (um^2 / day).

    Defaults are the Arthrobacter sp. 9R values. ``D_n`` has no published
    default and must always be given. ``K_b`` is applied to node DOM *mass*,
    so it shares the mass unit of the state (ugC); convert explicitly if a
    concentration-based half-saturation constant is intended.
    ``D_b`` and ``D_c`` are only used by the voxel reference solver.
    """

    D_n: float
    K: float = 9.6
    K_b: float = 0.001
    mu: float = 0.5
    eta: float = 0.2
    rho: float = 0.55
    c1: float = 0.01
    c2: float = 0.3
    D_b: float = 0.0
    D_c: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not np.isfinite(v):
                raise InputError(f"{f.name} must be a finite number, got {v!r}")
            object.__setattr__(self, f.name, float(v))
        for name in ("K", "mu", "eta", "c1", "c2", "D_n", "D_b", "D_c"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be nonnegative")
        if self.K_b <= 0:
            raise InputError("K_b must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise InputError("rho must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BioParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        if "D_n" not in d:
            raise InputError("D_n (DOM diffusion coefficient, um^2/day) is required")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SystemState:
    """Node masses ``(n_nodes, 5)`` at ``time`` (days)."""

    time: float
    masses: np.ndarray

    def __post_init__(self):
        m = np.array(self.masses, dtype=float, copy=True)
        if m.ndim != 2 or m.shape[1] != 5:
            raise InputError(f"masses must have shape (n_nodes, 5), got {m.shape}")
        m.flags.writeable = False
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "time", float(self.time))

    @property
    def n_nodes(self) -> int:
        return self.masses.shape[0]

    @property
    def total_carbon(self) -> float:
        return float(self.masses.sum())

    def __eq__(self, other):
        if not isinstance(other, SystemState):
            return NotImplemented
        return self.time == other.time and np.array_equal(self.masses, other.masses)


def monod(n, params: BioParams):
    """Specific growth rate ``K n / (K_b + n)`` (per day); bounded by ``K``."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("monod requires nonnegative DOM")
    return params.K * n / (params.K_b + n)


def reaction_rhs(s, params: BioParams) -> np.ndarray:
    """Rates ``(db, dn, dm1, dm2, dc)`` of the transformation processes.

    Diffusion is excluded. The five rates sum to zero: carbon only moves
    between pools.
    """
    s = np.asarray(s, dtype=float)
    b, n, m1, m2 = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    p = params
    uptake = p.K * n / (p.K_b + n) * b
    death = p.mu * b
    out = np.empty_like(s)
    out[..., 0] = uptake - (p.eta + p.mu) * b
    out[..., 1] = p.rho * death - uptake + p.c1 * m1 + p.c2 * m2
    out[..., 2] = -p.c1 * m1 + (1.0 - p.rho) * death
    out[..., 3] = -p.c2 * m2
    out[..., 4] = p.eta * b
    return out


def reaction_jacobian(s, params: BioParams) -> np.ndarray:
    """Exact derivative of :func:`reaction_rhs`, shape ``(..., 5, 5)``.

    Row ``k`` holds the partial derivatives of rate ``k``. Every column sums
    to zero.
    """
    s = np.asarray(s, dtype=float)
    b, n = s[..., 0], s[..., 1]
    p = params
    g = p.K * n / (p.K_b + n)
    dg = p.K * p.K_b / (p.K_b + n) ** 2
    J = np.zeros(s.shape + (5,))
    J[..., 0, 0] = g - (p.eta + p.mu)
    J[..., 0, 1] = dg * b
    J[..., 1, 0] = p.rho * p.mu - g
    J[..., 1, 1] = -dg * b
    J[..., 1, 2] = p.c1
    J[..., 1, 3] = p.c2
    J[..., 2, 0] = (1.0 - p.rho) * p.mu
    J[..., 2, 2] = -p.c1
    J[..., 3, 3] = -p.c2
    J[..., 4, 0] = p.eta
    return J
