"""
Time-step convergence
=====================

Both substeps are backward Euler, so errors should halve with the step.
Two problems have closed forms: fresh organic matter decaying at rate
``c2``, and DOM equalizing between two equal balls.
"""
import numpy as np

from porebio.integrator import Integrator, SolverConfig, convergence_order
from porebio.kinetics import BioParams, SystemState
from porebio.network import Ball, PoreNetwork

params = BioParams(D_n=0.0)
one = PoreNetwork.from_balls([Ball((0.0, 0.0, 0.0), 10.0)])


def fom_at_one_day(dt):
    m = np.zeros((1, 5))
    m[0, 3] = 1.0
    integ = Integrator(one, params, SolverConfig(dt=dt, t_end=1.0))
    integ.run(SystemState(0.0, m))
    return integ.final_state.masses[0, 3]


dts = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
for dt in dts:
    print(f"dt={dt:<8g} FOM error {abs(fom_at_one_day(dt) - np.exp(-0.3)):.3e}")
print(f"observed order {convergence_order(fom_at_one_day, dts, exact=np.exp(-0.3)):.3f}")

###############################################################################
# Two balls of radius 30 um, 40 um apart. The concentration difference decays
# like ``exp(-2 D Q t / V)``; D is chosen to give one e-folding per day.
two = PoreNetwork.from_balls([Ball((0.0, 0.0, 0.0), 30.0), Ball((40.0, 0.0, 0.0), 30.0)])
V, Q = two.volumes[0], two.q[0]
diff = BioParams(D_n=V / (2 * Q))


def spread(dt):
    m = np.zeros((2, 5))
    m[0, 1] = V
    integ = Integrator(two, diff, SolverConfig(dt=dt, t_end=1.0))
    integ.run(SystemState(0.0, m))
    c = integ.final_state.masses[:, 1] / V
    return c[0] - c[1]


print(f"two-ball order {convergence_order(spread, dts[:3], exact=np.exp(-1.0)):.3f}")
