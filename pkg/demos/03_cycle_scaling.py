"""
How fast does one cycle approach the identity?
==============================================

The exact cycle propagator is compared with the identity as the cycle
shrinks. With a vanishing average Hamiltonian the error falls as t_c^2.
The baselines leave part of H_in at zeroth order and only reach t_c.
"""
import numpy as np

from spindd import SpinSystem, build_sequence, frobenius_distance_mod_phase
from spindd.dynamics import cycle_propagator

system = SpinSystem.pair(1.0, -0.6, 0.8)
taus = np.logspace(-3, -2, 5)

print(f"{'sequence':>10}  slope   distances")
for name in ("proposed", "wahuha", "mrev8", "cpmg"):
    d = [frobenius_distance_mod_phase(cycle_propagator(build_sequence(name, t), system), np.eye(4))
         for t in taus]
    slope = np.polyfit(np.log(taus), np.log(d), 1)[0]
    print(f"{name:>10}  {slope:5.2f}  " + " ".join(f"{x:.2e}" for x in d))
