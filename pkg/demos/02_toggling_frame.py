"""
Toggling frame of the six-interval cycle
========================================

A fully symbolic two-spin system is pushed through the cycle. Each free
interval sees the internal Hamiltonian conjugated by the pulses so far.
The duration-weighted average of those toggled Hamiltonians cancels
term by term, whatever the detunings and the coupling.
"""
import sympy

from spindd import SpinSystem, build_internal_hamiltonian, proposed_sequence
from spindd.average_hamiltonian import first_magnus, toggled_hamiltonians, zeroth_average

system = SpinSystem.symbolic(2)
h_in = build_internal_hamiltonian(system)
print("H_in =")
print(h_in.to_text(), "\n")

seq = proposed_sequence(sympy.Symbol("tau", positive=True))
for ev in seq.events:
    print(f"pulse t={ev.time}  azimuth={ev.azimuth}  angle={ev.angle}")

frame = toggled_hamiltonians(seq, h_in)
for k, h in enumerate(frame.hamiltonians, 1):
    print(f"\ninterval {k}:")
    print(h.to_text())

print("\nzeroth-order average:", zeroth_average(frame).to_text())

# the first-order correction survives only as detuning x coupling cross terms
h1 = first_magnus(frame)
print("\nfirst Magnus term:")
print(h1.to_text())
