"""
Imperfect pulses, a stretched gap and a drifting field
======================================================

Three ways to break the ideal cycle. A flip-angle error rotates the
state a little every cycle. Stretching the fourth free interval breaks
the time symmetry and leaves a zeroth-order residue. A common detuning
that drifts during the run is not refocused once it changes within a cycle.
"""
from spindd import GeometrySpec, PulseErrorModel, proposed_sequence, realize_geometry, run_ensemble
from spindd.dynamics import evolve, fid_decay_time

spec = GeometrySpec(n_spins=4, seed=5)
probe = dict(initial="single_qubit", state_kwargs={"site": 0, "bloch": (0.0, 1.0, 0.0)})
kw = dict(n_realizations=8, n_cycles=4, tc_over_td=0.05, **probe)
print("flip error -> mean fidelity after 4 cycles")
for eps in (0.0, 0.01, 0.02, 0.05):
    r = run_ensemble(spec, proposed_sequence(1.0), PulseErrorModel(flip_error=eps), **kw)
    print(f"  {eps:5.2f}  {r.mean()[-1]:.4f}")

# the gap is measured in units of tau
spec = GeometrySpec(n_spins=4, seed=11, size=2.0, min_separation=0.5, detuning_std=1.0)
print("\nextra gap -> mean fidelity after 100 cycles")
for gap in (0.0, 0.25, 0.5, 1.0):
    r = run_ensemble(spec, proposed_sequence(1.0), n_realizations=8, n_cycles=100, tc_over_td=0.05, gap45=gap)
    print(f"  {gap:5.2f}  {r.mean()[-1]:.4f}")

# drift rates in units of 1 / t_c^2
s = realize_geometry(GeometrySpec(n_spins=3, seed=2), 0)
tc = fid_decay_time(s) / 20
seq = proposed_sequence(tc / 6)
print("\ndrift rate * t_c^2 -> fidelity after 200 cycles")
for rate in (0.0, 1e-3, 1e-1, 1.0):
    print(f"  {rate:6.0e}  {evolve(s, seq, 200, drift_rate=rate / tc**2).fidelity[-1]:.4f}")
