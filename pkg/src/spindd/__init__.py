"""
spindd: exact simulation and average-Hamiltonian analysis of dynamical
decoupling cycles on dipolar-coupled spin-1/2 ensembles.

The package is organised bottom-up:

- :mod:`spindd.operator_algebra` -- Pauli-word operators (exact or numeric) and dense helpers
- :mod:`spindd.spin_system` -- internal Hamiltonians from parameters or random geometries
- :mod:`spindd.sequence` -- the short six-interval cycle and CPMG / WAHUHA / MREV-8 baselines
- :mod:`spindd.average_hamiltonian` -- toggling frame, average Hamiltonian, first Magnus term
- :mod:`spindd.dynamics` -- density-matrix propagation, fidelity, FID decay time, ensembles
- :mod:`spindd.runner` -- YAML-configured experiments and the ``spindd`` command
"""
__version__ = "0.1.0"

from .operator_algebra import (  # noqa: E402
    OperatorSum,
    clifford_conjugate,
    commutator,
    expm_hermitian,
    frobenius_distance_mod_phase,
    multiply,
    operator_norm,
    single_spin_operator,
    to_dense,
    total_spin_operator,
)
from .spin_system import (  # noqa: E402
    GeometrySpec,
    SpinSystem,
    build_internal_hamiltonian,
    dipolar_coupling,
    realize_geometry,
)
from .sequence import (  # noqa: E402
    PulseErrorModel,
    PulseEvent,
    Sequence,
    build_sequence,
    control_propagator,
    cpmg_sequence,
    custom_sequence,
    free_evolution,
    mrev8_sequence,
    proposed_sequence,
    pulse_propagator,
    segment_propagators,
    wahuha_sequence,
)
from .average_hamiltonian import (  # noqa: E402
    MagnusTerms,
    TogglingFrame,
    effective_propagator,
    first_magnus,
    frame_propagator,
    magnus_terms,
    toggled_hamiltonians,
    zeroth_average,
)
from .dynamics import (  # noqa: E402
    EnsembleResult,
    ObservableSeries,
    cycle_propagator,
    evolve,
    fid_decay_time,
    fidelity,
    initial_state,
    run_ensemble,
    stroboscopic_evolution,
)
