import math

import numpy as np
import pytest
from scipy.linalg import expm

from oracles import SX, kron_hamiltonian, pair_fid_decay_time, pair_hamiltonian, proposed_cycle
from spindd.dynamics import (
    ObservableSeries,
    cycle_propagator,
    evolve,
    fid_decay_time,
    fidelity,
    initial_state,
    run_ensemble,
    stroboscopic_evolution,
    validate_density,
)
from spindd.exceptions import GenerationError, NumericalDriftError, ValidationError
from spindd.operator_algebra import frobenius_distance_mod_phase, to_dense, total_spin_operator
from spindd.sequence import (
    IDEAL,
    PulseErrorModel,
    cpmg_sequence,
    free_evolution,
    mrev8_sequence,
    proposed_sequence,
    wahuha_sequence,
)
from spindd.spin_system import GeometrySpec, SpinSystem, realize_geometry

# desk-scale ensemble used by several comparative checks
ENSEMBLE = GeometrySpec(n_spins=4, seed=11, size=2.0, min_separation=0.5, detuning_std=1.0)


def test_initial_states():
    np.testing.assert_allclose(initial_state("all_transverse_x", 1), [[0.5, 0.5], [0.5, 0.5]])
    np.testing.assert_allclose(initial_state("single_qubit", 1, bloch=(0, 0, 1)), np.diag([1, 0]))
    rho = initial_state("all_transverse_x", 2)
    ix = to_dense(total_spin_operator("x", 2))
    assert np.trace(ix @ rho).real == pytest.approx(1.0, abs=1e-15)
    rho = initial_state("single_qubit", 3, site=1, bloch=(0, 1, 0))
    assert np.trace(to_dense(total_spin_operator("y", 3)) @ rho).real == pytest.approx(0.5)
    assert np.trace(to_dense(total_spin_operator("z", 3)) @ rho).real == pytest.approx(1.0)
    mixed = np.diag([0.25, 0.25, 0.5, 0.0])
    np.testing.assert_array_equal(initial_state("given_density", 2, density=mixed), mixed)


def test_initial_state_errors():
    with pytest.raises(ValidationError):
        initial_state("given_density", 1, density=[[0.5, 0.1], [0.2, 0.5]])
    with pytest.raises(ValidationError):
        validate_density(np.diag([1.5, -0.5]))
    with pytest.raises(ValidationError):
        validate_density(np.diag([0.5, 0.6]))
    with pytest.raises(ValidationError):
        initial_state("single_qubit", 1, bloch=(1, 1, 0))
    with pytest.raises(ValueError):
        initial_state("single_qubit", 2, site=2)
    with pytest.raises(ValueError):
        initial_state("thermal", 2)


def test_fidelity_cases():
    up, down = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    assert fidelity(up, down) == 0.0
    assert fidelity(initial_state("all_transverse_x", 1), up) == pytest.approx(0.5)
    assert fidelity(up, up) == 1.0
    # mixed reference goes through the full Uhlmann formula
    p = 0.3
    expected = (math.sqrt(p / 2) + math.sqrt((1 - p) / 2)) ** 2
    assert fidelity(np.eye(2) / 2, np.diag([p, 1 - p])) == pytest.approx(expected, rel=1e-12)


def test_cycle_propagator_against_ordered_product():
    s = SpinSystem.pair(1, -1, 0.5)
    u = cycle_propagator(proposed_sequence(0.01), s)
    ref = proposed_cycle(pair_hamiltonian(1, -1, 0.5), 0.01)
    assert np.max(np.abs(u - ref)) <= 1e-12


def test_cycle_propagator_trivial_cases():
    u = cycle_propagator(proposed_sequence(0.3), SpinSystem([0, 0, 0], np.zeros((3, 3))))
    assert frobenius_distance_mod_phase(u, np.eye(8)) <= 1e-12
    s = realize_geometry(ENSEMBLE, 0)
    h = kron_hamiltonian(s.detunings, s.couplings)
    u = cycle_propagator(free_evolution(0.7), s)
    np.testing.assert_allclose(u, expm(-0.7j * h), atol=1e-12)


def test_identity_cycle_gives_constant_series():
    rho = initial_state("all_transverse_x", 2)
    series = stroboscopic_evolution(rho, np.eye(4), 10, 0.5)
    assert isinstance(series, ObservableSeries)
    np.testing.assert_array_equal(series.fidelity, np.ones(11))
    np.testing.assert_allclose(series.times, 0.5 * np.arange(11))
    np.testing.assert_allclose(series.mx, 1.0)


def test_larmor_precession():
    delta, tc = 0.8, 0.1
    s = SpinSystem([delta], [[0]])
    series = evolve(s, free_evolution(tc), 50)
    np.testing.assert_allclose(series.mx, 0.5 * np.cos(delta * series.times), atol=1e-13)
    np.testing.assert_allclose(series.my, 0.5 * np.sin(delta * series.times), atol=1e-13)


def test_unitarity_over_many_cycles():
    s = realize_geometry(GeometrySpec(n_spins=6, seed=3), 0)
    u = cycle_propagator(proposed_sequence(0.05), s)
    # a drift check runs every 256 cycles and raises beyond 1e-8
    series = stroboscopic_evolution(initial_state("all_transverse_x", 6), u, 10_000)
    assert np.all(np.isfinite(series.fidelity))
    assert np.all((series.fidelity >= 0) & (series.fidelity <= 1))


def test_drift_detected():
    rho = initial_state("all_transverse_x", 1)
    with pytest.raises(NumericalDriftError):
        stroboscopic_evolution(rho, np.eye(2) * (1 + 1e-7), 300)


def test_error_model_continuity():
    s = realize_geometry(ENSEMBLE, 1)
    seq = proposed_sequence(0.02)
    ideal = cycle_propagator(seq, s)
    zero = cycle_propagator(seq, s, PulseErrorModel(flip_error=0.0, phase_error=0.0, width=0.0))
    assert np.max(np.abs(ideal - zero)) <= 1e-12
    tiny = cycle_propagator(seq, s, PulseErrorModel(flip_error=1e-9, phase_error=1e-9))
    assert np.max(np.abs(ideal - tiny)) <= 1e-8
    width = cycle_propagator(seq, s, PulseErrorModel(width=1e-9, include_internal=True))
    assert np.max(np.abs(ideal - width)) <= 1e-8


def test_overlapping_pulses_rejected():
    s = SpinSystem.pair(1, 2, 0.5)
    with pytest.raises(ValidationError):
        cycle_propagator(proposed_sequence(0.01), s, PulseErrorModel(width=0.02, include_internal=True))


@pytest.mark.parametrize("seq_builder", [proposed_sequence, cpmg_sequence, wahuha_sequence, mrev8_sequence])
def test_scaling_law_proposed_vs_free(seq_builder):
    s = SpinSystem.pair(1.0, -0.6, 0.8)
    taus = np.logspace(-3, -2, 5)
    d = [frobenius_distance_mod_phase(cycle_propagator(seq_builder(t), s), np.eye(4)) for t in taus]
    slope = np.polyfit(np.log(taus), np.log(d), 1)[0]
    if seq_builder is proposed_sequence:
        assert slope == pytest.approx(2.0, abs=0.2)
    else:
        # the baselines leave part of H_in at zeroth order
        assert slope == pytest.approx(1.0, abs=0.1)
    free = [frobenius_distance_mod_phase(cycle_propagator(free_evolution(6 * t), s), np.eye(4)) for t in taus]
    assert np.polyfit(np.log(taus), np.log(free), 1)[0] == pytest.approx(1.0, abs=0.1)


def test_fid_decay_time():
    assert fid_decay_time(SpinSystem([0.0], [[0.0]])) is None
    delta = 1.7
    assert fid_decay_time(SpinSystem([delta], [[0]])) == pytest.approx(math.acos(math.exp(-1)) / delta, rel=1e-10)
    a = 0.9
    got = fid_decay_time(SpinSystem.pair(0, 0, a))
    assert got == pytest.approx(pair_fid_decay_time(0, 0, a), rel=1e-9)
    assert got == pytest.approx(math.acos(math.exp(-1)) / (1.5 * a), rel=1e-10)
    assert fid_decay_time(SpinSystem([delta], [[0]]), horizon=0.1) is None


def test_proposed_stays_above_free():
    s = realize_geometry(ENSEMBLE, 0)
    td = fid_decay_time(s)
    tc = td / 20
    dd = evolve(s, proposed_sequence(tc / 6), 200)
    free = evolve(s, free_evolution(tc), 200)
    assert np.all(dd.fidelity[1:] > free.fidelity[1:])


def test_gap_monotone():
    gaps = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0]
    means = [run_ensemble(ENSEMBLE, proposed_sequence(1.0), n_realizations=8, n_cycles=100,
                          tc_over_td=0.05, gap45=g).mean()[-1] for g in gaps]
    assert all(b <= a for a, b in zip(means, means[1:])), means
    assert means[0] - means[-1] > 0.3


def test_drift_ordering():
    spec = GeometrySpec(n_spins=3, seed=2)
    for r in range(3):
        s = realize_geometry(spec, r)
        tc = fid_decay_time(s) / 20
        seq = proposed_sequence(tc / 6)
        static = evolve(s, seq, 200).fidelity[-1]
        slow = evolve(s, seq, 200, drift_rate=1e-3 / tc ** 2).fidelity[-1]
        fast = evolve(s, seq, 200, drift_rate=1.0 / tc ** 2).fidelity[-1]
        assert abs(slow - static) < 0.01
        assert fast < static - 0.5


def test_ensemble_single_realization():
    s = SpinSystem.pair(0.4, -0.3, 0.2)
    res = run_ensemble(s, proposed_sequence(0.05), n_cycles=20)
    assert res.n_realizations == 1
    series = evolve(s, proposed_sequence(0.05), 20)
    np.testing.assert_array_equal(res.mean(), series.fidelity)
    np.testing.assert_array_equal(res.stderr(), np.zeros(21))


def test_ensemble_deterministic_and_worker_independent():
    kw = dict(n_realizations=4, n_cycles=30, tc_over_td=0.05)
    a = run_ensemble(ENSEMBLE, proposed_sequence(1.0), **kw)
    b = run_ensemble(ENSEMBLE, proposed_sequence(1.0), **kw)
    c = run_ensemble(ENSEMBLE, proposed_sequence(1.0), workers=3, **kw)
    for k in ("times", "fidelity", "mx", "my", "mz", "decay_times"):
        assert np.array_equal(getattr(a, k), getattr(b, k))
        assert np.array_equal(getattr(a, k), getattr(c, k))


def test_ensemble_proposed_beats_free_at_ten_decay_times():
    kw = dict(n_realizations=8, n_cycles=200, tc_over_td=0.05)
    dd = run_ensemble(ENSEMBLE, proposed_sequence(1.0), **kw)
    free = run_ensemble(ENSEMBLE, free_evolution(1.0), **kw)
    np.testing.assert_allclose(dd.times[:, -1], 10 * dd.decay_times, rtol=1e-12)
    assert dd.mean()[-1] > free.mean()[-1]


def test_ensemble_generation_failure():
    bad = GeometrySpec(n_spins=30, seed=1, size=1.0, min_separation=0.9, max_attempts=2)
    with pytest.raises(GenerationError):
        run_ensemble(bad, proposed_sequence(0.1), n_realizations=2)
    with pytest.raises(ValueError):
        run_ensemble(SpinSystem.pair(1, 1, 1), proposed_sequence(0.1), n_realizations=0)


def test_larmor_x_state_matches_sigma_x():
    rho = initial_state("all_transverse_x", 1)
    np.testing.assert_allclose(rho, (np.eye(2) + SX) / 2)
    assert IDEAL.is_ideal
