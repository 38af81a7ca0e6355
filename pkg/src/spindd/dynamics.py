"""
Exact density-matrix propagation of spin systems under pulse sequences.

Everything here is dense linear algebra on ``2**N`` dimensional matrices.
A cycle propagator is the time-ordered product of free-evolution factors
``exp(-i H_in dt)`` and pulse propagators; repeated cycles are applied
stroboscopically, ``rho_k = U rho_{k-1} U^dag``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .exceptions import GenerationError, NumericalDriftError, ValidationError
from .operator_algebra import to_dense, total_spin_operator
from .sequence import IDEAL, PulseErrorModel, Sequence, pulse_propagator
from .spin_system import GeometrySpec, SpinSystem, build_internal_hamiltonian, realize_geometry

DENSITY_TOL = 1e-10
DRIFT_TOL = 1e-8
RENORMALIZE_EVERY = 256
MAX_FAILED_FRACTION = 0.10


# ---------------------------------------------------------------------------
# states and observables

def validate_density(rho, tol: float = DENSITY_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValidationError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValidationError(f"density matrix trace is {np.trace(rho).real:.12g}, not 1")
    if np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)) < -tol:
        raise ValidationError("density matrix has negative eigenvalues")
    return rho


def _bloch_density(vec) -> np.ndarray:
    x, y, z = (float(v) for v in vec)
    if x * x + y * y + z * z > 1 + 1e-12:
        raise ValidationError("Bloch vector length must be <= 1")
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


def initial_state(kind: str, n_spins: int, site: int = 0, bloch=(0.0, 0.0, 1.0),
                  density=None) -> np.ndarray:
    """Initial density matrix.

    kind: ``all_transverse_x`` (every spin in +x), ``single_qubit`` (spin
    ``site`` in the Bloch state ``bloch``, the others in +z), or
    ``given_density`` (``density`` validated and returned).
    """
    if kind == "all_transverse_x":
        one = _bloch_density((1.0, 0.0, 0.0))
        rho = np.ones((1, 1), dtype=complex)
        for _ in range(n_spins):
            rho = np.kron(rho, one)
        return rho
    if kind == "single_qubit":
        if not 0 <= site < n_spins:
            raise ValueError(f"site {site} out of range for {n_spins} spins")
        up = _bloch_density((0.0, 0.0, 1.0))
        rho = np.ones((1, 1), dtype=complex)
        for i in range(n_spins):
            rho = np.kron(rho, _bloch_density(bloch) if i == site else up)
        return rho
    if kind == "given_density":
        rho = validate_density(density)
        if rho.shape[0] != 2 ** n_spins:
            raise ValidationError(f"density has dim {rho.shape[0]}, expected {2 ** n_spins}")
        return rho
    raise ValueError(f"unknown initial state kind {kind!r}")


def fidelity(rho_ref, rho) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(ref) rho sqrt(ref)))**2``.

    For a pure reference this is ``<psi|rho|psi> = tr(ref rho)``.
    """
    rho_ref = np.asarray(rho_ref, dtype=complex)
    rho = np.asarray(rho, dtype=complex)
    if rho_ref.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {rho_ref.shape} vs {rho.shape}")
    purity = np.vdot(rho_ref, rho_ref).real
    if abs(purity - 1.0) < 1e-10:
        f = np.vdot(rho_ref, rho).real
    else:
        w, v = np.linalg.eigh(rho_ref)
        sq = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
        m = sq @ rho @ sq
        ev = np.linalg.eigvalsh((m + m.conj().T) / 2)
        f = float(np.sum(np.sqrt(np.clip(ev, 0, None)))) ** 2
    return float(min(max(f, 0.0), 1.0))


@dataclass
class ObservableSeries:
    """Stroboscopic samples at ``times`` (cycle boundaries, starting at 0)."""

    times: np.ndarray
    fidelity: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray


# ---------------------------------------------------------------------------
# propagators

class FreePropagator:
    """``exp(-i H t)`` for any ``t`` from one eigendecomposition of ``H``."""

    def __init__(self, h):
        h = np.asarray(h, dtype=complex)
        self.energies, self.vectors = np.linalg.eigh((h + h.conj().T) / 2)
        self._cache: dict = {}

    def __call__(self, t: float) -> np.ndarray:
        u = self._cache.get(t)
        if u is None:
            u = (self.vectors * np.exp(-1j * self.energies * t)) @ self.vectors.conj().T
            self._cache[t] = u
        return u


def _timeline(seq: Sequence, errors: PulseErrorModel, gap45: float):
    """Ordered ``("free", dt)`` / ``("pulse", event)`` steps of one cycle.

    Pulses sharing a nominal time are spread ``gap45 * tau`` apart about it. A
    finite-width pulse that evolves under ``H_in`` occupies its width, which
    is taken out of the neighbouring free intervals; groups at the cycle
    edges are pushed inside ``[0, t_c]``.
    """
    if gap45 < 0:
        raise ValueError("gap45 must be >= 0")
    tau, tc = seq.tau, seq.cycle_time
    gap = gap45 * tau
    width = errors.width if errors.include_internal else 0.0
    steps = []
    cursor = 0.0
    for t, group in seq.event_groups():
        m = len(group)
        span = m * width + (m - 1) * gap
        start = t * tau - span / 2
        start = min(max(start, 0.0), tc - span)
        for k, ev in enumerate(group):
            dt = start - cursor
            if dt < -1e-12 * tc:
                raise ValidationError(
                    f"pulses overlap near t = {t} tau (width {errors.width}, gap {gap45} tau)"
                )
            if dt > 0:
                steps.append(("free", dt))
            steps.append(("pulse", ev))
            cursor = max(start + width, cursor)
            start = start + width + gap
    if tc - cursor > 0:
        steps.append(("free", tc - cursor))
    return steps


def cycle_propagator(seq: Sequence, system: SpinSystem, errors: PulseErrorModel = IDEAL,
                     gap45: float = 0.0, drift_rate: float = 0.0, t0: float = 0.0,
                     _free: FreePropagator | None = None) -> np.ndarray:
    """Propagator of one cycle starting at absolute time ``t0``.

    ``gap45`` separates pulses that share a nominal time (in units of tau).

    ``drift_rate`` adds a common detuning ``drift_rate * t`` to every spin.
    Since ``H_in`` conserves total ``I_z`` the drift factor is exact: a
    diagonal phase with the integrated detuning of each free interval.
    """
    n = system.n_spins
    h = to_dense(build_internal_hamiltonian(system, exact_coeffs=False))
    free = _free or FreePropagator(h)
    iz = np.real(np.diag(to_dense(total_spin_operator("z", n)))) if drift_rate else None
    u = np.eye(2 ** n, dtype=complex)
    pulses: dict = {}
    t = t0
    for kind, item in _timeline(seq, errors, gap45):
        if kind == "free":
            step = free(item)
            if drift_rate:
                phase = drift_rate * ((t + item) ** 2 - t ** 2) / 2
                step = np.exp(-1j * phase * iz)[:, None] * step
            u = step @ u
            t += item
        else:
            p = pulses.get(item)
            if p is None:
                hp = h
                if drift_rate and errors.include_internal and errors.width:
                    hp = h + np.diag(drift_rate * (t + errors.width / 2) * iz)
                p = pulse_propagator(item, n, errors, hp)
                if not drift_rate:
                    pulses[item] = p
            u = p @ u
            if errors.include_internal:
                t += errors.width
    return u


def _observable_ops(n_spins: int):
    return [to_dense(total_spin_operator(ax, n_spins)) for ax in "xyz"]


def _check_and_repair(rho):
    herm = np.max(np.abs(rho - rho.conj().T))
    tr = abs(np.trace(rho) - 1)
    if herm > DRIFT_TOL or tr > DRIFT_TOL:
        raise NumericalDriftError(f"density drifted: hermiticity {herm:.3g}, trace {tr:.3g}")
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def stroboscopic_evolution(rho0, u_cycle, n_cycles: int, cycle_time: float = 1.0,
                           reference=None) -> ObservableSeries:
    """Apply ``u_cycle`` ``n_cycles`` times, sampling after every cycle.

    ``u_cycle`` may also be a callable ``k -> U_k`` giving the propagator of
    cycle ``k`` (used for time-dependent detunings). Fidelity is against
    ``reference`` (default ``rho0``).
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    rho = np.asarray(rho0, dtype=complex)
    ref = rho if reference is None else np.asarray(reference, dtype=complex)
    n_spins = int(round(math.log2(rho.shape[0])))
    ox, oy, oz = _observable_ops(n_spins)
    out = np.empty((5, n_cycles + 1))

    def sample(k, r):
        out[0, k] = k * cycle_time
        out[1, k] = fidelity(ref, r)
        out[2, k] = np.vdot(ox, r).real
        out[3, k] = np.vdot(oy, r).real
        out[4, k] = np.vdot(oz, r).real

    sample(0, rho)
    for k in range(1, n_cycles + 1):
        u = u_cycle(k - 1) if callable(u_cycle) else u_cycle
        rho = u @ rho @ u.conj().T
        if k % RENORMALIZE_EVERY == 0:
            rho = _check_and_repair(rho)
        sample(k, rho)
    return ObservableSeries(*out)


def evolve(system: SpinSystem, seq: Sequence, n_cycles: int, errors: PulseErrorModel = IDEAL,
           initial: str = "all_transverse_x", gap45: float = 0.0,
           drift_rate: float = 0.0, **state_kwargs) -> ObservableSeries:
    """Initial state -> cycle propagator -> stroboscopic series, in one call."""
    rho0 = initial_state(initial, system.n_spins, **state_kwargs)
    if drift_rate:
        h = to_dense(build_internal_hamiltonian(system, exact_coeffs=False))
        free = FreePropagator(h)
        tc = seq.cycle_time

        def u_of(k):
            return cycle_propagator(seq, system, errors, gap45, drift_rate, t0=k * tc, _free=free)

        return stroboscopic_evolution(rho0, u_of, n_cycles, tc)
    u = cycle_propagator(seq, system, errors, gap45)
    return stroboscopic_evolution(rho0, u, n_cycles, seq.cycle_time)


# ---------------------------------------------------------------------------
# free induction decay

def _fid_signal(system: SpinSystem):
    n = system.n_spins
    h = to_dense(build_internal_hamiltonian(system, exact_coeffs=False))
    w, v = np.linalg.eigh(h)
    psi = np.ones(1, dtype=complex)
    plus = np.array([1.0, 1.0]) / math.sqrt(2)
    for _ in range(n):
        psi = np.kron(psi, plus)
    ix = to_dense(total_spin_operator("x", n))
    c = v.conj().T @ psi
    amp = np.conj(c)[:, None] * (v.conj().T @ ix @ v) * c[None, :]
    omega = (w[:, None] - w[None, :]).ravel()
    amp = amp.ravel()
    keep = np.abs(amp) > 1e-15
    omega, amp = omega[keep], amp[keep]
    norm = float(np.sum(amp).real)

    def signal(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return (np.exp(1j * np.outer(t, omega)) @ amp).real / norm

    scale = float(np.max(np.abs(w))) if len(w) else 0.0
    return signal, scale


def fid_decay_time(system: SpinSystem, resolution: float | None = None,
                   horizon: float | None = None) -> float | None:
    """First time ``<I_x>(t) / <I_x>(0)`` drops below ``1/e`` during free evolution.

    Starts from all spins along +x; the signal is sampled every
    ``resolution`` (default ``0.01 / ||H_in||``) up to ``horizon`` (default
    ``1000 / ||H_in||``) and the crossing is refined by root bracketing.
    Returns ``None`` when there is no crossing within the horizon.
    """
    signal, scale = _fid_signal(system)
    if scale == 0.0:
        return None
    horizon = 1000.0 / scale if horizon is None else horizon
    dt = 0.01 / scale if resolution is None else resolution
    target = math.exp(-1.0)
    chunk = 2048
    t_prev, s_prev = 0.0, 1.0
    start = 0.0
    while start < horizon:
        ts = start + dt * np.arange(1, chunk + 1)
        ts = ts[ts <= horizon]
        if ts.size == 0:
            break
        s = signal(ts)
        below = np.nonzero(s < target)[0]
        if below.size:
            i = below[0]
            lo = ts[i - 1] if i > 0 else t_prev
            return float(brentq(lambda t: signal(t)[0] - target, lo, ts[i],
                                xtol=1e-15, rtol=4 * np.finfo(float).eps))
        t_prev, s_prev = ts[-1], s[-1]
        start = ts[-1]
    return None


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class EnsembleResult:
    """Per-realization series plus provenance; statistics are derived on demand."""

    sequence: str
    times: np.ndarray
    fidelity: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    mz: np.ndarray
    decay_times: np.ndarray
    failed: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_realizations(self) -> int:
        return len(self.failed)

    def _ok(self, arr):
        return arr[~self.failed]

    def mean(self, quantity: str = "fidelity") -> np.ndarray:
        return np.mean(self._ok(getattr(self, quantity)), axis=0)

    def stderr(self, quantity: str = "fidelity") -> np.ndarray:
        data = self._ok(getattr(self, quantity))
        if len(data) < 2:
            return np.zeros(data.shape[1])
        return np.std(data, axis=0, ddof=1) / math.sqrt(len(data))


def _one_realization(source, seq, errors, n_cycles, tc_over_td, initial, gap45, drift_rate,
                     state_kwargs, r):
    if isinstance(source, SpinSystem):
        system = source
    else:
        try:
            system = realize_geometry(source, r)
        except GenerationError as exc:
            return None, str(exc)
    t_d = fid_decay_time(system)
    s = seq
    if tc_over_td is not None:
        if t_d is None:
            return None, "free decay time exceeds horizon"
        s = seq.with_tau(tc_over_td * t_d / seq.cycle_multiple)
    series = evolve(system, s, n_cycles, errors, initial, gap45, drift_rate, **state_kwargs)
    return (series, t_d), None


def run_ensemble(source: GeometrySpec | SpinSystem, seq: Sequence, errors: PulseErrorModel = IDEAL,
                 n_realizations: int = 1, n_cycles: int = 1, *, tc_over_td: float | None = None,
                 initial: str = "all_transverse_x", state_kwargs: dict | None = None,
                 gap45: float = 0.0, drift_rate: float = 0.0, workers: int = 1,
                 provenance: dict | None = None) -> EnsembleResult:
    """Evolve ``n_realizations`` independent draws of ``source`` under ``seq``.

    ``source`` is a :class:`GeometrySpec` (realization ``r`` uses the stream
    derived from ``(seed, r)``) or a fixed :class:`SpinSystem`.

    With ``tc_over_td`` the delay is set per realization so that the cycle
    time is that fraction of the realization's free decay time.
    Realizations that cannot be generated are marked failed; more than 10 %
    failures raise :class:`GenerationError`.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    args = (source, seq, errors, n_cycles, tc_over_td, initial, gap45, drift_rate,
            state_kwargs or {})
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: _one_realization(*args, r), range(n_realizations)))
    else:
        results = [_one_realization(*args, r) for r in range(n_realizations)]

    n_failed = sum(1 for res, _ in results if res is None)
    if n_failed > MAX_FAILED_FRACTION * n_realizations:
        reasons = sorted({msg for _, msg in results if msg})
        raise GenerationError(f"{n_failed}/{n_realizations} realizations failed: {reasons}")

    shape = (n_realizations, n_cycles + 1)
    arrays = {k: np.full(shape, np.nan) for k in ("times", "fidelity", "mx", "my", "mz")}
    t_d = np.full(n_realizations, np.nan)
    failed = np.zeros(n_realizations, dtype=bool)
    for r, (res, _) in enumerate(results):
        if res is None:
            failed[r] = True
            continue
        series, td = res
        for k in arrays:
            arrays[k][r] = getattr(series, k)
        t_d[r] = np.inf if td is None else td
    prov = {"seed": getattr(source, "seed", None), "n_realizations": n_realizations}
    prov.update(provenance or {})
    return EnsembleResult(seq.name, decay_times=t_d, failed=failed, provenance=prov, **arrays)


__all__ = [
    "EnsembleResult",
    "FreePropagator",
    "ObservableSeries",
    "cycle_propagator",
    "evolve",
    "fid_decay_time",
    "fidelity",
    "initial_state",
    "run_ensemble",
    "stroboscopic_evolution",
    "validate_density",
]
