"""
Delta-pulse sequences as timed rotation events, and their control propagators.

A pulse with azimuth ``phi`` and nominal angle ``theta`` is the rotation
``exp(-i theta (cos(phi) I_x + sin(phi) I_y))`` of the total spin, so
``phi = 0, pi/2, pi, 3pi/2`` are the ``+x, +y, -x, -y`` phases. Event times
are stored as multiples of the delay ``tau``; several pulses may share a time
and are then applied in order of ``ordinal``.

The control propagator on an interval is the ordered product of all pulses
applied so far, latest on the left: ``U1 = P_k ... P_2 P_1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import groupby

import numpy as np

from .exceptions import UnsupportedAngleError, ValidationError
from .operator_algebra import (
    OperatorSum,
    expm_hermitian,
    quarter_turns,
    to_dense,
    total_spin_operator,
)

HALF_PI = math.pi / 2

X, Y, MX, MY = 0.0, HALF_PI, math.pi, 3 * HALF_PI
_PHASE_NAMES = {0: "x", 1: "y", 2: "-x", 3: "-y"}


@dataclass(frozen=True)
class PulseEvent:
    """One delta pulse. ``time`` is in units of tau."""

    time: float
    azimuth: float
    angle: float
    ordinal: int = 0

    @property
    def clifford_axis(self) -> str:
        """``'x'``, ``'y'``, ``'-x'`` or ``'-y'``; raises for other azimuths."""
        return _PHASE_NAMES[quarter_turns(self.azimuth) % 4]

    @property
    def is_clifford(self) -> bool:
        try:
            quarter_turns(self.azimuth)
            quarter_turns(self.angle)
        except UnsupportedAngleError:
            return False
        return True

    @property
    def label(self) -> str:
        try:
            ang = {1: "pi/2", 2: "pi", 3: "3pi/2"}.get(quarter_turns(self.angle) % 4, repr(self.angle))
            return f"({ang})_{self.clifford_axis}"
        except UnsupportedAngleError:
            return f"({self.angle:.6g})_phi={self.azimuth:.6g}"


@dataclass(frozen=True)
class PulseErrorModel:
    """Pulse imperfections.

    flip_error: fractional flip-angle error, ``theta -> theta (1 + flip_error)``
    phase_error: azimuth offset in radians
    width: pulse duration ``t_p`` (0 = ideal delta pulse)
    include_internal: evolve under ``H_in`` during finite-width pulses
    """

    flip_error: float = 0.0
    phase_error: float = 0.0
    width: float = 0.0
    include_internal: bool = False

    def __post_init__(self):
        if self.width < 0:
            raise ValidationError("pulse width must be >= 0")

    @property
    def is_ideal(self) -> bool:
        return self.flip_error == 0 and self.phase_error == 0 and self.width == 0


IDEAL = PulseErrorModel()


@dataclass(frozen=True)
class Sequence:
    """A periodic pulse cycle of length ``cycle_multiple * tau``."""

    name: str
    tau: float
    cycle_multiple: float
    events: tuple = ()
    includes_closing_pulse: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.cycle_multiple > 0:
            raise ValueError("cycle_multiple must be > 0")
        events = tuple(sorted(self.events, key=lambda e: (e.time, e.ordinal)))
        for e in events:
            if not 0 <= e.time <= self.cycle_multiple:
                raise ValidationError(f"pulse time {e.time} outside [0, {self.cycle_multiple}]")
        for t, grp in groupby(events, key=lambda e: e.time):
            ords = [e.ordinal for e in grp]
            if len(set(ords)) != len(ords):
                raise ValidationError(f"pulses at time {t} need distinct ordinals")
        object.__setattr__(self, "events", events)

    @property
    def cycle_time(self) -> float:
        return self.cycle_multiple * self.tau

    @property
    def n_pulses(self) -> int:
        return len(self.events)

    @property
    def is_clifford(self) -> bool:
        return all(e.is_clifford for e in self.events)

    def with_tau(self, tau: float) -> "Sequence":
        return replace(self, tau=tau)

    def event_groups(self) -> list[tuple[float, list[PulseEvent]]]:
        return [(t, list(g)) for t, g in groupby(self.events, key=lambda e: e.time)]

    def intervals(self) -> list[tuple[float, float, int]]:
        """Free-evolution intervals ``(start, end, n_pulses_before)`` in units of tau."""
        bounds = sorted({0, self.cycle_multiple, *(e.time for e in self.events)})
        out = []
        for start, end in zip(bounds[:-1], bounds[1:]):
            before = sum(1 for e in self.events if e.time <= start)
            out.append((start, end, before))
        return out


def _require_tau(tau):
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")


def proposed_sequence(tau: float, closing_pulse: bool = True) -> Sequence:
    """The six-interval cycle (t_c = 6 tau) with its closing pi_{-x} pulse.

    Pulses 4 and 5 share the time 4 tau; the closing pulse at 6 tau makes the
    control propagator over one cycle proportional to the identity.
    """
    _require_tau(tau)
    events = [
        PulseEvent(1, X, HALF_PI),
        PulseEvent(2, MY, HALF_PI),
        PulseEvent(3, Y, math.pi),
        PulseEvent(4, MY, HALF_PI, ordinal=0),
        PulseEvent(4, MX, math.pi, ordinal=1),
        PulseEvent(5, MX, HALF_PI),
    ]
    if closing_pulse:
        events.append(PulseEvent(6, MX, math.pi))
    return Sequence("proposed", tau, 6, tuple(events), includes_closing_pulse=closing_pulse)


def cpmg_sequence(tau: float) -> Sequence:
    """tau - pi_y - 2tau - pi_y - tau."""
    _require_tau(tau)
    return Sequence("cpmg", tau, 4, (PulseEvent(1, Y, math.pi), PulseEvent(3, Y, math.pi)))


def wahuha_sequence(tau: float) -> Sequence:
    """tau - (pi/2)_x - tau - (pi/2)_-y - 2tau - (pi/2)_y - tau - (pi/2)_-x - tau."""
    _require_tau(tau)
    return Sequence("wahuha", tau, 6, (
        PulseEvent(1, X, HALF_PI),
        PulseEvent(2, MY, HALF_PI),
        PulseEvent(4, Y, HALF_PI),
        PulseEvent(5, MX, HALF_PI),
    ))


def mrev8_sequence(tau: float) -> Sequence:
    """Two WAHUHA halves, x phases inverted in the second (t_c = 12 tau)."""
    _require_tau(tau)
    return Sequence("mrev8", tau, 12, (
        PulseEvent(1, X, HALF_PI),
        PulseEvent(2, MY, HALF_PI),
        PulseEvent(4, Y, HALF_PI),
        PulseEvent(5, MX, HALF_PI),
        PulseEvent(7, MX, HALF_PI),
        PulseEvent(8, MY, HALF_PI),
        PulseEvent(10, Y, HALF_PI),
        PulseEvent(11, X, HALF_PI),
    ))


def free_evolution(duration: float) -> Sequence:
    """No pulses; one 'cycle' lasts ``duration``."""
    if not duration > 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    return Sequence("free", duration, 1, ())


def custom_sequence(tau: float, cycle_multiple: float, pulses, name: str = "custom",
                    closing_pulse: bool = False) -> Sequence:
    """Build a sequence from ``(time_multiple, azimuth, angle)`` triples.

    Pulses sharing a time get ordinals in the order given.
    """
    _require_tau(tau)
    events = []
    seen: dict = {}
    for time, azimuth, angle in pulses:
        k = seen.get(time, 0)
        seen[time] = k + 1
        events.append(PulseEvent(time, float(azimuth), float(angle), ordinal=k))
    return Sequence(name, tau, cycle_multiple, tuple(events), includes_closing_pulse=closing_pulse)


SEQUENCES = {
    "proposed": proposed_sequence,
    "cpmg": cpmg_sequence,
    "wahuha": wahuha_sequence,
    "mrev8": mrev8_sequence,
    "free": free_evolution,
}


def build_sequence(name: str, tau: float, **kwargs) -> Sequence:
    try:
        builder = SEQUENCES[name]
    except KeyError:
        raise ValueError(f"unknown sequence {name!r}; choose from {sorted(SEQUENCES)}") from None
    return builder(tau, **kwargs)


# ---------------------------------------------------------------------------
# propagators

def pulse_generator(event: PulseEvent, n_spins: int, errors: PulseErrorModel = IDEAL) -> OperatorSum:
    """``theta_eff (cos(phi_eff) I_x + sin(phi_eff) I_y)`` as a numeric OperatorSum."""
    theta = event.angle * (1.0 + errors.flip_error)
    phi = event.azimuth + errors.phase_error
    return (total_spin_operator("x", n_spins) * (theta * math.cos(phi))
            + total_spin_operator("y", n_spins) * (theta * math.sin(phi)))


def _single_rotation(theta: float, phi: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    off = -1j * s * complex(math.cos(phi), -math.sin(phi))
    return np.array([[c, off], [-1j * s * complex(math.cos(phi), math.sin(phi)), c]])


def pulse_propagator(event: PulseEvent, n_spins: int, errors: PulseErrorModel = IDEAL,
                     h_in=None) -> np.ndarray:
    """Dense propagator of one pulse under the given error model.

    Delta pulses are a product of identical single-spin rotations. Finite
    width pulses exponentiate ``omega_1 * axis + H_in`` over ``width`` when
    ``errors.include_internal`` is set (``h_in`` is then required).
    """
    theta = event.angle * (1.0 + errors.flip_error)
    phi = event.azimuth + errors.phase_error
    if errors.width == 0 or not errors.include_internal:
        r = _single_rotation(theta, phi)
        u = np.ones((1, 1), dtype=complex)
        for _ in range(n_spins):
            u = np.kron(u, r)
        return u
    if h_in is None:
        raise ValueError("finite-width pulses with include_internal need h_in")
    gen = to_dense(pulse_generator(event, n_spins, errors)) / errors.width
    h = h_in if isinstance(h_in, np.ndarray) else to_dense(h_in)
    return expm_hermitian(gen + h, errors.width)


def segment_propagators(seq: Sequence, n_spins: int) -> list[tuple[float, np.ndarray]]:
    """``(duration, U1)`` for each free interval, ideal pulses."""
    out = []
    u1 = np.eye(2 ** n_spins, dtype=complex)
    applied = 0
    for start, end, before in seq.intervals():
        for e in seq.events[applied:before]:
            u1 = pulse_propagator(e, n_spins) @ u1
        applied = before
        out.append(((end - start) * seq.tau, u1.copy()))
    return out


def control_propagator(seq: Sequence, n_spins: int) -> np.ndarray:
    """``U1(t_c)``: all ideal pulses of one cycle, in order."""
    u1 = np.eye(2 ** n_spins, dtype=complex)
    for e in seq.events:
        u1 = pulse_propagator(e, n_spins) @ u1
    return u1


__all__ = [
    "IDEAL",
    "PulseErrorModel",
    "PulseEvent",
    "SEQUENCES",
    "Sequence",
    "build_sequence",
    "control_propagator",
    "cpmg_sequence",
    "custom_sequence",
    "free_evolution",
    "mrev8_sequence",
    "proposed_sequence",
    "pulse_generator",
    "pulse_propagator",
    "segment_propagators",
    "wahuha_sequence",
]
