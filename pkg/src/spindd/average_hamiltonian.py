"""
Toggling-frame Hamiltonians and the first two Magnus terms of a pulse cycle.

For delta pulses the toggled Hamiltonian ``U1^-1 H_in U1`` is piecewise
constant, so the Magnus integrals reduce to finite sums over the free
intervals:

    H0 = (1/t_c) sum_k d_k H_k
    H1 = (-i / (2 t_c)) sum_{k>j} d_k d_j [H_k, H_j]

Sequences made of quarter-turn pulses are handled symbolically (exact
coefficients stay exact); anything else is conjugated densely and decomposed
back into Pauli words.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy

from .exceptions import ValidationError
from .operator_algebra import (
    OperatorSum,
    clifford_conjugate,
    commutator,
    exact,
    expm_hermitian,
    is_hermitian_matrix,
    to_dense,
)
from .sequence import Sequence, segment_propagators


@dataclass(frozen=True)
class TogglingFrame:
    """Ordered ``(duration, toggled Hamiltonian)`` segments of one cycle."""

    segments: tuple

    @property
    def cycle_time(self):
        return sum((d for d, _ in self.segments), 0)

    @property
    def n_spins(self) -> int:
        return self.segments[0][1].n_spins

    @property
    def hamiltonians(self) -> list[OperatorSum]:
        return [h for _, h in self.segments]

    def reversed(self) -> "TogglingFrame":
        return TogglingFrame(tuple(reversed(self.segments)))


@dataclass(frozen=True)
class MagnusTerms:
    zeroth: OperatorSum
    first: OperatorSum

    @property
    def total(self) -> OperatorSum:
        return self.zeroth + self.first


def toggled_hamiltonians(seq: Sequence, h_in: OperatorSum) -> TogglingFrame:
    """Toggled internal Hamiltonian on every free interval of ``seq``.

    The closing pulse (if any) sits at ``t_c`` and contributes no interval.
    Durations are exact when ``h_in`` has exact coefficients.
    """
    exact_mode = h_in.is_exact
    tau = exact(seq.tau) if exact_mode else seq.tau
    segments = []
    if seq.is_clifford:
        for start, end, before in seq.intervals():
            h = h_in
            # U1^-1 H U1 with U1 = P_k...P_1: the latest pulse acts innermost
            for ev in reversed(seq.events[:before]):
                h = clifford_conjugate(h, ev.clifford_axis, ev.angle)
            d = (exact(end) - exact(start)) * tau if exact_mode else (end - start) * tau
            segments.append((d, h))
    else:
        h_dense = to_dense(h_in)
        for d, u1 in segment_propagators(seq, h_in.n_spins):
            segments.append((d, OperatorSum.from_dense(u1.conj().T @ h_dense @ u1, tol=1e-14)))
    return TogglingFrame(tuple(segments))


def zeroth_average(frame: TogglingFrame) -> OperatorSum:
    """Average Hamiltonian ``(1/t_c) sum_k d_k H_k``."""
    total = OperatorSum.zero(frame.n_spins)
    for d, h in frame.segments:
        total = total + h * d
    return total / frame.cycle_time


def first_magnus(frame: TogglingFrame) -> OperatorSum:
    """First Magnus correction for a piecewise-constant toggled Hamiltonian.

    Uses ``sum_{k>j} d_k d_j [H_k, H_j] = sum_k d_k [H_k, S_{k-1}]`` with the
    running sum ``S_{k-1} = sum_{j<k} d_j H_j``; the order of accumulation is
    fixed so results are reproducible bit for bit.
    """
    n = frame.n_spins
    acc = OperatorSum.zero(n)
    running = OperatorSum.zero(n)
    for d, h in frame.segments:
        if not running.is_zero():
            acc = acc + commutator(h, running) * d
        running = running + h * d
    if acc.is_zero():
        return acc
    minus_i = -sympy.I if acc.is_exact else -1j
    return acc * minus_i / (2 * frame.cycle_time)


def magnus_terms(frame: TogglingFrame) -> MagnusTerms:
    return MagnusTerms(zeroth_average(frame), first_magnus(frame))


def effective_propagator(terms: MagnusTerms | OperatorSum, cycle_time: float,
                         values=None) -> np.ndarray:
    """``exp(-i (H0 + H1) t_c)`` from truncated Magnus terms."""
    h = terms.total if isinstance(terms, MagnusTerms) else terms
    if values is not None:
        h = h.subs(values)
    m = to_dense(h)
    if not is_hermitian_matrix(m):
        raise ValidationError("Magnus terms are not Hermitian")
    return expm_hermitian(m, float(cycle_time))


def frame_propagator(frame: TogglingFrame, values=None) -> np.ndarray:
    """Exact ``U_in(t_c) = prod_k exp(-i H_k d_k)`` (later segments on the left)."""
    dim = 2 ** frame.n_spins
    u = np.eye(dim, dtype=complex)
    for d, h in frame.segments:
        if values is not None:
            h = h.subs(values)
        u = expm_hermitian(to_dense(h), float(d)) @ u
    return u


__all__ = [
    "MagnusTerms",
    "TogglingFrame",
    "effective_propagator",
    "first_magnus",
    "frame_propagator",
    "magnus_terms",
    "toggled_hamiltonians",
    "zeroth_average",
]
