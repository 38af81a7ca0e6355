"""
Internal Hamiltonians of dipolar-coupled spin-1/2 ensembles in the rotating
frame,

    H_in = sum_i D_i I_z^i + sum_{i<j} a_ij (3 I_z^i I_z^j - I^i . I^j),

built either from explicit detunings/couplings or from a random spin geometry.
All frequencies are angular (rad per time unit) with hbar = 1.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence as Seq

import numpy as np
import sympy

from .exceptions import GenerationError, ValidationError
from .operator_algebra import OperatorSum, exact, multiply, single_spin_operator

FIELD_AXIS_TOL = 1e-12


@dataclass(frozen=True)
class SpinSystem:
    """Detunings and a symmetric, zero-diagonal coupling matrix.

    Entries may be numbers or real sympy symbols (for exact analysis).
    ``provenance`` records where the numbers came from (geometry, seed, ...).
    """

    detunings: tuple
    couplings: tuple
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        det = tuple(self.detunings)
        n = len(det)
        if n < 1:
            raise ValidationError("a spin system needs at least one spin")
        cpl = tuple(tuple(row) for row in self.couplings) if n > 1 or len(self.couplings) else ((0,),)
        if len(cpl) != n or any(len(row) != n for row in cpl):
            raise ValidationError(f"couplings must be {n}x{n}")
        for i in range(n):
            if _nonzero(cpl[i][i]):
                raise ValidationError(f"coupling diagonal must be zero (a[{i}][{i}] = {cpl[i][i]})")
            for j in range(i + 1, n):
                if _nonzero(cpl[i][j] - cpl[j][i]):
                    raise ValidationError(f"couplings not symmetric at ({i}, {j})")
        for i, d in enumerate(det):
            if not isinstance(d, sympy.Basic) and not math.isfinite(float(d)):
                raise ValidationError(f"detuning {i} is not finite")
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "couplings", cpl)

    @property
    def n_spins(self) -> int:
        return len(self.detunings)

    @classmethod
    def pair(cls, delta1, delta2, a) -> "SpinSystem":
        return cls((delta1, delta2), ((0, a), (a, 0)))

    @classmethod
    def symbolic(cls, n_spins: int) -> "SpinSystem":
        """System with real symbols ``Delta_i`` and ``a_ij`` (1-based names)."""
        det = tuple(sympy.Symbol(f"Delta_{i + 1}", real=True) for i in range(n_spins))
        cpl = [[sympy.Integer(0)] * n_spins for _ in range(n_spins)]
        for i in range(n_spins):
            for j in range(i + 1, n_spins):
                s = sympy.Symbol(f"a_{i + 1}{j + 1}", real=True)
                cpl[i][j] = cpl[j][i] = s
        return cls(det, cpl, {"source": "symbolic"})

    def detuning_array(self) -> np.ndarray:
        return np.array([float(d) for d in self.detunings])

    def coupling_array(self) -> np.ndarray:
        return np.array([[float(c) for c in row] for row in self.couplings])

    def to_record(self) -> str:
        """Text record (JSON) of the numbers needed for exact replay."""
        return json.dumps(
            {
                "detunings": [float(d) for d in self.detunings],
                "couplings": [[float(c) for c in row] for row in self.couplings],
                "provenance": self.provenance,
            },
            sort_keys=True,
        )

    @classmethod
    def from_record(cls, text: str) -> "SpinSystem":
        rec = json.loads(text)
        return cls(tuple(rec["detunings"]), rec["couplings"], rec.get("provenance", {}))


def _nonzero(x) -> bool:
    if isinstance(x, sympy.Basic):
        return sympy.expand(x) != 0
    return float(x) != 0.0


def dipolar_coupling(r_vec, field_axis=(0.0, 0.0, 1.0), prefactor: float = 1.0,
                     angle_power: int = 2) -> float:
    """Secular dipolar constant ``prefactor * (1 - 3 cos^p theta) / r^3``.

    ``angle_power=2`` is the physical secular form. ``angle_power=1``
    reproduces the literal ``(1 - 3 cos theta)`` variant for comparison; it is
    not symmetric under ``r -> -r``.
    """
    r = np.asarray(r_vec, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist == 0.0:
        raise ValueError("dipolar_coupling needs a non-zero separation vector")
    if angle_power not in (1, 2):
        raise ValueError(f"angle_power must be 1 or 2, got {angle_power}")
    axis = np.asarray(field_axis, dtype=float)
    cos_t = float(np.dot(r, axis)) / (dist * float(np.linalg.norm(axis)))
    return prefactor * (1.0 - 3.0 * cos_t ** angle_power) / dist ** 3


def build_internal_hamiltonian(system: SpinSystem, exact_coeffs: bool = True) -> OperatorSum:
    """Symbolic ``H_in`` for ``system``.

    With ``exact_coeffs`` numeric detunings/couplings are promoted to exact
    rationals (via their decimal representation).
    """
    n = system.n_spins
    conv = exact if exact_coeffs else (lambda v: v)
    h = OperatorSum.zero(n)
    for i, d in enumerate(system.detunings):
        h = h + single_spin_operator("z", i, n) * conv(d)
    for i in range(n):
        for j in range(i + 1, n):
            a = system.couplings[i][j]
            if not _nonzero(a):
                continue
            zz = multiply(single_spin_operator("z", i, n), single_spin_operator("z", j, n))
            dot = sum(
                multiply(single_spin_operator(ax, i, n), single_spin_operator(ax, j, n))
                for ax in "xyz"
            )
            h = h + (zz * 3 - dot) * conv(a)
    return h


@dataclass(frozen=True)
class GeometrySpec:
    """Recipe for a random spin ensemble.

    ``mode`` is ``"box"`` (uniform placement in a cube of side ``size`` with a
    minimum pair separation) or ``"lattice"`` (simple cubic lattice of
    ``lattice_size**3`` sites with spacing ``size / lattice_size``, each site
    occupied with probability ``occupancy``; ``n_spins`` occupied sites are
    drawn). Detunings come from ``detunings`` if given, else from a normal
    distribution.
    """

    n_spins: int
    seed: int
    mode: str = "box"
    size: float = 2.0
    min_separation: float = 0.5
    lattice_size: int = 3
    occupancy: float = 0.5
    field_axis: tuple = (0.0, 0.0, 1.0)
    prefactor: float = 1.0
    detuning_mean: float = 0.0
    detuning_std: float = 1.0
    detunings: tuple | None = None
    angle_power: int = 2
    max_attempts: int = 1000

    def __post_init__(self):
        if self.n_spins < 1:
            raise ValidationError("n_spins must be >= 1")
        if self.mode not in ("box", "lattice"):
            raise ValidationError(f"unknown geometry mode {self.mode!r}")
        axis = np.asarray(self.field_axis, dtype=float)
        norm = float(np.linalg.norm(axis))
        if norm == 0.0:
            raise ValidationError("field_axis must be non-zero")
        object.__setattr__(self, "field_axis", tuple(float(x) for x in axis / norm))
        if self.min_separation <= 0:
            raise ValidationError("min_separation must be > 0")
        if self.angle_power not in (1, 2):
            raise ValidationError("angle_power must be 1 or 2")
        if self.detunings is not None:
            if len(self.detunings) != self.n_spins:
                raise ValidationError("explicit detunings must have n_spins entries")
            object.__setattr__(self, "detunings", tuple(float(d) for d in self.detunings))
        if self.detuning_std < 0:
            raise ValidationError("detuning_std must be >= 0")


def realization_rng(seed: int, realization: int) -> np.random.Generator:
    """Private generator stream for one realization of a seeded ensemble."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(realization)]))


def _place_box(spec: GeometrySpec, rng) -> np.ndarray:
    pts: list[np.ndarray] = []
    attempts = 0
    while len(pts) < spec.n_spins:
        attempts += 1
        if attempts > spec.max_attempts * spec.n_spins:
            raise GenerationError(
                f"could not place {spec.n_spins} spins with min separation "
                f"{spec.min_separation} in a box of side {spec.size}"
            )
        p = rng.uniform(0.0, spec.size, size=3)
        if all(np.linalg.norm(p - q) >= spec.min_separation for q in pts):
            pts.append(p)
    return np.array(pts)


def _place_lattice(spec: GeometrySpec, rng) -> np.ndarray:
    L = spec.lattice_size
    spacing = spec.size / L
    if spacing < spec.min_separation:
        raise GenerationError("lattice spacing is below min_separation")
    sites = np.array([(i, j, k) for i in range(L) for j in range(L) for k in range(L)], dtype=float)
    for _ in range(spec.max_attempts):
        occupied = sites[rng.random(len(sites)) < spec.occupancy]
        if len(occupied) >= spec.n_spins:
            pick = rng.choice(len(occupied), size=spec.n_spins, replace=False)
            return occupied[np.sort(pick)] * spacing
    raise GenerationError(
        f"lattice {L}^3 with occupancy {spec.occupancy} never held {spec.n_spins} spins"
    )


def realize_geometry(spec: GeometrySpec, realization: int = 0) -> SpinSystem:
    """Draw one spin system from ``spec``; deterministic in (seed, realization)."""
    rng = realization_rng(spec.seed, realization)
    pos = _place_box(spec, rng) if spec.mode == "box" else _place_lattice(spec, rng)
    n = spec.n_spins
    cpl = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            a = dipolar_coupling(pos[j] - pos[i], spec.field_axis, spec.prefactor, spec.angle_power)
            cpl[i][j] = cpl[j][i] = a
    if spec.detunings is not None:
        det = spec.detunings
    else:
        det = tuple(float(x) for x in rng.normal(spec.detuning_mean, spec.detuning_std, size=n))
    prov = {
        "source": f"geometry:{spec.mode}",
        "seed": int(spec.seed),
        "realization": int(realization),
        "positions": pos.tolist(),
    }
    return SpinSystem(det, cpl, prov)


def system_from_positions(positions: Seq, detunings: Seq, field_axis=(0.0, 0.0, 1.0),
                          prefactor: float = 1.0, angle_power: int = 2) -> SpinSystem:
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    cpl = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            a = dipolar_coupling(pos[j] - pos[i], field_axis, prefactor, angle_power)
            cpl[i][j] = cpl[j][i] = a
    return SpinSystem(tuple(detunings), cpl, {"source": "positions", "positions": pos.tolist()})
