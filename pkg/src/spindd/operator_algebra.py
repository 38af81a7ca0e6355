"""
Pauli-word operator algebra with an exact (sympy) and a floating point mode,
plus the dense-matrix helpers the dynamics code is built on.

Operators on ``N`` spin-1/2 particles are written as sums of Pauli words,
strings over ``E, X, Y, Z`` (``E`` is the 2x2 identity). Spin operators use
the convention ``I_a = sigma_a / 2``.

Coefficients are either sympy objects (exact mode: rationals, or polynomials
in real symbols) or plain Python floats/complex numbers (numeric mode). Integer
and :class:`fractions.Fraction` inputs are promoted to exact rationals so that
cancellations such as a vanishing average Hamiltonian come out as an exact
zero rather than ``1e-17``.

Dense matrices use the ordering where spin 0 is the most significant tensor
factor, i.e. ``kron(op_0, op_1, ..., op_{N-1})``.
"""
from __future__ import annotations

import math
import numbers
import re
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np
import sympy

from .exceptions import UnsupportedAngleError, ValidationError

LETTERS = "EXYZ"

UNITARY_TOL = 1e-12
HERMITIAN_TOL = 1e-10

# (a, b) -> (c, k) with a*b = i**k * c
_PRODUCT = {
    ("E", "E"): ("E", 0), ("E", "X"): ("X", 0), ("E", "Y"): ("Y", 0), ("E", "Z"): ("Z", 0),
    ("X", "E"): ("X", 0), ("Y", "E"): ("Y", 0), ("Z", "E"): ("Z", 0),
    ("X", "X"): ("E", 0), ("Y", "Y"): ("E", 0), ("Z", "Z"): ("E", 0),
    ("X", "Y"): ("Z", 1), ("Y", "Z"): ("X", 1), ("Z", "X"): ("Y", 1),
    ("Y", "X"): ("Z", 3), ("Z", "Y"): ("X", 3), ("X", "Z"): ("Y", 3),
}

_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
_AXIS_LETTER = "XYZ"


# ---------------------------------------------------------------------------
# coefficients

def exact(value):
    """Return an exact sympy number for ``value``.

    Floats are read through their shortest decimal representation, so
    ``exact(0.01)`` is ``1/100`` rather than the binary approximation.
    """
    if isinstance(value, sympy.Basic):
        return value
    if isinstance(value, bool):
        return sympy.Integer(int(value))
    if isinstance(value, numbers.Rational):
        return sympy.Rational(int(value.numerator), int(value.denominator))
    if isinstance(value, numbers.Real):
        return sympy.Rational(repr(float(value)))
    if isinstance(value, numbers.Complex):
        z = complex(value)
        return exact(z.real) + sympy.I * exact(z.imag)
    raise TypeError(f"cannot convert {value!r} to an exact coefficient")


def _coerce(c):
    if isinstance(c, sympy.Basic):
        return sympy.expand(c)
    if isinstance(c, numbers.Rational) and not isinstance(c, bool):
        return sympy.Rational(int(c.numerator), int(c.denominator))
    if isinstance(c, numbers.Complex):
        z = complex(c)
        return z.real if z.imag == 0 else z
    raise TypeError(f"unsupported coefficient type {type(c).__name__}")


def _times_i_power(c, k):
    k %= 4
    if k == 0:
        return c
    if k == 2:
        return -c
    unit = sympy.I if isinstance(c, sympy.Basic) else 1j
    return c * unit if k == 1 else -c * unit


def _is_exact_coeff(c):
    return isinstance(c, sympy.Basic)


# ---------------------------------------------------------------------------
# Pauli words

def pauli_word(letters: str, n_spins: int | None = None) -> str:
    """Validate and return a Pauli word."""
    if not isinstance(letters, str) or not letters:
        raise ValueError(f"Pauli word must be a non-empty string, got {letters!r}")
    bad = set(letters) - set(LETTERS)
    if bad:
        raise ValueError(f"invalid Pauli letters {sorted(bad)} in {letters!r}")
    if n_spins is not None and len(letters) != n_spins:
        raise ValueError(f"word {letters!r} has length {len(letters)}, expected {n_spins}")
    return letters


@lru_cache(maxsize=65536)
def _word_product(a: str, b: str):
    k = 0
    out = []
    for x, y in zip(a, b):
        c, p = _PRODUCT[x, y]
        out.append(c)
        k += p
    return "".join(out), k % 4


# ---------------------------------------------------------------------------
# OperatorSum

class OperatorSum:
    """Immutable linear combination of Pauli words.

    Parameters
    ----------
    terms : mapping or iterable of (word, coefficient)
        Repeated words are summed; zero coefficients are dropped.
    n_spins : int, optional
        Required when ``terms`` is empty.
    """

    __slots__ = ("_terms", "n_spins")

    def __init__(self, terms: Mapping | Iterable = (), n_spins: int | None = None):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for word, c in items:
            pauli_word(word)
            if n_spins is None:
                n_spins = len(word)
            elif len(word) != n_spins:
                raise ValueError(f"word {word!r} does not match n_spins={n_spins}")
            acc[word] = acc[word] + c if word in acc else c
        if n_spins is None:
            raise ValueError("n_spins is required for an empty OperatorSum")
        clean = {}
        for word in sorted(acc):
            c = _coerce(acc[word])
            if c != 0:
                clean[word] = c
        self._terms = clean
        self.n_spins = int(n_spins)

    # -- constructors -------------------------------------------------------
    @classmethod
    def zero(cls, n_spins: int) -> "OperatorSum":
        return cls({}, n_spins)

    @classmethod
    def identity(cls, n_spins: int, coeff=1) -> "OperatorSum":
        return cls({"E" * n_spins: coeff})

    @classmethod
    def from_dense(cls, matrix, tol: float = 0.0) -> "OperatorSum":
        """Pauli decomposition of a dense ``2**N x 2**N`` matrix (numeric mode).

        Coefficients with magnitude ``<= tol`` are dropped. Cost grows as
        ``4**N * 2**N``, fine for the N <= 6 systems this is used on.
        """
        m = np.asarray(matrix, dtype=complex)
        dim = m.shape[0]
        n = int(round(math.log2(dim)))
        if m.shape != (dim, dim) or 2 ** n != dim:
            raise ValueError(f"expected a square 2**N matrix, got shape {m.shape}")
        cols = np.arange(dim)
        terms = {}
        for idx in range(4 ** n):
            word = "".join(LETTERS[(idx >> (2 * (n - 1 - k))) & 3] for k in range(n))
            rows, vals = _word_entries(word)
            c = np.sum(vals * m[cols, rows]) / dim
            if abs(c) > tol:
                terms[word] = complex(c)
        return cls(terms, n)

    @classmethod
    def from_text(cls, text: str, n_spins: int | None = None) -> "OperatorSum":
        """Parse the line-oriented ``coeff * WORD`` form produced by :meth:`to_text`."""
        terms = []
        for line in text.strip().splitlines():
            line = line.strip()
            if not line or line == "0":
                continue
            coeff, _, word = line.rpartition(" * ")
            if not coeff:
                raise ValueError(f"cannot parse operator line {line!r}")
            terms.append((word.strip(), _parse_coeff(coeff.strip())))
        return cls(terms, n_spins)

    # -- mapping-like access -------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, word: str):
        return self._terms.get(word, 0)

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    # -- predicates ---------------------------------------------------------
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def is_exact(self) -> bool:
        return all(_is_exact_coeff(c) for c in self._terms.values())

    @property
    def free_symbols(self) -> set:
        out = set()
        for c in self._terms.values():
            if isinstance(c, sympy.Basic):
                out |= c.free_symbols
        return out

    def is_hermitian(self, tol: float = 0.0) -> bool:
        """True when every coefficient is real (Pauli words are Hermitian)."""
        for c in self._terms.values():
            if isinstance(c, sympy.Basic):
                if sympy.expand(c - sympy.conjugate(c)) != 0:
                    return False
            elif abs(complex(c).imag) > tol:
                return False
        return True

    # -- arithmetic ---------------------------------------------------------
    def _check(self, other: "OperatorSum"):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        if other.n_spins != self.n_spins:
            raise ValueError(f"spin count mismatch: {self.n_spins} vs {other.n_spins}")
        return other

    def __add__(self, other):
        if isinstance(other, numbers.Number) and other == 0:
            return self
        if self._check(other) is NotImplemented:
            return NotImplemented
        return OperatorSum(list(self._terms.items()) + list(other._terms.items()), self.n_spins)

    def __radd__(self, other):
        # lets sum() start from 0
        if isinstance(other, numbers.Number) and other == 0:
            return self
        return NotImplemented

    def __neg__(self):
        return OperatorSum({w: -c for w, c in self._terms.items()}, self.n_spins)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __mul__(self, scalar):
        if isinstance(scalar, OperatorSum):
            return NotImplemented
        if isinstance(scalar, numbers.Rational) and not isinstance(scalar, bool):
            scalar = exact(scalar)
        return OperatorSum({w: c * scalar for w, c in self._terms.items()}, self.n_spins)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, numbers.Rational):
            return self * (1 / exact(scalar))
        return self * (1 / scalar)

    def __matmul__(self, other):
        return multiply(self, other)

    def __eq__(self, other):
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self.n_spins == other.n_spins and (self - other).is_zero()

    def __hash__(self):
        return hash((self.n_spins, tuple(self._terms.items())))

    def dagger(self) -> "OperatorSum":
        return OperatorSum(
            {w: (sympy.conjugate(c) if isinstance(c, sympy.Basic) else complex(c).conjugate())
             for w, c in self._terms.items()},
            self.n_spins,
        )

    # -- conversions --------------------------------------------------------
    def subs(self, values: Mapping) -> "OperatorSum":
        """Substitute symbol values; numeric values yield an exact/numeric sum accordingly."""
        out = {}
        for w, c in self._terms.items():
            out[w] = c.subs(values) if isinstance(c, sympy.Basic) else c
        return OperatorSum(out, self.n_spins)

    def to_numeric(self) -> "OperatorSum":
        out = {}
        for w, c in self._terms.items():
            if isinstance(c, sympy.Basic):
                if c.free_symbols:
                    raise ValueError(f"coefficient {c} still has free symbols")
                c = complex(c)
            out[w] = c
        return OperatorSum(out, self.n_spins)

    def to_text(self) -> str:
        """Serialize as one ``coeff * WORD`` line per term (``0`` if empty)."""
        if not self._terms:
            return "0"
        return "\n".join(f"{_format_coeff(c)} * {w}" for w, c in self._terms.items())

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        body = ", ".join(f"{w}: {c}" for w, c in self._terms.items())
        return f"OperatorSum({{{body}}}, n_spins={self.n_spins})"


def _format_real(c) -> str:
    if isinstance(c, sympy.Rational):
        s = str(c)
    else:
        s = repr(float(c))
    return s if s.startswith("-") else "+" + s


def _format_coeff(c) -> str:
    if isinstance(c, sympy.Basic):
        if c.free_symbols or not (c.is_Rational or _is_gaussian_rational(c)):
            if c.could_extract_minus_sign():
                return f"-({-c})"
            return f"+({c})"
        re_, im_ = c.as_real_imag()
        if im_ == 0:
            return _format_real(re_)
        if re_ == 0:
            return f"{_format_real(im_)} i"
        sign = "-" if im_ < 0 else "+"
        return f"{_format_real(re_)} {sign} {abs(im_)} i"
    z = complex(c)
    if z.imag == 0:
        return _format_real(z.real)
    if z.real == 0:
        return f"{_format_real(z.imag)} i"
    sign = "-" if z.imag < 0 else "+"
    return f"{_format_real(z.real)} {sign} {abs(z.imag)!r} i"


def _is_gaussian_rational(c) -> bool:
    re_, im_ = c.as_real_imag()
    return bool(re_.is_Rational and im_.is_Rational)


_NUM = r"[0-9][0-9./eE+-]*"
_COMPLEX_RE = re.compile(rf"^([+-]{_NUM})(?: ([+-]) ({_NUM}) i)?$")
_IMAG_RE = re.compile(rf"^([+-]{_NUM}) i$")


def _parse_real(s: str):
    if any(ch in s for ch in ".eE") and "/" not in s:
        return float(s)
    return sympy.Rational(s)


def _parse_coeff(s: str):
    if s[:2] in ("+(", "-("):
        val = sympy.sympify(s[1:], locals=_real_symbol_locals(s))
        return -val if s[0] == "-" else val
    m = _IMAG_RE.match(s)
    if m:
        return _times_i_power(_parse_real(m.group(1)), 1)
    m = _COMPLEX_RE.match(s)
    if not m:
        raise ValueError(f"cannot parse coefficient {s!r}")
    re_ = _parse_real(m.group(1))
    if m.group(2) is None:
        return re_
    im_ = _parse_real(m.group(3))
    if m.group(2) == "-":
        im_ = -im_
    return re_ + _times_i_power(im_, 1)


def _real_symbol_locals(s: str) -> dict:
    names = set(re.findall(r"[A-Za-z_][A-Za-z_0-9]*", s)) - {"I", "sqrt", "pi"}
    return {n: sympy.Symbol(n, real=True) for n in names}


# ---------------------------------------------------------------------------
# algebra

def single_spin_operator(axis: str, site: int, n_spins: int) -> OperatorSum:
    """Return ``I_axis`` acting on ``site`` as an exact OperatorSum."""
    axis = axis.lower()
    if axis not in _AXIS_INDEX:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    if not 0 <= site < n_spins:
        raise ValueError(f"site {site} out of range for {n_spins} spins")
    word = ["E"] * n_spins
    word[site] = axis.upper()
    return OperatorSum({"".join(word): sympy.Rational(1, 2)})


def total_spin_operator(axis: str, n_spins: int) -> OperatorSum:
    """``sum_i I_axis^i``."""
    return sum(single_spin_operator(axis, i, n_spins) for i in range(n_spins))


def multiply(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    if a.n_spins != b.n_spins:
        raise ValueError(f"spin count mismatch: {a.n_spins} vs {b.n_spins}")
    out = []
    for wa, ca in a.items():
        for wb, cb in b.items():
            w, k = _word_product(wa, wb)
            out.append((w, _times_i_power(ca * cb, k)))
    return OperatorSum(out, a.n_spins)


def commutator(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    """``[A, B] = AB - BA``.

    Only anticommuting word pairs contribute, each with ``2 * ca * cb * P``.
    """
    if a.n_spins != b.n_spins:
        raise ValueError(f"spin count mismatch: {a.n_spins} vs {b.n_spins}")
    out = []
    for wa, ca in a.items():
        for wb, cb in b.items():
            w, k = _word_product(wa, wb)
            if k % 2:  # anticommuting pair
                out.append((w, 2 * _times_i_power(ca * cb, k)))
    return OperatorSum(out, a.n_spins)


def _parse_axis(axis: str) -> tuple[int, int]:
    """'-y' -> (1, -1)."""
    a = axis.strip().lower()
    sign = 1
    if a[:1] in "+-":
        sign = -1 if a[0] == "-" else 1
        a = a[1:]
    if a not in _AXIS_INDEX:
        raise ValueError(f"axis must be one of ±x, ±y, ±z; got {axis!r}")
    return _AXIS_INDEX[a], sign


def quarter_turns(angle: float, tol: float = 1e-12) -> int:
    """Number of quarter turns in ``angle``; raises if it is not a multiple of pi/2."""
    if isinstance(angle, sympy.Basic):
        q = angle / (sympy.pi / 2)
        if not q.is_integer:
            raise UnsupportedAngleError(f"angle {angle} is not a multiple of pi/2")
        return int(q)
    q = float(angle) / (math.pi / 2)
    k = round(q)
    if abs(q - k) > tol:
        raise UnsupportedAngleError(
            f"angle {angle!r} is not a multiple of pi/2; use the dense backend"
        )
    return int(k)


@lru_cache(maxsize=None)
def _clifford_letter_map(axis_index: int, k: int) -> dict:
    """Letter map for ``U^dag sigma U`` with ``U = exp(-i k (pi/2) sigma_n / 2)``.

    For a perpendicular to n: ``cos(theta) sigma_a + sin(theta) (a x n).sigma``.
    """
    k %= 4
    out = {"E": (1, "E")}
    for a in range(3):
        letter = _AXIS_LETTER[a]
        if a == axis_index or k == 0:
            out[letter] = (1, letter)
            continue
        if k == 2:
            out[letter] = (-1, letter)
            continue
        # a x n for unit vectors: +c if (a, n, c) is cyclic, else -c
        c = 3 - a - axis_index
        cross_sign = 1 if (a, axis_index, c) in ((0, 1, 2), (1, 2, 0), (2, 0, 1)) else -1
        out[letter] = (cross_sign if k == 1 else -cross_sign, _AXIS_LETTER[c])
    return out


def clifford_conjugate(a: OperatorSum, axis: str, angle) -> OperatorSum:
    """Exact ``U^-1 A U`` for ``U = exp(-i * angle * I_axis,total)``.

    ``axis`` is one of ``x, y, z`` with an optional sign; ``angle`` must be an
    integer multiple of pi/2, otherwise :class:`UnsupportedAngleError`.
    """
    idx, sign = _parse_axis(axis)
    k = sign * quarter_turns(angle)
    if k % 4 == 0:
        return a
    table = _clifford_letter_map(idx, k % 4)
    out = {}
    for word, c in a.items():
        s = 1
        letters = []
        for ch in word:
            sg, new = table[ch]
            s *= sg
            letters.append(new)
        out["".join(letters)] = c if s == 1 else -c
    return OperatorSum(out, a.n_spins)


# ---------------------------------------------------------------------------
# dense backend

@lru_cache(maxsize=4096)
def _word_entries(word: str):
    """Nonzero structure of a Pauli word: ``P[rows[c], c] = vals[c]``."""
    n = len(word)
    xmask = zmask = 0
    n_y = 0
    for k, ch in enumerate(word):
        bit = 1 << (n - 1 - k)
        if ch in "XY":
            xmask |= bit
        if ch in "ZY":
            zmask |= bit
        n_y += ch == "Y"
    cols = np.arange(2 ** n)
    parity = np.zeros(2 ** n, dtype=np.int64)
    masked = cols & zmask
    while np.any(masked):
        parity ^= masked & 1
        masked = masked >> 1
    # sigma_y = i sigma_x sigma_z on each site
    vals = (1j ** n_y) * np.where(parity, -1.0, 1.0)
    rows = cols ^ xmask
    rows.flags.writeable = False
    vals.flags.writeable = False
    return rows, vals


def to_dense(a: OperatorSum, values: Mapping | None = None) -> np.ndarray:
    """Expand to a ``2**N x 2**N`` complex matrix (spin 0 most significant)."""
    if values is not None:
        a = a.subs(values)
    dim = 2 ** a.n_spins
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for word, c in a.items():
        if isinstance(c, sympy.Basic):
            if c.free_symbols:
                raise ValueError(f"symbolic coefficient {c}; pass values= to substitute")
            c = complex(c)
        rows, vals = _word_entries(word)
        out[rows, cols] += c * vals
    return out


def is_hermitian_matrix(h, tol: float = HERMITIAN_TOL) -> bool:
    h = np.asarray(h)
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    return bool(np.max(np.abs(h - h.conj().T), initial=0.0) <= tol * scale)


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0) <= tol)


def expm_hermitian(h, t: float = 1.0) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H`` via eigendecomposition."""
    if isinstance(h, OperatorSum):
        h = to_dense(h)
    h = np.asarray(h, dtype=complex)
    if not is_hermitian_matrix(h):
        raise ValidationError("expm_hermitian requires a Hermitian matrix")
    if t == 0:
        return np.eye(h.shape[0], dtype=complex)
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def operator_norm(a) -> float:
    """Spectral norm (largest singular value)."""
    if isinstance(a, OperatorSum):
        a = to_dense(a)
    return float(np.linalg.norm(np.asarray(a), 2))


def frobenius_distance_mod_phase(u, v) -> float:
    """``min_phi ||U - exp(i phi) V||_F``.

    The optimal phase is ``arg tr(V^dag U)``; the difference is then formed
    explicitly to avoid cancellation for nearly equal operators.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    overlap = np.vdot(v, u)
    phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
    return float(np.linalg.norm(u - phase * v))


def commutator_dense(a, b) -> np.ndarray:
    return a @ b - b @ a


__all__ = [
    "LETTERS",
    "OperatorSum",
    "clifford_conjugate",
    "commutator",
    "commutator_dense",
    "exact",
    "expm_hermitian",
    "frobenius_distance_mod_phase",
    "is_hermitian_matrix",
    "is_unitary",
    "multiply",
    "operator_norm",
    "pauli_word",
    "quarter_turns",
    "single_spin_operator",
    "to_dense",
    "total_spin_operator",
]
