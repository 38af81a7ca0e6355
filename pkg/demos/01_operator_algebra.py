"""
Pauli-word operators, exact and numeric
=======================================

Operators are sums of Pauli words with spin operators I = sigma / 2.
Coefficients stay exact (rationals or sympy expressions) until you ask
for a dense matrix.
"""
import numpy as np
import sympy

from spindd import commutator, multiply, single_spin_operator, to_dense, total_spin_operator
from spindd.operator_algebra import OperatorSum, clifford_conjugate

# single-spin operators on a two-spin register
ix = single_spin_operator("x", 0, 2)
iy = single_spin_operator("y", 0, 2)
print("I_x^1 =", ix.to_text())

# [I_x, I_y] = i I_z, kept exact
print("[I_x, I_y] =", commutator(ix, iy).to_text())

# products collapse through the Pauli table; I_x I_x = 1/4 on the identity word
print("I_x I_x =", multiply(ix, ix).to_text())

# symbolic coefficients flow through unchanged
a = sympy.Symbol("a", real=True)
zz = multiply(single_spin_operator("z", 0, 2), single_spin_operator("z", 1, 2)) * a
print("a I_z^1 I_z^2 =", zz.to_text())

# a pi/2 rotation about x sends I_z to I_y on every spin (conjugation U^-1 A U)
jz = total_spin_operator("z", 2)
print("pi/2_x conjugation of I_z:", clifford_conjugate(jz, "x", sympy.pi / 2).to_text().replace("\n", "  "))

# dense matrices only on request, and the text form round-trips
m = to_dense(zz, {a: 0.5})
print("dense a=0.5 diagonal:", np.real(np.diag(m)))
print("round trip equal:", OperatorSum.from_text(zz.to_text()) == zz)
