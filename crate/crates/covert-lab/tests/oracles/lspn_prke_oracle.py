# Reference values for tests/lspn.rs and tests/prke.rs.
from fractions import Fraction

# toy encoding of the subgroup of q = 65543
q = 65543
r = (q - 1) // 2
ell = r.bit_length() + 16
mult = (1 << ell) // r
print("order", r, "message bits", ell, "multipliers", mult)
print("encoding distance", float(Fraction((1 << ell) - mult * r, 1 << ell)))

# LSPN with k = 2, eta = p = 0.05, lambda = 8
eta = p = Fraction(1, 20)
tau, theta = Fraction(1, 2) - eta, Fraction(1, 2) - p
zeta = 2 * tau * theta
k = 2
print("flip prob", float(Fraction(1, 2) - Fraction(1, 2) * (2 * zeta) ** (2 * k)))
bias = Fraction(1, 2) * (4 * tau * theta) ** (2 * k + 1)
print("agreement bias", float(bias), "ell_min", float(4 * 8 / bias**2))
