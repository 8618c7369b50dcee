# Reference values for harness stats: Wilson interval, binomial pmf,
# 2-bit serial test and runs test on fixed bit strings.
import math
from math import comb, sqrt, exp

Z = 1.959963984540054


def wilson(k, n, z=Z):
    p = k / n
    d = 1 + z * z / n
    c = (p + z * z / (2 * n)) / d
    h = z * sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / d
    return c - h, c + h


def serial_p(bits):
    n = len(bits)
    c2 = [0] * 4
    c1 = [0] * 2
    for i in range(n):
        a, b = bits[i], bits[(i + 1) % n]
        c2[2 * a + b] += 1
        c1[a] += 1
    psi2 = 4 / n * sum(c * c for c in c2) - n
    psi1 = 2 / n * sum(c * c for c in c1) - n
    stat = max(psi2 - psi1, 0.0)
    return exp(-stat / 2)  # chi-square survival with 2 dof


def runs_z(bits):
    n = len(bits)
    ones = sum(bits)
    zeros = n - ones
    runs = 1 + sum(bits[i] != bits[i - 1] for i in range(1, n))
    mu = 2 * ones * zeros / n + 1
    var = (mu - 1) * (mu - 2) / (n - 1)
    return (runs - mu) / sqrt(var)


bits = [int(c) for c in "1101001000111101011000101110010011010001"]
print("wilson(30,100)", *wilson(30, 100))
print("pmf(10,3,0.2)", comb(10, 3) * 0.2**3 * 0.8**7)
print("monobit", (2 * sum(bits) - len(bits)) / sqrt(len(bits)))
print("serial", serial_p(bits))
print("runs", runs_z(bits))
