"""Brute-force reference values for tests/bundle.rs.

Enumerates candidate tuples, index choices and extractor seeds with exact
rational arithmetic; shares no code with the crate.
"""
from fractions import Fraction as F
from itertools import product


def ext(a, b, x):
    return (bin(a & x).count("1") & 1) ^ b


def crossover(bundle, w):
    total = F(0)
    for a in range(1 << w):
        n = [0, 0]
        for x in bundle:
            n[ext(a, 0, x)] += 1
        total += F(abs(n[0] - n[1]), 2 * len(bundle))
    return total / (1 << w)


def conditional_law(canon, probs, L, a, b, mask, bit):
    beta = bit ^ mask
    law = [F(0)] * len(canon)
    for tup in product(range(len(canon)), repeat=L):
        p = F(1)
        for j in tup:
            p *= probs[j]
        labels = [ext(a, b, canon[j]) for j in tup]
        idx = [[i for i in range(L) if labels[i] == c] for c in (0, 1)]
        m = min(len(idx[0]), len(idx[1]))
        star = idx[0][m:] + idx[1][m:]
        lab = idx[beta][:m]
        for i in star:
            law[tup[i]] += p * F(1, L)
        for i in lab:
            law[tup[i]] += p * F(2, L)
    return law


if __name__ == "__main__":
    print("crossover([1,2,3,3,5,6], w=3) =", crossover([1, 2, 3, 3, 5, 6], 3))
    print("crossover([0,0,0,0], w=3) =", crossover([0, 0, 0, 0], 3))
    print("crossover([1,2], w=2) =", crossover([1, 2], 2))
    canon, probs = [1, 2, 3], [F(1, 2), F(1, 3), F(1, 6)]
    for bit in (0, 1):
        law = conditional_law(canon, probs, 3, 3, 1, 0, bit)
        print(f"law(bit={bit}) =", [str(x) for x in law], "decode-correct mass",
              sum(law[j] for j in range(3) if ext(3, 1, canon[j]) == bit))
