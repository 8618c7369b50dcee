"""Reference values for tests/signaling.rs.

Majority: closed-form random-walk expectation. Optimal: exact dynamic
program over posterior values with rational arithmetic.
"""
from fractions import Fraction as F
from math import comb, exp, log, sqrt


def sigma(u):
    return 1 / (1 + exp(-u))


def majority_error(n, beta):
    return sum(comb(n, k) / 2**n * sigma(-beta * abs(2 * k - n)) for k in range(n + 1))


def biases(w, p):
    if w >= F(1, 2):
        return (F(1, 2) - (1 - w) * p) / w, p
    return p, (F(1, 2) - w * p) / (1 - w)


def optimal_dp(n, p):
    # state: w -> (P+ mass, P- mass) of received prefixes reaching it
    states = {F(1, 2): (F(1), F(1))}
    bhat_terms = None
    for _ in range(n):
        nxt = {}
        for w, (a, b) in states.items():
            qp, qm = biases(w, p)
            for y in (1, -1):
                fp, fm = (qp, qm) if y > 0 else (1 - qp, 1 - qm)
                w2 = 2 * w * qp if y > 0 else 2 * w * (1 - qp)
                x, z = nxt.get(w2, (F(0), F(0)))
                nxt[w2] = (x + a * fp, z + b * fm)
        states = nxt
    # receiver decodes +1 iff w >= 1/2; error averaged over the two objectives
    err = sum((b if w >= F(1, 2) else a) for w, (a, b) in states.items()) / 2
    return err, len(states)


def lam(p):
    return (sqrt(p) + sqrt(1 - p)) / sqrt(2)


if __name__ == "__main__":
    b = 0.5 * log(0.8 / 0.2)
    for n in (1, 5, 101, 401):
        print(f"majority_error(n={n}, p=0.2) = {majority_error(n, b)!r}")
    print("ratio 101/401 =", majority_error(101, b) / majority_error(401, b))
    print("lambda(0.1) =", repr(lam(0.1)), " bound n=40:", repr(0.5 * lam(0.1) ** 40))
    for n in (1, 2, 8, 40):
        err, states = optimal_dp(n, F(1, 10))
        print(f"optimal_error(n={n}, p=1/10) = {float(err)!r} ({states} posterior states)")
