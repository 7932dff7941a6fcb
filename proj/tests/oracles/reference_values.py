"""Independent reference values frozen into the C++ tests.

Run: python3 tests/oracles/reference_values.py
"""
import itertools
import math

import numpy as np


def softmax_masked(logits, mask):
    z = np.where(mask, logits, -np.inf)
    e = np.exp(z - z[mask].max())
    return e / e.sum()


def gelu(x):
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def skewness(psi):
    psi = np.asarray(psi, dtype=float)
    d = psi - psi.mean()
    var = (d ** 2).mean()
    return 0.0 if var == 0 else (d ** 3).mean() / var ** 1.5


def eligibility(m, k, theta):
    g, c = m.shape
    knn = np.zeros_like(m, dtype=bool)
    for j in range(g):
        order = sorted(range(c), key=lambda i: (1 - m[j, i], i))
        knn[j, order[:k]] = True
    lam = np.ones_like(m, dtype=bool)
    if g > 1:
        for j in range(g):
            for i in range(c):
                den = max(1 - m[j, i], 1e-12)
                r = min((1 - m[q, i]) / den for q in range(g) if q != j)
                lam[j, i] = r > theta
    return knn & lam & (m > 0)


def bruteforce(m, elig, rho):
    g, c = m.shape
    best, best_a = None, None
    for bits in itertools.product([0, 1], repeat=g * c):
        a = np.array(bits).reshape(g, c)
        if (a & ~elig).any() or (a.sum(axis=1) > rho).any():
            continue
        obj = float((a * m).sum())
        if best is None or obj > best:
            best, best_a = obj, a
    return best, best_a


if __name__ == "__main__":
    print("softmax [1,2,3] mask [T,F,T]:", softmax_masked(np.array([1.0, 2, 3]), np.array([True, False, True])))
    print("gelu(1):", repr(gelu(1.0)))
    print("ln(664):", repr(math.log(664)))
    print("skew [0,0,10]:", repr(skewness([0, 0, 10])))
    print("cosine (1,1)/(1,0):", repr(1 / math.sqrt(2)))
    m = np.array([[0.9, 0.2, 0.5], [0.1, 0.8, 0.4]])
    for k, theta in [(2, 0.5), (2, 0.9)]:
        print(f"eligible K={k} theta={theta}:\n", eligibility(m, k, theta).astype(int))
    e = eligibility(m, 2, 0.5)
    for rho in (2, 1):
        obj, a = bruteforce(m, e, rho)
        print(f"bruteforce rho={rho}: objective {obj!r}\n", a)
    w = np.array([0.42, 0.48, 0.50, 0.50])
    print("clap weights:", [round(x, 5) for x in w / w.sum()])
    # P(no position selected) for N_w = 4, p = 0.15 bounds the per-position rate.
    print("masking rate upper bound:", 0.15 + 0.85 ** 4 / 4)
