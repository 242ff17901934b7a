"""Arbitrary-precision reference values frozen into the unit tests.

Run: python3 tests/oracles/reference_values.py
"""
from mpmath import mp, mpf, exp, log, erfc, sqrt, cos, pi

mp.dps = 50

# Softmax cross-entropy, batch of 3, 4 classes.
logits = [
    [0.3, -1.2, 2.5, 0.0],
    [-0.7, 0.1, 0.4, 1.9],
    [5.0, -3.0, 0.25, -0.5],
]
labels = [2, 0, 0]
total = mpf(0)
grads = []
for row, y in zip(logits, labels):
    r = [mpf(str(v)) for v in row]
    m = max(r)
    z = sum(exp(v - m) for v in r)
    total += -(r[y] - m - log(z))
    p = [exp(v - m) / z for v in r]
    grads.append([(p[k] - (1 if k == y else 0)) / len(logits) for k in range(len(r))])
print("cross_entropy loss", mp.nstr(total / len(logits), 20))
for g in grads:
    print("grad", [mp.nstr(v, 20) for v in g])

# Upper normal tail at z = 1 and a few CDF points.
for z in ["1", "-3.5", "6.25"]:
    print("Phi", z, mp.nstr(erfc(-mpf(z) / sqrt(2)) / 2, 20))
print("1-Phi(1)", mp.nstr(erfc(mpf(1) / sqrt(2)) / 2, 20))

# Cosine schedule at e = 399, E = 400.
print("cosine", mp.nstr(mpf("0.05") * (1 + cos(pi * 399 / 400)), 20))
