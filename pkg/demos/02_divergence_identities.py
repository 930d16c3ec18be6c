"""
Title: Why predicting omega behaves like a divergence
Description: Numerical checks of the identities behind the generator's self-supervised loss.
"""
"""
## The AHM divergence

For two discrete distributions p and q the arithmetic-minus-harmonic
mean divergence is `sum q (q - p) / (p + q)`. It lies in [0, 1]. It
also equals `1 - W(p, q)`, where W is the harmonic overlap
`sum 2pq / (p + q)`.
"""

import numpy as np

from augself import divergences as dv

p = np.array([0.5, 0.5])
q = np.array([0.25, 0.75])
print("AHM(p || q) =", dv.ahm(p, q))
print("1 - W(p, q) =", 1 - dv.harmonic_w(p, q))

"""
Adding the divergence in both directions gives the Le Cam distance.
"""

print("AHM(p||q) + AHM(q||p) =", dv.ahm(p, q) + dv.ahm(q, p), " Le Cam =", dv.lecam(p, q))

"""
## The optimal self-supervised head

Suppose real samples are labelled `+c` and generated ones `-c`. The best
head in the least-squares sense predicts `c (p - q) / (p + q)` in every
cell. If the generator's loss is evaluated against that head, it
collapses to `4 |c|^2 AHM(p || q)`.
"""

worked = dv.thm1_check(p, q, [1.0])
print(f"loss at optimal head {worked['lhs']:.12f}  vs  4 AHM {worked['rhs']:.12f}")

rng = np.random.default_rng(1)
worst = 0.0
for _ in range(500):
    n = rng.integers(2, 12)
    a, b = rng.random(n), rng.random(n)
    c = rng.normal(size=rng.integers(1, 4))
    worst = max(worst, dv.thm1_check(a / a.sum(), b / b.sum(), c)["residual"])
print("largest residual over 500 random instances:", worst)

"""
## Learning the head instead of solving for it

A lookup-table head trained by gradient descent on the exact expected
loss ends up at the same values as the closed-form solution.
"""

jd = dv.random_joint(rng, (4, 3, 4))
jg = dv.DiscreteJoint(dv.random_joint(rng, (4, 3, 4)).table, jd.omega_values)
gap = dv.trained_dhat_agreement(dv.TabularProblem(jd, jg))
print("sup-norm gap between trained and optimal head:", gap)

"""
## Comparing with the usual divergences
"""

for kind in dv.KINDS:
    print(f"{kind:>4}: {dv.f_div(p, q, kind):.6f}")
