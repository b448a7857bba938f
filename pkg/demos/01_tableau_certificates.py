"""Build Gauss-Legendre tableaus and certify their A-stability.

The stability function S(z) = 1 + z b^T (id - z alpha)^{-1} 1 of a Gauss
method is the diagonal Pade approximant of exp, so |S| = 1 on the imaginary
axis and |S| < 1 inside the left half-plane.
"""

import numpy as np

from spectralrk import (gauss_legendre, stability_function, verify_a_stability,
                        verify_order_conditions)

for s in (1, 2, 3):
    tab = gauss_legendre(s)
    print(f"--- Gauss-Legendre s={s} (classical order {tab.p}) ---")
    print("nodes c:", tab.c)
    print("weights b:", tab.b)

    order = verify_order_conditions(tab, min(tab.p, 8))
    print(f"order conditions through {order.order}: max residual {order.max_residual:.2e}")
    beyond = verify_order_conditions(tab, min(tab.p + 1, 8))
    if beyond.order > tab.p:
        print(f"  (order {tab.p + 1} fails, as it must: residual {beyond.max_residual:.2e})")

    report = verify_a_stability(tab)
    print(report.summary())

    # sample |S| along the axis: unit modulus everywhere
    for y in (0.1, 10.0, 1e4):
        print(f"  |S({y}i)| - 1 = {abs(stability_function(tab, 1j * y)) - 1.0:+.2e}")
    print()

print("--- explicit Euler for contrast ---")
from spectralrk import ButcherTableau

euler = ButcherTableau(np.array([[0.0]]), np.array([1.0]), np.array([0.0]), p=1)
print(verify_a_stability(euler).summary())
print("S(-3) =", stability_function(euler, -3.0), " (|1 + z| = 2 > 1: not A-stable)")
