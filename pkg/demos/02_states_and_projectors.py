"""Scale norms, spectral projectors, and the exact semigroup.

The projector P_m keeps eigenvalue moduli up to m; the remainder obeys the
tail estimate ||Q_m u|| <= m^{-l} ||u||_{Y_l}, which is what converts data
smoothness into spatial convergence order.
"""

import numpy as np

from spectralrk import (apply_A, apply_semigroup, cubic_nls, make_initial_data,
                        project, remainder, scale_norm, wave_problem)

nls = cubic_nls()
u = make_initial_data(nls, "algebraic_decay", 128, seed=1, r=4.0)

print("scale norms of algebraic-decay data (r = 4, finite Y_1 = H^3 only):")
for ell in range(4):
    print(f"  ||u||_Y{ell} = {scale_norm(u, ell):.6g}")

print("\ntail estimate ||Q_m u|| vs m^-l ||u||_Y_l:")
for m in (16.0, 256.0, 4096.0):
    q = scale_norm(remainder(u, m), 0)
    print(f"  m = {m:6.0f}: ||Q_m u|| = {q:.3e}", end="")
    for ell in (1, 2):
        print(f"   bound(l={ell}) = {m ** -ell * scale_norm(u, ell):.3e}", end="")
    print()

print("\nsemigroup is an isometry on every Y_l (purely imaginary spectrum):")
v = apply_semigroup(u, 3.7)
for ell in (0, 2):
    print(f"  | ||e^(tA)u||_Y{ell} - ||u||_Y{ell} | = "
          f"{abs(scale_norm(v, ell) - scale_norm(u, ell)):.2e}")

print("\nA maps Y_(l+1) into Y_l with norm at most one:")
au = apply_A(u)
for ell in (0, 1):
    print(f"  ||Au||_Y{ell} = {scale_norm(au, ell):.6g} <= ||u||_Y{ell + 1} = "
          f"{scale_norm(u, ell + 1):.6g}")

print("\nthe wave equation stores 2x2 normal blocks; the zero mode sits in the")
print("P-part with A acting as zero there:")
wave = wave_problem([])
w = make_initial_data(wave, "single_mode", 8, k=0)
print("  ||A u_0|| =", scale_norm(apply_A(w), 0))
