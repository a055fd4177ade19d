# %% [markdown]
# # A free Gaussian packet, exactly and asymptotically
#
# A packet made of Gaussians stays a sum of Gaussians under free evolution,
# so `evaluate` is exact at every time. Here we compare it with a brute-force
# propagator sum and with the far-future form
# (i t)^(-3/2) exp(i x^2 / 2t) psi_hat(x / t).

# %%
import numpy as np

from fasflux.wavepacket import (asymptotic_form, canonical_packet, evaluate,
                                evolve_by_quadrature_oracle, norm_squared)

G2 = canonical_packet("G2")
print("components:", len(G2.components), " norm at t=0, 50:", norm_squared(G2), norm_squared(G2, 50))

# %% [markdown]
# The oracle integrates the propagator kernel against psi on a midpoint grid;
# it knows nothing about the Gaussian algebra.

# %%
for t in (0.5, 2.0, 8.0):
    x = np.array([1.0, 0.3, 4.0 * t])
    exact = evaluate(G2, x, t)
    oracle = evolve_by_quadrature_oracle(G2, x, t)
    print(f"t={t:4}: |psi|={abs(exact):.6e}  relative gap to oracle {abs(exact - oracle) / abs(exact):.1e}")

# %% [markdown]
# Along the classical ray x = t k0 the asymptotic form takes over, with a
# relative error that halves whenever t doubles.

# %%
k0 = np.array([0.0, 0.0, 4.0])
for t in (5, 10, 20, 40, 80):
    x = t * k0
    err = abs(evaluate(G2, x, t) - asymptotic_form(G2, x, t)) / abs(evaluate(G2, x, t))
    print(f"t={t:3}: relative error {err:.3e}")
