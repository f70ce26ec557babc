# %% [markdown]
# # Local limit theorems for the total particle count
#
# Under a product measure with fugacity `phi` the total count is a sum of
# independent, non-identical variables. Its exact law comes from convolving
# the site marginals, which we compare with Edgeworth and Poisson
# approximations.

# %%
import numpy as np

from zrp.llt import edgeworth, error_table, llt_normal, poisson_sup_error, sum_distribution
from zrp.model import moments, preset

# %%
rf = preset("staircase", 32)
phi = 1.0
mu = 32 * moments(rf, phi).rho_bar
for r in np.arange(int(mu) - 8, int(mu) + 9, 4):
    out = {J: llt_normal(rf, int(r), J, phi) for J in (2, 3, 4)}
    print(f"r={r:3d} z={out[2]['z']:+.2f} exact={out[2]['exact']:.6f} "
          + " ".join(f"J={J}:{o['abs_err']:.1e}" for J, o in out.items()))

# %% [markdown]
# The correction terms integrate to zero.

# %%
ex = edgeworth(rf, phi, 4)
print([round(ex.integral(j), 12) for j in (1, 2)])

# %% [markdown]
# Uniform error against `N`, with fitted log-log slopes per order.

# %%
table = error_table("staircase", [16, 32, 64, 128], [2, 3, 4])
for N, J, err in table["rows"]:
    print(N, J, f"{err:.3e}")
print("slopes:", {J: round(s, 3) for J, s in table["slopes"].items()})

# %% [markdown]
# A fixed number of particles spread over a growing box: the count is close
# to Poisson with error of order `1/N`.

# %%
for N in (20, 40, 80, 160):
    print(N, f"N * sup error = {N * poisson_sup_error(preset('staircase', N), 3):.4f}",
          f"(linear rates: {poisson_sup_error(preset('linear', N), 3):.1e})")
print("mass kept by truncation:", sum_distribution(preset("staircase", 160), 3 / 160).pmf.sum())
