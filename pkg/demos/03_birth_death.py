# %% [markdown]
# # Birth-death reductions
#
# Split a box in two halves and look at the number of particles in the first
# half. Its law drives several one-dimensional chains.

# %%
import numpy as np
from scipy.stats import binom

from zrp.bdchain import (check_bdspecgap_conditions, conditional_difference_check, gamma1,
                         halves, metropolis_chain, miclo_check, modified_measure,
                         single_site_chain, two_site_sweep)
from zrp.lattice import segment
from zrp.model import canonical, preset

# %%
rf = preset("staircase", 4)
ens = canonical(rf, 8, segment(4))
law = gamma1(ens, halves(4))
print("law of R1:", np.round(law.gamma1, 4))
chain = metropolis_chain(law)
print("Metropolis gap:", chain.gap(), " balance error:", chain.balance_error())

# %% [markdown]
# Single-site chain: death at the site rate, birth at the mean rate of the
# neighbours given the rest of the box.

# %%
ch = single_site_chain(ens, 1)
print(ch.summary())
print(check_bdspecgap_conditions(ch, J0=2.0))

# %% [markdown]
# Gaussian-envelope conditions on binomial laws and on the reweighted law.

# %%
for r in (8, 16, 32):
    print(r, miclo_check(binom.pmf(np.arange(r + 1), r, 0.5))["A0_min"])
big = gamma1(canonical(preset("linear", 2), 20, segment(2)), halves(2))
mm = modified_measure(big, preset("linear", 2), 0.2)
print("reweighted law:", miclo_check(mm)["A0_min"], "equivalence:", mm.equivalence_bounds())

# %% [markdown]
# The difference of conditional means when one particle crosses the cut is an
# exact finite sum; both sides agree to round-off.

# %%
f = np.random.default_rng(0).normal(size=len(ens))
for r1 in (1, 4, 8):
    print(r1, conditional_difference_check(ens, halves(4), f, r1))

# %% [markdown]
# Two sites: the log-Sobolev constant stays flat in `r`.

# %%
print(np.round(two_site_sweep(preset("staircase", 2), range(1, 13), restarts=4)["logsob"], 4))
