# %% [markdown]
# # Simulated dynamics
#
# Event-driven paths, the relaxation rate of an occupation, two-colour paths
# and the ordered coupling of two complete-graph processes.

# %%
import math

import numpy as np

from zrp.dynamics import (coupled_order_sim, colour_projection_error, estimate_decay,
                          observable_series, occupation, simulate)
from zrp.lattice import segment
from zrp.model import preset, verify_conditions

# %%
tr = simulate(preset("staircase", 5), segment(5), 6, T=20.0, seed=1, sample_dt=0.5)
print(tr.summary())

# %% [markdown]
# `Var[P_t f]` decays like `exp(-2 gap t)`; for two sites and linear rates
# the gap is 1.

# %%
est = estimate_decay(preset("linear", 2), segment(2), 2, occupation(0), replicas=400, seed=1)
print(f"rate {est.lambda_hat:.3f} +- {est.stderr:.3f} (exact 2)")

# %% [markdown]
# Painting particles does not change the colour-blind path.

# %%
init = ([2, 0, 1], [0, 1, 1])
two = simulate(preset("staircase", 3), segment(3), T=5.0, seed=9, topology="two-colour",
               initial_colours=init)
one = simulate(preset("staircase", 3), segment(3), T=5.0, seed=9, initial=np.add(*init))
print("identical colour-blind paths:", np.array_equal(two.samples, one.samples))
print("generator projection error:", colour_projection_error(preset("staircase", 1)[0],
                                                             segment(2), 2, 1))
print(observable_series([two], occupation(0))[:3])

# %% [markdown]
# Adding enough particles keeps the coupled pair ordered.

# %%
rf = preset("staircase", 3)
M = math.ceil(verify_conditions(rf).B * 3)
res = [coupled_order_sim(rf, 3, M, seed=s, n_events=1000) for s in range(20)]
print("M =", M, " all ordered:", all(x.order_preserved for x in res))
print("small M:", [coupled_order_sim(rf, 3, 1, seed=s, n_events=2000).order_preserved
                   for s in range(10)])
