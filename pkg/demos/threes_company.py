"""
Three's Company on six agents
=============================

Each agent picks a trio with probability proportional to the product of
its three pair weights, and all three weights are reinforced.  Under
strong discounting the population can freeze into cliques.
"""

# %%
from collections import Counter

import numpy as np

from trapping.network import init_state, run_until_trap

# %%
# A handful of runs at strong and mild discounting.
for x in (0.4, 0.2):
    outcomes = Counter()
    for r in range(20):
        st = init_state(6, x, "unit", "triad")
        run = run_until_trap(st, 5000, 1e-4, 200, np.random.default_rng([2003, r]))
        rep = run.report
        outcomes[("trapped " if rep.trapped else "open ") + "+".join(map(str, sorted(rep.block_sizes)))] += 1
    print(f"x = {x}: {dict(outcomes)}")

# %%
# The two-factor variant (weights of the two pairs touching the agent)
# behaves differently; compare at x = 0.8.
outcomes = Counter()
for r in range(20):
    run = run_until_trap(init_state(6, 0.8, "unit", "pairwise"), 5000, 1e-4, 200, np.random.default_rng([7, r]))
    outcomes["trapped" if run.report.trapped else "open"] += 1
print(dict(outcomes))
