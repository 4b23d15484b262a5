"""
Exit times, an exact oracle and a tilted estimator
==================================================

Three views of the same quantity: plain Monte Carlo, the linear solve on
the induced lattice chain, and the exit probability per excursion under
an exponentially tilted step law.
"""

# %%
from trapping import BinaryFamily, build_profile
from trapping.walk import Walk1DConfig, exact_exit_oracle, importance_exit, lattice_chain, mc_exit, naive_excursions

fam = BinaryFamily(0.5)

# %%
# A tiny chain first: x = 1/4 with the window edge at 1/4 leaves three
# interior states, so the exact mean exit time is a 3x3 solve.
cfg = Walk1DConfig.create(fam, 0.25, a_x=0.25)
chain = lattice_chain(cfg)
exact = exact_exit_oracle(chain)[chain.start]
mc = mc_exit(cfg, n_runs=20_000, master_seed=3)
print(f"oracle {exact:.4f}   MC {mc.mean_T:.4f} +- {mc.se_T:.4f}")

# %%
# Mean exit time grows quickly as x shrinks.
for x in (1 / 4, 1 / 6, 1 / 8, 1 / 10):
    s = mc_exit(Walk1DConfig.create(fam, x), n_runs=500, master_seed=7)
    print(f"x = {x:.4f}  E T = {s.mean_T:8.2f} +- {s.se_T:.2f}")

# %%
# Excursions away from 1/2 rarely reach the wall.  Tilting each step by
# the rate potential pushes them outward; the likelihood ratio undoes the
# bias.
prof = build_profile(fam)
cfg = Walk1DConfig.create(fam, 1 / 8)
naive = naive_excursions(cfg, n_runs=4000, master_seed=11)
tilted = importance_exit(cfg, prof, delta=0.2, n_runs=400, master_seed=12)
for s in (naive, tilted):
    print(f"{s.estimator:12s} p = {s.p_exit:.4f} +- {s.se:.4f}  steps = {s.total_steps}  rse*sqrt(steps) = {s.work_normalized_rse:.2f}")
