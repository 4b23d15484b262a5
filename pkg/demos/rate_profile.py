"""
Rate profile of the binary walk
===============================

The exit time of the discounted walk from the window around 1/2 grows like
exp(C/x).  C is the integral of the root of the exponential moment
function, computed here on a grid and compared to its closed form.
"""

# %%
import math

import numpy as np

from trapping import BinaryFamily, build_profile, lambda_root

fam = BinaryFamily(kappa=0.5)
prof = build_profile(fam, grid_size=512)
print(f"C = {prof.C:.12f}")
print(f"closed form = {1.5 * math.log(3) - 2 * math.log(2):.12f}")

# %%
# The root is the log odds of an up-step, so it vanishes at the centre
# and blows up at the walls.
for w in (0.05, 0.15, 0.25, 0.35, 0.45):
    print(f"w = {w:4.2f}  lambda = {lambda_root(fam, w):8.5f}  Lambda = {float(prof.biglambda(w)):8.5f}")

# %%
# Lambda is symmetric about 1/2 and decreasing on [0, 1/2].
ws = np.linspace(0.0, 0.5, 11)
print(np.round(prof.biglambda(ws), 5))
