"""
Mean field around the symmetric point
=====================================

Normalized so the symmetric network sits at the all-ones vector, the
expected motion is a' - a = x F(a).  Its linearization decomposes by the
distance between edges into a 3x3 matrix with explicit eigenvalues.
"""

# %%
import numpy as np

from trapping import meanfield as mf
from trapping.network import init_state

# %%
# c is a fixed point: every edge expects reinforcement 6/n.
d = mf.drift(init_state(6, 0.05, "stationary", "triad"))
print("max |drift| at c:", np.abs(d.value).max())
print("E R at c:", np.unique(np.round(d.reinforcement, 12)))

# %%
# Reduced spectrum for a few sizes.
for n in (4, 5, 10, 40):
    s = mf.spectrum(n)
    print(n, np.round(s.eigenvalues, 6), "attracting" if s.attracting else "repelling")

# %%
# Perturb one edge and group the excess reinforcement by distance.
chk = mf.linearization_excess(6, 0.01, "pairwise")
for j in (0, 1, 2):
    print(f"distance {j}: excess {chk.excess[j]: .3e}   B_j prediction {chk.predicted[j]: .3e}")

# %%
# Under the three-factor choice the Jacobian at c has an eigenvalue above 1.
J = mf.jacobian(6, "triad")
print("top eigenvalue, three-factor:", np.linalg.eigvalsh((J + J.T) / 2).max().round(4))
print("top eigenvalue, two-factor:  ", np.linalg.eigvalsh((mf.jacobian(6) + mf.jacobian(6).T) / 2).max().round(4))

# %%
# A Lyapunov certificate needs x small relative to the radius.
cert = mf.lyapunov_certificate(5, x=0.001, radius=0.1, grid_resolution=100)
print("verified:", cert.verified, " lambda:", cert.lam, " gamma:", cert.gamma)
