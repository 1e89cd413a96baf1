"""Sublinear expectation on a lattice: moments, sublinearity, and the scenario tree.

Run:  python demos/01_sublinear_expectation.py
"""
import numpy as np

from reflected_gbsde import Lattice, VolBand, g_expectation
from reflected_gbsde.gexpect import brute_force_expectation, solve_g_heat

band = VolBand(0.5, 1.0)
lat = Lattice.for_band(band, horizon=1.0, n_steps=200)
print(f"lattice: {lat.n_steps} steps, {lat.n_nodes} nodes, dx = {lat.dx:.4f}, dt = {lat.dt:.4f}")

# Second moments pick opposite ends of the volatility band.
upper = g_expectation(lambda x: x**2, band, lat)
lower = -g_expectation(lambda x: -(x**2), band, lat)
print(f"E[B_1^2]  = {upper:.6f}   (sigma_high^2 = {band.var_high})")
print(f"-E[-B_1^2] = {lower:.6f}   (sigma_low^2  = {band.var_low})")

# Sublinearity: the expectation of a sum never exceeds the sum of expectations.
X = lambda x: np.abs(x)  # noqa: E731
Y = lambda x: -0.5 * x**2  # noqa: E731
lhs = g_expectation(lambda x: X(x) + Y(x), band, lat)
rhs = g_expectation(X, band, lat) + g_expectation(Y, band, lat)
print(f"E[X + Y] = {lhs:.6f} <= E[X] + E[Y] = {rhs:.6f}")

# The optimizer policy switches between the two variances where u_xx changes sign.
_, policy = solve_g_heat(X(lat.x) + Y(lat.x), band, lat)
share_high = np.mean(policy == band.var_high)
print(f"share of nodes using the high variance: {share_high:.2%}")

# On a tiny tree the lattice value equals the max over every volatility path.
for n in range(1, 6):
    tiny = Lattice.for_band(band, 1.0, n, coverage_factor=0.0, min_half_width=n + 1)
    engine = g_expectation(np.cos, band, tiny)
    brute = brute_force_expectation(np.cos, band, tiny)
    print(f"n = {n}: engine {engine:+.12f}  enumeration {brute:+.12f}")
