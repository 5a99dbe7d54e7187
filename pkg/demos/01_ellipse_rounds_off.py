"""
An ellipse flowing to a circle
==============================

Start from the ellipse with semi-axes 1.2 and 0.9 and evolve its support
function with G = z^3 and Psi = z^2. The dual volume stays put while the
energy drops, and the body settles on the circle whose dual volume matches.
"""
import numpy as np

from mogflow import FlowConfig, ProblemTriple, build_grid, dual_volume, ellipsoid_support, make_power
from mogflow import make_support_body, run

grid = build_grid(1, 256)
start = make_support_body(ellipsoid_support(grid, [1.2, 0.9]))
triple = ProblemTriple(make_power(3), make_power(2))

result = run(FlowConfig(triple, start))
print(result.status, "after", result.steps, "steps; gamma =", result.gamma)

# the series is one row per accepted step
series = result.series
volume = series["V_G"]
print("largest relative dual-volume drift:", np.max(np.abs(volume - volume[0])) / volume[0])
print("energy went from", series["J"][0], "to", series["J"][-1])

# G = z^3 in the plane: V = int r^3 dxi, so a circle of radius R has V = 2 pi R^3
radius = (dual_volume(make_power(3), 1.0, start) / (2 * np.pi)) ** (1 / 3)
print("predicted radius", radius, "; final u ranges over", result.body.u.min(), result.body.u.max())

# a few snapshots of the widths show the ellipse losing its eccentricity
for row in np.linspace(0, len(series["t"]) - 1, 6).astype(int):
    print(f"t = {series['t'][row]:8.3f}   widths {series['w_minus'][row]:.5f} .. {series['w_plus'][row]:.5f}")
