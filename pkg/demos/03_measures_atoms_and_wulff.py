"""
Measures, atoms and Wulff shapes
================================

A discrete measure must not sit on a closed hemisphere. Once it passes
that check it is smoothed with a von Mises kernel and used as the data f.
The last part builds the Wulff shape of a function that is not itself a
support function.
"""
import numpy as np

from mogflow import FlowConfig, ProblemTriple, ScalarField, build_grid, check_not_concentrated
from mogflow import make_power, make_support_body, mollify_measure, run, wulff_shape
from mogflow.errors import HemisphereConcentration

atoms = [([np.cos(t), np.sin(t)], 1.0) for t in (0.0, 2.0, 4.2)]
print("hemisphere margin of three spread atoms:", check_not_concentrated(atoms))
try:
    check_not_concentrated([([1.0, 0.0], 1.0), ([0.0, 1.0], 1.0)])
except HemisphereConcentration as error:
    print("rejected:", error)

grid = build_grid(1, 128)
f = mollify_measure(atoms, 2.0, grid)
triple = ProblemTriple(make_power(3), make_power(2), 1.0, f)
result = run(FlowConfig(triple, make_support_body(ScalarField(grid, np.ones(grid.size))), tol_residual=1e-3))
print(result.status, "gamma =", result.gamma, "residual =", result.residual_norm)
# support values are smallest where f is heaviest
print("u at the atom directions:", [float(result.body.u[np.argmin(np.abs(grid.angles - t))]) for t in (0.0, 2.0, 4.2)])

# 1 + 0.5 cos 2 theta has b = 1 - 1.5 cos 2 theta < 0 near theta = 0, so its Wulff shape has corners
h = ScalarField(grid, 1.0 + 0.5 * np.cos(2 * grid.angles))
shape = wulff_shape(h)
print("Wulff shape touches h at", int(np.sum(np.isclose(shape.u, h.values, atol=1e-9))), "of", grid.size, "normals")
print("largest cut below h:", float(np.max(h.values - shape.u)))
