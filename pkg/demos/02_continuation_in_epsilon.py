"""
Regularized flow with epsilon continuation
==========================================

When psi is too weak near zero the flow is run with a regularized psi_hat
that agrees with psi above 2 epsilon. Each stage warm-starts from the last
one while epsilon halves.
"""
import numpy as np

from mogflow import FlowConfig, ProblemTriple, build_grid, default_schedule, ellipsoid_support
from mogflow import make_power, make_support_body, regularize, run

grid = build_grid(1, 256)
start = make_support_body(ellipsoid_support(grid, [1.2, 0.9]))
triple = ProblemTriple(make_power(2), make_power(3))

config = FlowConfig(triple, start, mode="regularized")
print("schedule:", np.round(default_schedule(config), 5))
result = run(config)

# min u stays far above 2 eps here, so psi_hat = psi on the body and later stages barely move
for k, stage in enumerate(result.stages):
    print(f"stage {k}: eps = {stage.epsilon:.4g}  {stage.status:9s} steps = {stage.steps:6d}  min u = {stage.body.u.min():.5f}")
print("gaps between stage solutions:", result.gaps)
print("widths inside", result.width_bracket, ":", result.widths_ok)

# psi_hat splices G_z s^(1 + eps) in below eps and blends up to 2 eps
psi_hat = regularize(triple.Psi, triple.G, 0.1)
s = np.array([0.01, 0.05, 0.1, 0.15, 0.2, 0.5])
print("s       ", s)
print("psi     ", triple.psi.eval(s))
print("psi_hat ", psi_hat(s))
