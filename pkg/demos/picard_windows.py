"""Frozen-coefficient Picard iteration on a quasilinear problem.

Runs ``D_t u = (1 + 4u^2) u_xx + 4 cos(5x)`` with the dynamic boundary law
``D_t u + nu u_x = 4 cos(5x)`` and prints how the window length adapts:
windows whose iterates leave the ball or contract too slowly are halved,
accepted windows are chained with the final field as the next start.
"""

from dynbc.geometry import build_interval_grid
from dynbc.quasilinear import PicardConfig, ProblemSpec, continue_in_time

grid = build_interval_grid(0.0, 1.0, 33)
spec = ProblemSpec(
    grid, T=0.8, n_steps=32,
    a={"xx": "1 + 4*u^2"}, f="4*cos(5*x)",
    b={"x": "2*x - 1"}, h="4*cos(5*x)",
)
sol, trace = continue_in_time(spec, PicardConfig(rho_max=0.2))

print(f"{'start':>8} {'tau':>8} {'iters':>5}  outcome")
for w in trace.windows:
    print(f"{w['start']:8.4f} {w['tau']:8.4f} {w['iterations']:5d}  {w['reason']}")
print(f"\nlinear solves: {trace.linear_solves}, accepted windows: {len(sol.seams) + 1}")
print(f"max |u(T)| = {abs(sol.final).max():.4f}")

# ratios of consecutive distances inside the first accepted window
first = next(i for i, w in enumerate(trace.windows) if w["converged"])
print("contraction ratios:", " ".join(f"{r:.3f}" for r in trace.ratios(first)))
