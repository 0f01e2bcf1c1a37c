"""What incompatible initial data do to the boundary time derivative.

With ``u0 = 0`` the interior equation gives ``D_t u = f(0)`` at ``t = 0``
while the boundary law gives ``D_t u = h(0)``.  When ``f(0) != h(0)`` the
boundary ``D_t u`` jumps over the first step, so its time-Hölder seminorm
grows like ``dt^(-alpha)`` under refinement.  For compatible data it
settles to a refinement-independent value.
"""

from dynbc.config import build_spec, from_preset
from dynbc.experiments import compat_necessity

spec = build_spec(from_preset("compat-necessity"))
res = compat_necessity(spec, steps=(8, 32, 128, 512))

table = res.tables["compat_necessity"]
steps = sorted({r["n_steps"] for r in table})
by = {(r["data"], r["n_steps"]): r["seminorm"] for r in table}
print(f"{'steps':>6} {'incompatible':>14} {'compatible':>12}")
for n in steps:
    print(f"{n:6d} {by['incompatible', n]:14.4f} {by['compatible', n]:12.4f}")

alpha = spec.beta / 2
print(f"\ngrowth per 4x refinement: {', '.join(f'{g:.3f}' for g in res.outputs['growth'])}")
print(f"a bounded jump allows at most 4^alpha = {4 ** alpha:.3f} with alpha = {alpha}")
