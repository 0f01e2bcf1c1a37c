"""Refinement study on the periodic strip with a tangential boundary drift.

The boundary operator ``D_t u + b_x u_x + b_y u_y`` has a genuinely
tangential part ``b_x = 0.5 + 0.25 sin x``; only ``b_y`` enters the
transversality constant.  A manufactured solution gives the error table.
"""

from dynbc.cli import run
from dynbc.config import from_preset

rep = run(from_preset("mms-converge", "strip-tangential"))
print(f"{'leg':>5} {'h':>9} {'dt':>9} {'error':>11} {'order':>6}")
for r in rep.tables["mms"]:
    lo = "" if r["local_order"] is None else f"{r['local_order']:.2f}"
    print(f"{r['study']:>5} {r['h']:9.5f} {r['dt']:9.5f} {r['error']:11.3e} {lo:>6}")
print(f"\nspatial order {rep.outputs['spatial_order']:.3f}, temporal order {rep.outputs['temporal_order']:.3f}")
