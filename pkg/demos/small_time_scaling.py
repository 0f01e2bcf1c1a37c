"""Small-time behaviour of the linear problem with zero initial data.

For compatible data of Hölder regularity ``beta`` the sup norm of the
solution grows linearly in the horizon and the time-Hölder norm of the
gradient grows like ``T^(1/2)``.  The script prints the norms on a ladder
of horizons and the fitted log-log slopes.
"""

from dynbc.config import build_spec, from_preset
from dynbc.experiments import scaling

spec = build_spec(from_preset("scaling"))
res = scaling(spec, horizons=(0.01, 0.02, 0.04, 0.08, 0.16))

for row in res.tables["scaling_norms"]:
    print(row)
print()
for row in res.tables["scaling"]:
    print(f"{row['estimate']:>9}: slope {row['slope']:.3f} (predicted exponent {row['predicted_exponent']})")
