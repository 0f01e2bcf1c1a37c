"""Named problem presets.

Each preset is a flat dictionary of problem and solver settings in the same
vocabulary as the configuration file, so a config can name a preset and
override individual keys.
"""

from __future__ import annotations

import math

__all__ = ["PRESETS", "preset"]

# |x - 1/2|^(1/2): data of exactly the Hölder regularity the small-time
# estimates assume, with f = h so the data are compatible for u0 = 0
_ROUGH = "sqrt(sqrt((x - 0.5)^2))"

PRESETS: dict[str, dict[str, object]] = {
    "heat-dynbc": {
        "geometry": "interval",
        "x_lo": 0.0,
        "x_hi": 1.0,
        "n_nodes": 65,
        "a_xx": "1",
        "b_x": "2*x - 1",
        "f": _ROUGH,
        "h": _ROUGH,
        "u0": "0",
        "T": 0.16,
        "beta": 0.5,
        "n_steps": 64,
        "exact": "(1 + t)*sin(2*x + 1)",
        "exact_time": "exp(-t)*(1 + x^2/2)",
    },
    "quasilinear-1+u2": {
        "geometry": "interval",
        "x_lo": 0.0,
        "x_hi": 1.0,
        "n_nodes": 65,
        "a_xx": "1 + u^2",
        "b_x": "2*x - 1",
        "f": "0",
        "h": "0",
        "u0": "0",
        "T": 0.16,
        "beta": 0.5,
        "n_steps": 128,
        "exact": "(1 + t)*sin(2*x + 1)",
        "exact_time": "exp(-t)*(1 + x^2/2)",
    },
    "strip-tangential": {
        "geometry": "strip",
        "period": 2 * math.pi,
        "n_x": 64,
        "n_y": 33,
        "height": 1.0,
        "a_xx": "1",
        "a_xy": "0.2",
        "a_yy": "1",
        # tangential drift along the boundary circles plus the normal part
        "b_x": "0.5 + 0.25*sin(x)",
        "b_y": "2*y - 1",
        "f": "0",
        "h": "0",
        "u0": "0",
        "T": 0.2,
        "beta": 0.5,
        "n_steps": 32,
        "exact": "(1 + t)*sin(x)*cos(2*y + 1)",
        "exact_time": "exp(-t)*(1 + y^2/2)",
    },
}


def preset(name: str) -> dict[str, object]:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
