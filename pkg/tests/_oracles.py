"""Independent reference implementations used by the tests.

Nothing here imports the package internals it checks; the oracles are
written from the definitions with plain loops.
"""

from __future__ import annotations

import ast
import math

import numpy as np

# ---------------------------------------------------------------------------
# expressions: Python's own parser, rewritten onto numpy ufuncs
# ---------------------------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh, "sqrt": np.sqrt}


class _ToNumpy(ast.NodeTransformer):
    def visit_Constant(self, node):
        return ast.copy_location(
            ast.Call(ast.Name("_f64", ast.Load()), [ast.Constant(float(node.value))], []), node
        )

    def visit_BinOp(self, node):
        self.generic_visit(node)
        if isinstance(node.op, ast.Pow):
            return ast.copy_location(ast.Call(ast.Name("_pow", ast.Load()), [node.left, node.right], []), node)
        return node


def py_eval(text: str, ctx: dict):
    """Evaluate expression text with Python's parser (``^`` read as ``**``)."""
    tree = ast.parse(text.replace("^", "**"), mode="eval")
    tree = ast.fix_missing_locations(_ToNumpy().visit(tree))
    env = dict(_FUNCS)
    env.update(_f64=np.float64, _pow=np.power, pi=np.float64(math.pi))
    env.update({k: np.asarray(v, dtype=float) for k, v in ctx.items()})
    with np.errstate(all="ignore"):
        return eval(compile(tree, "<oracle>", "eval"), {"__builtins__": {}}, env)


# ---------------------------------------------------------------------------
# Hölder quotients by brute force
# ---------------------------------------------------------------------------


def line_seminorm(values, h: float, beta: float) -> float:
    v = [float(a) for a in values]
    best = 0.0
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            q = abs(v[j] - v[i]) / ((j - i) * h) ** beta
            best = max(best, q)
    return best


def cylinder_seminorm(values, nx: int, ny: int, hx: float, hy: float, beta: float) -> float:
    """All pairs on an ``nx`` x ``ny`` lattice periodic in the first index."""
    v = [float(a) for a in values]
    best = 0.0
    for p in range(nx * ny):
        i1, j1 = divmod(p, ny)
        for q in range(p + 1, nx * ny):
            i2, j2 = divmod(q, ny)
            di = abs(i2 - i1)
            a = min(di, nx - di) * hx
            b = abs(j2 - j1) * hy
            d = math.sqrt(a * a + b * b)
            best = max(best, abs(v[q] - v[p]) / d**beta)
    return best


def time_seminorm(values, times, alpha: float, feature=lambda row: row) -> float:
    """``max_{m<n} max|feature(u_n - u_m)| / (t_n - t_m)^alpha`` by loops."""
    best = 0.0
    L = len(times)
    for m in range(L):
        for n in range(m + 1, L):
            num = float(np.max(np.abs(feature(values[n] - values[m]))))
            best = max(best, num / (float(times[n]) - float(times[m])) ** alpha)
    return best


# ---------------------------------------------------------------------------
# finite differences written out node by node
# ---------------------------------------------------------------------------


def d1_line(v, h: float, periodic: bool = False):
    n = len(v)
    out = np.empty(n)
    for i in range(n):
        if periodic:
            out[i] = (v[(i + 1) % n] - v[(i - 1) % n]) / (2 * h)
        elif i == 0:
            out[i] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
        elif i == n - 1:
            out[i] = (v[n - 3] - 4 * v[n - 2] + 3 * v[n - 1]) / (2 * h)
        else:
            out[i] = (v[i + 1] - v[i - 1]) / (2 * h)
    return out
