"""Discrete Hölder and parabolic Hölder norms of grid functions.

Seminorms are maxima of difference quotients over node pairs.  On grids of
up to :data:`EXACT_PAIR_LIMIT` nodes every pair is scanned; larger grids use
all pairs within eight mesh widths plus pairs on a coarse stride lattice.
The scan runs over lattice offsets so that each pair's distance factor
``d**beta`` is computed once per offset with scalar ``math.pow``.

Norms follow the max convention throughout: a ``C^{m+beta}`` norm is the
maximum of the ``C^m`` norm and the ``beta``-seminorms of the order-``m``
derivatives, and a time-Hölder norm is the maximum of the sup-in-time of
the value norm and the time seminorm.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import (
    IntervalGrid,
    SpaceTimeField,
    gradient,
    second_derivatives,
    _check_same_ladder,
)

__all__ = [
    "EXACT_PAIR_LIMIT",
    "NormReport",
    "space_seminorm",
    "space_norm",
    "cm_norm",
    "time_holder_seminorm",
    "time_holder_norm",
    "parabolic_norm",
    "boundary_space_norm",
    "boundary_seminorm",
    "picard_metric",
    "interpolation_check",
    "norm_bundle",
    "time_derivative",
]

EXACT_PAIR_LIMIT = 4096
NEAR_RADIUS = 8
COARSE_POINTS = 256
SELECTORS = ("sup", "c1", "c2", "boundary")


def _check_beta(beta: float, allow_zero: bool = False) -> float:
    beta = float(beta)
    lo_ok = beta >= 0 if allow_zero else beta > 0
    if not (lo_ok and beta < 1):
        rng = "[0, 1)" if allow_zero else "(0, 1)"
        raise ValueError(f"Hölder exponent must lie in {rng}, got {beta}")
    return beta


def _stack(values, n: int) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[-1] != n:
        raise ValueError(f"field has {a.shape[-1]} entries, expected {n}")
    a = a.reshape(-1, n)
    if not np.all(np.isfinite(a)):
        raise ValueError("field contains non-finite values")
    return a


# ---------------------------------------------------------------------------
# Pair scans
# ---------------------------------------------------------------------------


def _line_offsets(n: int) -> list[int]:
    if n <= EXACT_PAIR_LIMIT:
        return list(range(1, n))
    stride = max(1, (n - 1) // COARSE_POINTS)
    near = set(range(1, NEAR_RADIUS + 1))
    return sorted(near | set(range(stride, n, stride)))


def _scan_line(F: np.ndarray, step: float, beta: float) -> float:
    """Max over pairs of a 1-D lattice with spacing ``step``; F is (k, n)."""
    n = F.shape[1]
    best = 0.0
    for k in _line_offsets(n):
        num = float(np.abs(F[:, k:] - F[:, :-k]).max())
        q = num / math.pow(k * step, beta)
        if q > best:
            best = q
    return best


def _torus_dist(di: int, dj: int, nx: int, hx: float, hy: float) -> float:
    a = min(di, nx - di) * hx
    b = dj * hy
    return math.sqrt(a * a + b * b)


def _scan_cylinder(F: np.ndarray, nx: int, ny: int, hx: float, hy: float, beta: float) -> float:
    """Max over pairs of a lattice periodic in its first axis.

    ``F`` has shape ``(k, nx * ny)`` in row-major ``(i, j)`` order.
    """
    F3 = F.reshape(F.shape[0], nx, ny)
    exact = nx * ny <= EXACT_PAIR_LIMIT
    if not exact:
        sx = max(1, nx // int(math.sqrt(COARSE_POINTS)))
        sy = max(1, (ny - 1) // int(math.sqrt(COARSE_POINTS)))
        radius = NEAR_RADIUS * max(hx, hy)
    best = 0.0
    for di in range(nx):
        shifted = np.roll(F3, -di, axis=1) if di else F3
        for dj in range(ny):
            if di == 0 and dj == 0:
                continue
            d = _torus_dist(di, dj, nx, hx, hy)
            if not exact and d > radius and (di % sx or dj % sy):
                continue
            if dj:
                diff = shifted[:, :, dj:] - F3[:, :, :-dj]
            else:
                diff = shifted - F3
            q = float(np.abs(diff).max()) / math.pow(d, beta)
            if q > best:
                best = q
    return best


def _scan(F: np.ndarray, grid, beta: float) -> float:
    if isinstance(grid, IntervalGrid):
        return _scan_line(F, grid.h, beta)
    return _scan_cylinder(F, grid.n_x, grid.n_y, grid.h_x, grid.h_y, beta)


# ---------------------------------------------------------------------------
# Space norms
# ---------------------------------------------------------------------------


def space_seminorm(field, grid, beta: float) -> float:
    """Discrete Hölder seminorm ``max |f(x)-f(y)| / |x-y|**beta``.

    Parameters
    ----------
    field : array_like
        Values on every node, shape ``(n_nodes,)``; a stack ``(k, n_nodes)``
        returns the maximum over the stack.
    grid : IntervalGrid or StripGrid
    beta : float
        Exponent in ``(0, 1)``.

    Notes
    -----
    On the strip the x-distance is the periodic geodesic one.
    """
    beta = _check_beta(beta)
    return _scan(_stack(field, grid.size), grid, beta)


def _seminorm_any(F: np.ndarray, grid, beta: float) -> float:
    # beta = 0 gives the oscillation; used by the interpolation check
    return _scan(F, grid, beta)


def _derivative_stack(F: np.ndarray, grid, order: int) -> np.ndarray:
    if order == 0:
        return F
    if order == 1:
        g = gradient(F, grid)  # (dim, k, N)
        return g.reshape(-1, grid.size)
    d2 = second_derivatives(F, grid)
    return np.concatenate([d2[p] for p in d2]).reshape(-1, grid.size)


def cm_norm(field, grid, m: int) -> float:
    """``max_{|a| <= m} sup |D^a f|`` with stencil derivatives, ``m <= 2``."""
    if m not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {m}")
    F = _stack(field, grid.size)
    return max(float(np.abs(_derivative_stack(F, grid, k)).max()) for k in range(m + 1))


def space_norm(field, grid, m: int, beta: float) -> float:
    """Hölder norm ``||f||_{C^{m+beta}}``; ``beta = 0`` gives the plain ``C^m`` norm."""
    if m not in (0, 1, 2):
        raise ValueError(f"only m in {{0, 1, 2}} is supported, got {m}")
    beta = _check_beta(beta, allow_zero=True)
    F = _stack(field, grid.size)
    base = cm_norm(F, grid, m)
    if beta == 0:
        return base
    return max(base, _scan(_derivative_stack(F, grid, m), grid, beta))


# ---------------------------------------------------------------------------
# Boundary norms
# ---------------------------------------------------------------------------


def _boundary_stack(values, grid) -> np.ndarray:
    return _stack(values, grid.boundary_index.size)


def _periodic_d1(rows: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(rows, -1, axis=-1) - np.roll(rows, 1, axis=-1)) * (0.5 / h)


def boundary_seminorm(values, grid, beta: float) -> float:
    """Hölder seminorm of a function on the discrete boundary.

    On the interval the boundary is the pair of end points at distance
    ``x_hi - x_lo``; on the strip it is the two boundary circles, with the
    periodic distance along a circle and Euclidean distance across.
    """
    beta = _check_beta(beta)
    B = _boundary_stack(values, grid)
    return _boundary_scan(B, grid, beta)


def _boundary_scan(B: np.ndarray, grid, beta: float) -> float:
    if isinstance(grid, IntervalGrid):
        return _scan_line(B, grid.x_hi - grid.x_lo, beta)
    k, nx = B.shape[0], grid.n_x
    cyl = B.reshape(k, 2, nx).transpose(0, 2, 1).reshape(k, 2 * nx)
    return _scan_cylinder(cyl, nx, 2, grid.h_x, grid.height, beta)


def boundary_space_norm(values, grid, m: int, beta: float) -> float:
    """``C^{m+beta}`` norm of a function on the discrete boundary, ``m`` in {0, 1}.

    The interval's boundary is a finite set, a zero-dimensional manifold
    without tangential directions, so every ``C^{m+beta}`` norm there
    reduces to the sup norm.  On the strip the tangential derivative is the
    periodic central difference along each boundary circle.
    """
    if m not in (0, 1):
        raise ValueError(f"boundary norms support m in {{0, 1}}, got {m}")
    beta = _check_beta(beta, allow_zero=True)
    B = _boundary_stack(values, grid)
    sup = float(np.abs(B).max())
    if isinstance(grid, IntervalGrid):
        return sup
    if m == 1:
        D = _periodic_d1(B.reshape(-1, grid.n_x), grid.h_x).reshape(B.shape)
        base = max(sup, float(np.abs(D).max()))
    else:
        D = B
        base = sup
    if beta == 0:
        return base
    return max(base, _boundary_scan(D, grid, beta))


# ---------------------------------------------------------------------------
# Time norms
# ---------------------------------------------------------------------------


def _features(values: np.ndarray, grid, selector: str) -> np.ndarray:
    """Per-level feature rows whose max-abs is the selected value norm.

    ``values`` has shape ``(L, N)``; the result has shape ``(L, n_features)``.
    Derivatives are linear, so stencils may be applied to differences.
    """
    if selector == "sup":
        return values
    if selector == "boundary":
        return values[:, grid.boundary_index]
    parts = [values]
    g = gradient(values, grid)
    parts.extend(g[i] for i in range(grid.dim))
    if selector == "c2":
        d2 = second_derivatives(values, grid)
        parts.extend(d2[p] for p in d2)
    return np.concatenate(parts, axis=1)


def _check_selector(selector: str) -> None:
    if selector not in SELECTORS:
        raise ValueError(f"value norm selector must be one of {SELECTORS}, got {selector!r}")


def time_holder_seminorm(stf: SpaceTimeField, alpha: float, selector: str = "sup") -> float:
    """Hölder seminorm in time with values in a spatial norm.

    ``max_{m<n} ||u(t_n) - u(t_m)||_sel / (t_n - t_m)**alpha`` where ``sel``
    is one of ``'sup'`` (sup over all nodes), ``'c1'``, ``'c2'`` (the
    ``C^1`` / ``C^2`` norms of the difference field) or ``'boundary'``
    (sup over boundary nodes).
    """
    alpha = float(alpha)
    if not alpha >= 0:
        raise ValueError(f"time exponent must be non-negative, got {alpha}")
    _check_selector(selector)
    if stf.n_levels < 2:
        raise ValueError("need at least two time levels")
    U = stf.values
    if not np.all(np.isfinite(U)):
        raise ValueError("field contains non-finite values")
    t = stf.times
    best = 0.0
    for k in range(1, stf.n_levels):
        diff = _features(U[k:] - U[:-k], stf.grid, selector)
        num = np.abs(diff).max(axis=1)
        gaps = t[k:] - t[:-k]
        for a, g in zip(num.tolist(), gaps.tolist()):
            q = a / math.pow(g, alpha)
            if q > best:
                best = q
    return best


def _value_norm_sup(stf: SpaceTimeField, selector: str) -> float:
    return float(np.abs(_features(stf.values, stf.grid, selector)).max())


def time_holder_norm(stf: SpaceTimeField, alpha: float, selector: str = "sup") -> float:
    """``max(sup_t ||u(t)||_sel, time seminorm)``; ``alpha = 0`` gives the sup part."""
    _check_selector(selector)
    sup = _value_norm_sup(stf, selector)
    if alpha == 0:
        return sup
    return max(sup, time_holder_seminorm(stf, alpha, selector))


def time_derivative(stf: SpaceTimeField) -> SpaceTimeField:
    """Backward difference quotient in time, placed on levels ``t_1 .. t_L``."""
    if stf.n_levels < 2:
        raise ValueError("need at least two time levels")
    dt = np.diff(stf.times)[:, None]
    return SpaceTimeField(stf.grid, stf.times[1:], np.diff(stf.values, axis=0) / dt)


def _space_part(stf: SpaceTimeField, beta: float) -> float:
    m = int(math.floor(beta))
    if m > 2:
        raise ValueError(f"space regularity must be below 3, got {beta}")
    frac = beta - m
    return space_norm(stf.values, stf.grid, m, frac)


def parabolic_norm(stf: SpaceTimeField, alpha: float, beta: float, grid=None) -> float:
    """Discrete parabolic Hölder norm ``C^{alpha, beta}`` of a space-time field.

    The maximum of the time part ``C^{alpha}(I; C)`` and the space part
    ``B(I; C^{beta})`` (sup over levels of the spatial norm).  For
    ``alpha >= 1`` the time part also controls the backward difference
    quotient ``D_t u`` in ``C^{alpha-1}(I; C)``.

    Parameters
    ----------
    alpha : float
        Time regularity in ``[0, 2)``.
    beta : float
        Space regularity in ``[0, 3)``.
    """
    if grid is not None and grid != stf.grid:
        raise ValueError("grid does not match the field's grid")
    alpha, beta = float(alpha), float(beta)
    if not 0 <= alpha < 2:
        raise ValueError(f"time regularity must lie in [0, 2), got {alpha}")
    if not 0 <= beta < 3:
        raise ValueError(f"space regularity must lie in [0, 3), got {beta}")
    if alpha < 1:
        time_part = time_holder_norm(stf, alpha, "sup")
    else:
        dtu = time_derivative(stf)
        time_part = max(_value_norm_sup(stf, "sup"), time_holder_norm(dtu, alpha - 1.0, "sup"))
    return max(time_part, _space_part(stf, beta))


# ---------------------------------------------------------------------------
# Picard metric and interpolation
# ---------------------------------------------------------------------------


def picard_metric(U: SpaceTimeField, V: SpaceTimeField, grid=None, beta: float = 0.5) -> float:
    """Distance of the Picard ball.

    ``||W||_{C^{beta/2}(I; C^1)} + ||W||_{B(I; C^{1+beta})}`` with ``W = U - V``.
    """
    _check_same_ladder(U, V)
    if grid is not None and grid != U.grid:
        raise ValueError("grid does not match the fields' grid")
    beta = _check_beta(beta)
    W = U - V
    return time_holder_norm(W, beta / 2, "c1") + space_norm(W.values, W.grid, 1, beta)


def interpolation_check(field, grid, beta0: float, beta: float, beta1: float):
    """Compare ``[f]_beta`` with ``[f]_{beta0}**(1-theta) * [f]_{beta1}**theta``.

    Returns ``(lhs, rhs, theta)`` with ``theta = (beta-beta0)/(beta1-beta0)``;
    all three seminorms are taken over the same pair set, so ``lhs <= rhs``
    up to rounding.
    """
    if not (0 <= beta0 < beta < beta1 < 1):
        raise ValueError(f"need 0 <= beta0 < beta < beta1 < 1, got ({beta0}, {beta}, {beta1})")
    F = _stack(field, grid.size)
    theta = (beta - beta0) / (beta1 - beta0)
    lhs = _seminorm_any(F, grid, beta)
    s0 = _seminorm_any(F, grid, beta0)
    s1 = _seminorm_any(F, grid, beta1)
    rhs = s0 ** (1 - theta) * s1**theta
    return lhs, rhs, theta


# ---------------------------------------------------------------------------
# Report bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormReport:
    """Discrete norms of a space-time solution.

    Attributes
    ----------
    beta : float
    sup_norm : float
        ``sup |u|`` over all levels and nodes.
    space_seminorm : float
        ``sup_t [u(t)]_beta``.
    c0, c1, c2 : float
        ``sup_t`` of the ``C^m`` norms.
    c2b : float
        ``||u||_{C^{1+beta/2, 2+beta}}``.
    time_c2 : float
        ``||u||_{C^{beta/2}(I; C^2)}``.
    time_c1 : float
        ``||u||_{C^{(1+beta)/2}(I; C^1)}``.
    boundary_dt : float
        ``||D_t u|_{boundary}||_{B(I; C^{1+beta}(boundary))}``; NaN if no
        boundary trace was supplied.
    """

    beta: float
    sup_norm: float
    space_seminorm: float
    c0: float
    c1: float
    c2: float
    c2b: float
    time_c2: float
    time_c1: float
    boundary_dt: float

    def to_record(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}


def norm_bundle(stf: SpaceTimeField, beta: float, boundary_dt=None) -> NormReport:
    """Assemble a :class:`NormReport` from the primitives above."""
    beta = _check_beta(beta)
    grid = stf.grid
    U = stf.values
    bdt = float("nan")
    if boundary_dt is not None:
        bdt = boundary_space_norm(np.asarray(boundary_dt), grid, 1, beta)
    return NormReport(
        beta=beta,
        sup_norm=float(np.abs(U).max()),
        space_seminorm=space_seminorm(U, grid, beta),
        c0=cm_norm(U, grid, 0),
        c1=cm_norm(U, grid, 1),
        c2=cm_norm(U, grid, 2),
        c2b=parabolic_norm(stf, 1 + beta / 2, 2 + beta),
        time_c2=time_holder_norm(stf, beta / 2, "c2"),
        time_c1=time_holder_norm(stf, (1 + beta) / 2, "c1"),
        boundary_dt=bdt,
    )
