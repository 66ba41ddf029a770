"""Shared numerical kernels: quadrature, difference stencils, banded solvers.

Everything here operates on plain floats and numpy arrays; the domain
modules own the geometry.  Stencils are applied in deviation form
(differences against the center value) so that constant inputs map to
exact zeros.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import InversionFailure, QuadratureFailure

__all__ = [
    "adaptive_simpson",
    "bisect_increasing",
    "fd_weights",
    "first_derivative",
    "gradient_centered",
    "second_difference",
    "second_derivative_high_order",
    "solve_cyclic_tridiagonal",
    "solve_tridiagonal",
]


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _simpson(fa, fm, fb, h):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(fn, a, b, tol=1e-12, max_depth=48):
    """Adaptive Simpson quadrature of ``fn`` on [a, b].

    ``tol`` is an absolute tolerance per subinterval; a subinterval is
    accepted when the Richardson estimate |S2 - S1| <= 15 tol.  Raises
    QuadratureFailure if the recursion depth limit is hit.
    """
    if a == b:
        return 0.0
    fa, fb = fn(a), fn(b)
    m = 0.5 * (a + b)
    fm = fn(m)
    total = 0.0
    # explicit stack of (a, fa, m, fm, b, fb, whole, depth)
    stack = [(a, fa, m, fm, b, fb, _simpson(fa, fm, fb, b - a), 0)]
    while stack:
        a0, fa0, m0, fm0, b0, fb0, whole, depth = stack.pop()
        lm = 0.5 * (a0 + m0)
        rm = 0.5 * (m0 + b0)
        flm, frm = fn(lm), fn(rm)
        left = _simpson(fa0, flm, fm0, m0 - a0)
        right = _simpson(fm0, frm, fb0, b0 - m0)
        if not np.isfinite(left + right):
            raise QuadratureFailure(
                f"non-finite integrand on [{a0!r}, {b0!r}]")
        err = left + right - whole
        if abs(err) <= 15.0 * tol:
            total += left + right + err / 15.0
        elif depth >= max_depth:
            raise QuadratureFailure(
                f"tolerance {tol:g} not met on [{a0!r}, {b0!r}] "
                f"after depth {max_depth}")
        else:
            stack.append((a0, fa0, lm, flm, m0, fm0, left, depth + 1))
            stack.append((m0, fm0, rm, frm, b0, fb0, right, depth + 1))
    return total


def bisect_increasing(fn, lo, hi, target, xtol=1e-13, max_iter=200):
    """Root of fn(x) = target on [lo, hi] for non-decreasing fn, by bisection."""
    flo = fn(lo) - target
    fhi = fn(hi) - target
    if flo > 0.0 or fhi < 0.0:
        raise InversionFailure(
            f"target {target!r} not bracketed by [{lo!r}, {hi!r}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol:
            return mid
        fmid = fn(mid) - target
        if fmid < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# finite-difference weights (Fornberg recursion)
# ---------------------------------------------------------------------------

def fd_weights(x, x0, m):
    """Weights of the m-th derivative at ``x0`` on the nodes ``x``.

    Classic Fornberg recursion.  For m >= 1 the weights are adjusted to
    sum to zero exactly, so constants are annihilated in floating point.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < m + 1:
        raise ValueError("need at least m + 1 nodes")
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    w = c[:, m].copy()
    if m >= 1:
        k = int(np.argmax(np.abs(w)))
        w[k] -= w.sum()
    return w


def _apply_stencil_rows(values, rows, dx, power):
    """Dot each (offsets, weights) row with ``values`` in deviation form."""
    out = np.empty(len(rows))
    scale = dx ** power
    for r, (i, offsets, weights) in enumerate(rows):
        acc = 0.0
        vi = values[i]
        for off, w in zip(offsets, weights):
            acc += w * (values[i + off] - vi)
        out[r] = acc / scale
    return out


# ---------------------------------------------------------------------------
# derivative operators on uniform grids
# ---------------------------------------------------------------------------

_D1_C2 = np.array([-0.5, 0.0, 0.5])
_D1_C4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D1_FWD2 = np.array([-1.5, 2.0, -0.5])
_D2_C2 = np.array([1.0, -2.0, 1.0])
_D2_C4 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _roll_apply(values, weights, dx, power):
    """Periodic stencil application via rolls, in deviation form."""
    half = len(weights) // 2
    out = np.zeros_like(values, dtype=float)
    for k, w in enumerate(weights):
        off = k - half
        if w == 0.0:
            continue
        out += w * (np.roll(values, -off) - values)
    return out / dx ** power


def gradient_centered(values, dx, periodic=False):
    """Second-order first derivative: centered inside, one-sided at ends."""
    v = np.asarray(values, dtype=float)
    if periodic:
        return _roll_apply(v, _D1_C2, dx, 1)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    out[0] = (-1.5 * v[0] + 2.0 * v[1] - 0.5 * v[2]) / dx
    out[-1] = (1.5 * v[-1] - 2.0 * v[-2] + 0.5 * v[-3]) / dx
    return out


def first_derivative(values, dx, periodic=False):
    """Fourth-order centered first derivative, second-order near the edges.

    Non-periodic grids use a three-point one-sided formula at the two
    boundary nodes and a centered three-point formula one node in.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if periodic:
        return _roll_apply(v, _D1_C4, dx, 1)
    if n < 5:
        return gradient_centered(v, dx)
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * dx)
    out[1] = (v[2] - v[0]) / (2.0 * dx)
    out[-2] = (v[-1] - v[-3]) / (2.0 * dx)
    out[0] = (-1.5 * v[0] + 2.0 * v[1] - 0.5 * v[2]) / dx
    out[-1] = (1.5 * v[-1] - 2.0 * v[-2] + 0.5 * v[-3]) / dx
    return out


def second_difference(values, dx, periodic=False):
    """The solver's three-point second difference divided by dx^2.

    Non-periodic grids leave the two boundary nodes as NaN: the stencil
    needs both neighbors and boundary treatment belongs to the stepper.
    """
    v = np.asarray(values, dtype=float)
    if periodic:
        return _roll_apply(v, _D2_C2, dx, 2)
    out = np.full_like(v, np.nan)
    out[1:-1] = ((v[:-2] - v[1:-1]) + (v[2:] - v[1:-1])) / dx ** 2
    return out


def _one_sided_d2_rows(n, left=True, width=8):
    """Stencil rows for high-order one-sided second derivatives at an edge."""
    rows = []
    pts = np.arange(width, dtype=float)
    for i in (0, 1):
        offsets = np.arange(width) - i
        w = fd_weights(pts, float(i), 2)
        if left:
            rows.append((i, offsets, w))
        else:
            rows.append((n - 1 - i, -offsets, np.array(w)))
    return rows


def second_derivative_high_order(values, dx, periodic=False):
    """Fourth-order second derivative for curvature-grade diagnostics.

    Interior and periodic nodes use the five-point fourth-order stencil.
    Non-periodic edges fall back to eight-point one-sided stencils so the
    accuracy does not collapse where the metric decays fastest.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    if periodic:
        return _roll_apply(v, _D2_C4, dx, 2)
    if n < 8:
        raise ValueError("need at least 8 nodes for boundary stencils")
    out = np.empty_like(v)
    out[2:-2] = (
        -(v[:-4] - v[2:-2]) + 16.0 * (v[1:-3] - v[2:-2])
        + 16.0 * (v[3:-1] - v[2:-2]) - (v[4:] - v[2:-2])
    ) / (12.0 * dx ** 2)
    edge_rows = _one_sided_d2_rows(n, left=True) + _one_sided_d2_rows(n, left=False)
    edge_vals = _apply_stencil_rows(v, edge_rows, dx, 2)
    for (i, _, _), val in zip(edge_rows, edge_vals):
        out[i] = val
    return out


# ---------------------------------------------------------------------------
# tridiagonal solvers
# ---------------------------------------------------------------------------

def solve_tridiagonal(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower``/``upper`` have length n - 1."""
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs)


def solve_cyclic_tridiagonal(lower, diag, upper, rhs, corner_upper, corner_lower):
    """Solve a cyclic tridiagonal system by Sherman-Morrison.

    ``corner_upper`` is A[0, n-1], ``corner_lower`` is A[n-1, 0]; the rest
    of the matrix is the tridiagonal (lower, diag, upper).
    """
    n = diag.size
    gamma = -diag[0]
    if gamma == 0.0:
        gamma = 1.0
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= corner_upper * corner_lower / gamma
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = corner_lower
    x1 = solve_tridiagonal(lower, d, upper, rhs)
    x2 = solve_tridiagonal(lower, d, upper, u)
    # v = (1, 0, ..., 0, corner_upper / gamma)
    vx1 = x1[0] + corner_upper / gamma * x1[-1]
    vx2 = x2[0] + corner_upper / gamma * x2[-1]
    return x1 - x2 * (vx1 / (1.0 + vx2))
