"""Shared numerical kernels: adaptive Gauss-Kronrod quadrature on complex
segments, an embedded Dormand-Prince 4(5) stepper for complex ODEs, and
product-integration weights that integrate exp(-xi/hbar) times a piecewise
cubic exactly (uniformly accurate even when hbar is much smaller than the
lattice step).
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

# 15-point Kronrod nodes/weights on [-1, 1] with the embedded 7-point Gauss rule.
_KRONROD_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,
    0.207784955007898, 0.405845151377397, 0.586087235467691,
    0.741531185599394, 0.864864423359769, 0.949107912342759,
    0.991455371120813,
])
_KRONROD_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267,
    0.140653259715525, 0.104790010322250, 0.063092092629979,
    0.022935322010529,
])
_GAUSS_WEIGHTS = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
])
_GAUSS_IDX = np.arange(1, 15, 2)


def gauss_kronrod_segment(f: Callable[[np.ndarray], np.ndarray],
                          a: complex, b: complex) -> tuple[complex, float]:
    """One G7/K15 panel over the straight segment [a, b]; returns (I, err)."""
    mid = (a + b) / 2
    half = (b - a) / 2
    xs = mid + half * _KRONROD_NODES
    ys = np.asarray(f(xs), dtype=complex)
    ik = half * np.sum(_KRONROD_WEIGHTS * ys)
    ig = half * np.sum(_GAUSS_WEIGHTS * ys[_GAUSS_IDX])
    return ik, abs(ik - ig)


def adaptive_quadrature(f: Callable[[np.ndarray], np.ndarray],
                        a: complex, b: complex,
                        tol: float = 1e-11, max_depth: int = 40) -> complex:
    """Adaptive G7/K15 on the segment [a, b] for complex integrands.

    ``f`` must accept a numpy array of points.  Tolerance is treated as
    absolute plus relative to the accumulated value.
    """
    total, err = gauss_kronrod_segment(f, a, b)
    stack = [(a, b, total, err, 0)]
    acc = 0j
    while stack:
        xa, xb, val, e, depth = stack.pop()
        if e <= tol * max(1.0, abs(val)) or depth >= max_depth:
            acc += val
            continue
        xm = (xa + xb) / 2
        v1, e1 = gauss_kronrod_segment(f, xa, xm)
        v2, e2 = gauss_kronrod_segment(f, xm, xb)
        stack.append((xa, xm, v1, e1, depth + 1))
        stack.append((xm, xb, v2, e2, depth + 1))
    return acc


def adaptive_polyline_quadrature(f, vertices, tol: float = 1e-11) -> complex:
    total = 0j
    for a, b in zip(vertices[:-1], vertices[1:]):
        total += adaptive_quadrature(f, a, b, tol=tol)
    return total


# ---------------------------------------------------------------------------
# Dormand-Prince 4(5)
# ---------------------------------------------------------------------------

_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


class StepFailed(Exception):
    """Internal signal: the RHS refused a stage point (event territory)."""


def dp45_step(rhs, t: float, y: complex, h: float):
    """Single Dormand-Prince step; returns (y5, error_estimate)."""
    k = []
    for i in range(7):
        yi = y
        for j, aij in enumerate(_DP_A[i]):
            if aij:
                yi = yi + h * aij * k[j]
        k.append(rhs(t + _DP_C[i] * h, yi))
    y5 = y
    y4 = y
    for i in range(7):
        if _DP_B5[i]:
            y5 = y5 + h * _DP_B5[i] * k[i]
        if _DP_B4[i]:
            y4 = y4 + h * _DP_B4[i] * k[i]
    return y5, abs(y5 - y4)


def integrate_fixed_endpoint(rhs, t0: float, t1: float, y0: complex,
                             rel_tol: float = 1e-10,
                             min_step: float = 1e-14) -> complex:
    """Adaptive DP45 from t0 to exactly t1 (scalar complex state)."""
    t, y = t0, y0
    span = t1 - t0
    if span == 0:
        return y0
    h = span / 8
    direction = 1.0 if span > 0 else -1.0
    while (t1 - t) * direction > 0:
        if abs(h) > abs(t1 - t):
            h = t1 - t
        y_new, err = dp45_step(rhs, t, y, h)
        scale = rel_tol * max(1.0, abs(y), abs(y_new))
        if err <= scale:
            t += h
            y = y_new
            factor = 2.0 if err == 0 else min(2.0, 0.9 * (scale / err) ** 0.2)
            h *= factor
        else:
            h *= max(0.2, 0.9 * (scale / err) ** 0.2)
            if abs(h) < min_step:
                raise StepFailed(f"step underflow at t={t}")
    return y


# ---------------------------------------------------------------------------
# Laplace product-integration on a uniform lattice
# ---------------------------------------------------------------------------

def _panel_moments(h: float, hbar: complex) -> np.ndarray:
    """m_j = int_0^h u^j exp(-u/hbar) du for j = 0..3, stable in both regimes."""
    lam = 1.0 / hbar
    x = h * lam
    if abs(x) < 0.75:
        # series: m_j = h^{j+1} sum_l (-x)^l / (l! (j+l+1))
        out = []
        for j in range(4):
            term = 1.0 + 0j
            total = 1.0 / (j + 1) + 0j
            for l in range(1, 30):
                term *= -x / l
                contrib = term / (j + l + 1)
                total += contrib
                if abs(contrib) < 1e-18 * abs(total):
                    break
            out.append(h ** (j + 1) * total)
        return np.array(out)
    e = np.exp(-x)
    m = np.empty(4, dtype=complex)
    m[0] = (1.0 - e) / lam
    for j in range(1, 4):
        m[j] = (j * m[j - 1] - h ** j * e) / lam
    return m


def _lagrange_panel_vector(offs: np.ndarray, s_moments: np.ndarray) -> np.ndarray:
    v = np.vander(offs, 4, increasing=True)
    return np.linalg.inv(v).T @ s_moments


def laplace_lattice_weights(h: float, m_count: int, hbar: complex) -> np.ndarray:
    """Weights w_m with sum_m w_m phi(xi_m) ~= int_0^{Xi} exp(-xi/hbar) phi dxi.

    On each interval the integrand's smooth factor is the Lagrange cubic
    through the four surrounding nodes, and the exponential is integrated
    exactly, so the error is O(h^4) uniformly in hbar.
    """
    if m_count < 4:
        raise ValueError("need at least 4 lattice nodes")
    weights = np.zeros(m_count, dtype=complex)
    base = _panel_moments(h, hbar)
    s_moments = base / h ** np.arange(4)  # moments of s = u/h over one panel
    n_panels = m_count - 1
    damps = np.exp(-h / hbar) ** np.arange(n_panels)

    v_first = _lagrange_panel_vector(np.array([0.0, 1.0, 2.0, 3.0]), s_moments)
    v_mid = _lagrange_panel_vector(np.array([-1.0, 0.0, 1.0, 2.0]), s_moments)
    v_last = _lagrange_panel_vector(np.array([-2.0, -1.0, 0.0, 1.0]), s_moments)

    weights[0:4] += v_first * damps[0]
    if n_panels >= 3:
        mids = np.arange(1, n_panels - 1)
        for i in range(4):
            np.add.at(weights, mids - 1 + i, damps[mids] * v_mid[i])
    if n_panels >= 2:
        weights[m_count - 4:] += v_last * damps[-1]
    return weights


def lagrange_row(zs: np.ndarray, z: complex) -> tuple[np.ndarray, np.ndarray]:
    """Five-point Lagrange interpolation weights at (possibly complex) z.

    ``zs`` is the 1-D real lattice; returns (indices, weights).  Used to read
    grid columns at off-node (and slightly off-axis) points; holomorphy of the
    interpolated data makes the complex offset legitimate.
    """
    n = len(zs)
    if n < 5:
        raise ValueError("need at least 5 lattice nodes")
    h = zs[1] - zs[0]
    center = int(round((z.real - zs[0]) / h))
    lo = min(max(center - 2, 0), n - 5)
    idx = np.arange(lo, lo + 5)
    pts = zs[idx]
    w = np.ones(5, dtype=complex)
    for i in range(5):
        for j in range(5):
            if i != j:
                w[i] *= (z - pts[j]) / (pts[i] - pts[j])
    return idx, w


def linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line y ~ a + b x; returns (a, b, r_squared)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    sxy = np.sum((x - xm) * (y - ym))
    syy = np.sum((y - ym) ** 2)
    b = sxy / sxx
    a = ym - b * xm
    r2 = 1.0 if syy == 0 else (sxy * sxy) / (sxx * syy)
    return a, b, r2


def finite_difference_5pt(values, step: complex) -> complex:
    """First derivative from the 5-point central stencil f(x-2d..x+2d)."""
    f_m2, f_m1, _, f_p1, f_p2 = values
    return (f_m2 - 8 * f_m1 + 8 * f_p1 - f_p2) / (12 * step)


def second_difference_5pt(values, step: complex) -> complex:
    f_m2, f_m1, f_0, f_p1, f_p2 = values
    return (-f_m2 + 16 * f_m1 - 30 * f_0 + 16 * f_p1 - f_p2) / (12 * step * step)


def factorial_float(n: int) -> float:
    return float(math.factorial(n))
