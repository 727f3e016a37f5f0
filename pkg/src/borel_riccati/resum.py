"""Laplace resummation: the Laplace transform along a ray, the analytic Borel
transform by contour quadrature, assembly of canonical exact solutions from a
Borel grid, Gevrey remainder reports, the theta-sweep consistency check, and
the integration-by-parts identity check.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .borel import BorelGrid, standardize, successive_approx
from .errors import (
    ContourDivergence,
    HypothesisFailed,
    OutsideBorelDisc,
    PointOffGrid,
)
from .field import FieldElem
from .formal import (
    FormalSolution,
    RiccatiEquation,
    formal_solve,
    hypothesis_check,
    _sign_value,
)
from .geometry import HalfStrip, LiouvilleFrame, liouville_map, probe_halfstrip
from .numerics import (
    adaptive_quadrature,
    finite_difference_5pt,
    gauss_kronrod_segment,
    lagrange_row,
    laplace_lattice_weights,
    linear_fit,
)

BOREL_DISC_MARGIN = 0.5


# ---------------------------------------------------------------------------
# Laplace transform
# ---------------------------------------------------------------------------

class XiPolynomial:
    """Polynomial in xi; its Laplace transform is evaluated exactly."""

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=complex)

    @staticmethod
    def monomial(k: int):
        """xi^k / k!, the formal Borel transform of hbar^{k+1}."""
        c = np.zeros(k + 1, dtype=complex)
        c[k] = 1.0 / math.factorial(k)
        return XiPolynomial(c)

    def __call__(self, xi):
        acc = np.zeros_like(np.asarray(xi, dtype=complex))
        for c in self.coeffs[::-1]:
            acc = acc * xi + c
        return acc

    def laplace_exact(self, hbar: complex) -> complex:
        total = 0j
        for r, c in enumerate(self.coeffs):
            total += c * math.factorial(r) * hbar ** (r + 1)
        return total


@dataclass
class LaplaceResult:
    value: complex
    truncation_tail_bound: float
    hbar: complex
    theta: float

    def accepted(self, tol: float) -> bool:
        return self.truncation_tail_bound < tol


def laplace(phi, hbar: complex, theta: float = 0.0, xi_max: float = 12.0,
            growth: tuple[float, float] = (1.0, 0.0), h: float | None = None,
            quad_tol: float = 1e-12) -> LaplaceResult:
    """L_theta[phi](hbar) = integral over e^{i theta} R_+ of phi e^{-xi/hbar}.

    ``phi`` may be a :class:`XiPolynomial` (exact identity, no truncation), a
    callable on complex xi (adaptive quadrature over [0, xi_max] plus a tail
    bound from the (A, K) growth envelope), or a sampled lattice column (pass
    the shared step ``h``; product-integration weights are used).
    """
    sigma = (cmath.exp(1j * theta) / hbar).real
    if isinstance(phi, XiPolynomial):
        if sigma <= 0:
            raise OutsideBorelDisc(f"Re(e^{{i theta}}/hbar) = {sigma} <= 0")
        return LaplaceResult(phi.laplace_exact(hbar), 0.0, hbar, theta)

    a_fit, k_fit = growth
    if sigma <= k_fit + BOREL_DISC_MARGIN:
        raise OutsideBorelDisc(
            f"Re(e^{{i theta}}/hbar) = {sigma:.4g} <= K + margin = "
            f"{k_fit + BOREL_DISC_MARGIN:.4g}")
    tail = a_fit * math.exp((k_fit - sigma) * xi_max) / (sigma - k_fit)

    rot = cmath.exp(1j * theta)
    if callable(phi):
        value = rot * adaptive_quadrature(
            lambda s: np.asarray(phi(rot * s), dtype=complex) * np.exp(-rot * s / hbar),
            0.0, xi_max, tol=quad_tol)
        return LaplaceResult(value, tail, hbar, theta)

    col = np.asarray(phi, dtype=complex)
    if h is None:
        raise ValueError("lattice columns need the shared step h")
    w = laplace_lattice_weights(h, len(col), hbar / rot)
    value = rot * np.sum(w * col)
    return LaplaceResult(value, tail, hbar, theta)


# ---------------------------------------------------------------------------
# Analytic Borel transform (contour quadrature)
# ---------------------------------------------------------------------------

def _contour_panels(mu: float, delta: float, t_max: float) -> np.ndarray:
    edges = [0.0]
    while edges[-1] < t_max:
        step = min(max(0.5 * delta, 0.35 * edges[-1]),
                   math.pi / (2 * mu) if mu > 0 else math.inf, t_max - edges[-1])
        edges.append(edges[-1] + max(step, 1e-3 * delta))
    return np.array(edges)


def _fd_derivatives(g, s0: float, step: float):
    """g, g', g'' at s0 from a 7-point stencil."""
    offs = np.arange(-3, 4) * step
    vals = np.asarray(g(s0 + offs), dtype=complex)
    d1 = (-vals[0] + 9 * vals[1] - 45 * vals[2] + 45 * vals[4]
          - 9 * vals[5] + vals[6]) / (60 * step)
    d2 = (2 * vals[0] - 27 * vals[1] + 270 * vals[2] - 490 * vals[3]
          + 270 * vals[4] - 27 * vals[5] + 2 * vals[6]) / (180 * step ** 2)
    return vals[3], d1, d2


def analytic_borel(f, xi: np.ndarray, theta: float = 0.0, diameter: float = 1.0,
                   t_mu: float = 400.0, conv_tol: float = 1e-5) -> np.ndarray:
    """Borel transform along the boundary of a Borel disc of the given diameter.

    The contour is hbar(s) = e^{i theta} (delta' - i s)^{-1} with delta' =
    1/diameter, traversed anticlockwise with symmetric truncation |s| <= T.
    The non-decaying oscillatory endpoint contributions (the finite-part
    content of the principal value) are removed by three integrations by
    parts, and the result is checked for Cauchy convergence between T/2 and
    T; values at xi = 0 are filled by quadratic extrapolation.

    ``f`` must accept numpy arrays of hbar values.
    """
    xi = np.asarray(xi, dtype=float)
    delta = 1.0 / diameter
    rot = cmath.exp(1j * theta)
    out = np.zeros(len(xi), dtype=complex)

    def g_of(s: np.ndarray) -> np.ndarray:
        hbars = rot / (delta - 1j * np.asarray(s))
        return np.asarray(f(hbars), dtype=complex)

    positive = xi > 0
    for i in np.where(positive)[0]:
        mu = float(xi[i])
        t_big = t_mu / mu
        edges = _contour_panels(mu, delta, t_big)
        # the convergence comparison truncates at an actual panel edge
        i_half = int(np.searchsorted(edges, t_big / 2))
        i_half = min(max(i_half, 1), len(edges) - 1)
        t_half = float(edges[i_half])
        vals_T, vals_half = [], []
        for sign in (+1.0, -1.0):
            acc = 0j
            acc_half = 0j
            for a, b in zip(edges[:-1], edges[1:]):
                seg, _ = gauss_kronrod_segment(
                    lambda s: g_of(s) * np.exp(-1j * mu * np.asarray(s)),
                    sign * a, sign * b)
                acc += seg * sign if sign < 0 else seg
                if b <= t_half + 1e-12:
                    acc_half += seg * sign if sign < 0 else seg
            vals_T.append(acc)
            vals_half.append(acc_half)

        def corrected(t_cut: float, raw: complex) -> complex:
            # repeated integration by parts of int g e^{-i mu s} ds leaves
            # boundary terms E (g/(-i mu) + g'/mu^2 - i g''/mu^3)
            fd_step = min(0.02 * t_cut, 0.1 / mu)
            total = raw
            for sign in (+1.0, -1.0):
                g0, g1, g2 = _fd_derivatives(g_of, sign * t_cut, fd_step)
                e = cmath.exp(-1j * mu * sign * t_cut)
                boundary = e * (g0 / (-1j * mu) + g1 / mu ** 2 - 1j * g2 / mu ** 3)
                total -= sign * boundary
            return total

        v_full = corrected(t_big, vals_T[0] + vals_T[1])
        v_half = corrected(t_half, vals_half[0] + vals_half[1])
        prefactor = cmath.exp(-1j * theta) / (2 * math.pi) * cmath.exp(mu * delta)
        value = prefactor * v_full
        est = abs(prefactor * (v_full - v_half))
        scale = max(abs(value), 1.0)
        if est > conv_tol * scale:
            raise ContourDivergence(
                f"T-sweep not Cauchy at xi={mu:.4g}: delta {est:.3e}")
        out[i] = value

    if np.any(~positive):
        # xi = 0 is a boundary value of the Laplace-dual pairing; fill it by
        # polynomial extrapolation from dedicated nodes close to the origin
        pos = xi[positive]
        base = 0.1 * (pos.min() if len(pos) else 1.0)
        aux_xi = base * np.arange(1.0, 6.0)
        aux = analytic_borel(f, aux_xi, theta=theta, diameter=diameter,
                             t_mu=t_mu, conv_tol=conv_tol)
        for i in np.where(~positive)[0]:
            w = np.ones(5, dtype=complex)
            for a in range(5):
                for b in range(5):
                    if a != b:
                        w[a] *= (xi[i] - aux_xi[b]) / (aux_xi[a] - aux_xi[b])
            out[i] = np.sum(w * aux)
    return out


# ---------------------------------------------------------------------------
# Assembly of exact solutions
# ---------------------------------------------------------------------------

@dataclass
class ExactSolutionSample:
    x: complex
    hbar: complex
    f: complex
    residual: float
    tail_bound: float
    theta: float
    alpha: int


class Resummation:
    """Assembled canonical exact solution f_alpha^theta for one equation.

    Wraps the Borel grid together with the exact leading terms; callable at
    any (x, hbar) whose Phi-image lies over the covered lattice band.
    """

    def __init__(self, grid: BorelGrid):
        self.grid = grid
        self.std = grid.std
        self.frame = self.std.frame
        self.eq = self.std.eq          # the (possibly regularized) equation
        self.base_eq = self.eq.parent or self.eq
        self.fs = self.std.fs
        self.theta = self.frame.theta
        self.alpha = self.frame.alpha
        self._zeta_cache: dict[complex, complex] = {}

    # -- geometry helpers ------------------------------------------------------

    def zeta_of(self, x: complex) -> complex:
        if x not in self._zeta_cache:
            phi = liouville_map(self.frame, x)
            self._zeta_cache[x] = self.frame.rotation() * phi
        return self._zeta_cache[x]

    def sqrt_d0_at(self, x: complex) -> complex:
        return self.frame.branch.sqrt_at(x)

    # -- evaluation -------------------------------------------------------------

    def f_tilde(self, x: complex, hbar: complex) -> LaplaceResult:
        """The resummed tail F evaluated in the unrotated frame."""
        zeta = self.zeta_of(x)
        band = 3.5 * self.grid.h
        z_hi = self.std.j_eval * self.grid.h
        if not (-1e-12 <= zeta.real <= z_hi + 1e-12) or abs(zeta.imag) > band:
            raise PointOffGrid(
                f"zeta = {zeta:.6g} outside covered band [0, {z_hi:.4g}] x "
                f"(+/-{band:.3g}i); x = {x}")
        col = self.grid.column(zeta)
        hbar_rot = cmath.exp(-1j * self.theta) * hbar
        sigma = (1.0 / hbar_rot).real
        if sigma <= self.grid.growth_k + BOREL_DISC_MARGIN:
            raise OutsideBorelDisc(
                f"Re(e^{{i theta}}/hbar) = {sigma:.4g} not above fitted "
                f"K = {self.grid.growth_k:.4g} plus margin")
        w = laplace_lattice_weights(self.grid.h, len(col), hbar_rot)
        value = complex(np.sum(w * col))
        xi_max = float(self.grid.xi[-1])
        tail = self.grid.growth_a * math.exp(
            (self.grid.growth_k - sigma) * xi_max) / (sigma - self.grid.growth_k)
        return LaplaceResult(value, tail, hbar, self.theta)

    def value(self, x: complex, hbar: complex) -> tuple[complex, float]:
        """f(x, hbar) for the original equation, with the tail bound."""
        lap = self.f_tilde(x, hbar)
        w = self.sqrt_d0_at(x)
        g0 = self.fs.coeffs[0].evaluate(x, sqrt_d0_value=w)
        g1 = self.fs.coeffs[1].evaluate(x, sqrt_d0_value=w)
        g = g0 + hbar * (g1 + lap.value)
        chi = self.eq.chi
        scale = 1.0 if chi is None else chi.evaluate(x, sqrt_d0_value=w)
        return scale * g, abs(scale) * abs(hbar) * lap.truncation_tail_bound

    def coefficient_value(self, which: str, x: complex, hbar: complex) -> complex:
        """a(x, hbar) etc. of the original equation."""
        w = self.sqrt_d0_at(x)
        total = 0j
        p = 1.0 + 0j
        for coeff in getattr(self.base_eq, which):
            total += coeff.evaluate(x, sqrt_d0_value=w) * p
            p *= hbar
        return total

    def residual(self, x: complex, hbar: complex,
                 values: list[complex] | None = None) -> float:
        """|hbar f' - a f^2 - b f - c| with a 5-point finite-difference f'."""
        delta = min(1e-3, abs(hbar) / 10)
        if values is None:
            values = [self.value(x + k * delta, hbar)[0] for k in (-2, -1, 0, 1, 2)]
        df = finite_difference_5pt(values, delta)
        fval = values[2]
        a = self.coefficient_value("a", x, hbar)
        b = self.coefficient_value("b", x, hbar)
        c = self.coefficient_value("c", x, hbar)
        return abs(hbar * df - (a * fval * fval + b * fval + c))

    def sample(self, x: complex, hbar: complex,
               with_residual: bool = True) -> ExactSolutionSample:
        fval, tail = self.value(x, hbar)
        resid = self.residual(x, hbar) if with_residual else float("nan")
        return ExactSolutionSample(
            x=x, hbar=hbar, f=fval, residual=resid, tail_bound=tail,
            theta=self.theta, alpha=self.alpha)


@dataclass
class PipelineSettings:
    h: float = 1.0 / 128
    xi_max: float = 12.0
    n_max: int = 60
    tol: float = 1e-10
    formal_order: int = 24
    z_extent: float = 1.0
    backoff_nodes: int = 4
    halfstrip_radius: float = 0.5
    n_probes: int = 6
    max_arclength: float = 60.0
    validate_halfstrip: bool = True


def build_resummation(eq: RiccatiEquation, x0: complex, theta: float, alpha,
                      settings: PipelineSettings | None = None,
                      chi: FieldElem | None = None,
                      branch_sign: int = 1,
                      force: bool = False) -> Resummation:
    """Full pipeline: regularize, probe, solve formally, standardize, resum.

    The lattice origin is backed off a few nodes before x0 along the ray so
    residual stencils around x0 stay inside the covered band.
    """
    from .geometry import advance_along_z

    s = settings or PipelineSettings()
    eps = _sign_value(alpha)
    work_eq = eq.regularized(chi) if chi is not None else eq

    frame0 = LiouvilleFrame(eq, x0, theta, eps, branch_sign)
    halfstrip = None
    if s.validate_halfstrip:
        try:
            halfstrip = probe_halfstrip(frame0, x0, s.halfstrip_radius,
                                        n_probes=s.n_probes,
                                        max_arclength=s.max_arclength)
        except Exception:
            if not force:
                raise
    rot = cmath.exp(1j * theta) * eps
    x_origin = advance_along_z(frame0, x0, -s.backoff_nodes * s.h * rot)
    frame = LiouvilleFrame(eq, x_origin, theta, eps, branch_sign)
    # keep the branch consistent with the x0-based frame
    w_at_origin = frame0.branch.sqrt_at(x_origin)
    if abs(w_at_origin - frame.branch.sqrt_at_basepoint()) > abs(w_at_origin):
        frame = LiouvilleFrame(eq, x_origin, theta, eps, -branch_sign)

    fs = formal_solve(work_eq, alpha, max(2, s.formal_order))
    std = standardize(work_eq, frame, fs, s.h, s.xi_max,
                      s.z_extent + s.backoff_nodes * s.h,
                      halfstrip=halfstrip)
    grid = successive_approx(std, tol=s.tol, n_max=s.n_max)
    return Resummation(grid)


def assemble_exact(eq: RiccatiEquation, frame_or_resum, fs_alpha, grid,
                   points) -> list[ExactSolutionSample]:
    """Evaluate canonical exact solution samples at the given (x, hbar) pairs.

    Accepts either a prebuilt :class:`Resummation` or the (frame, fs, grid)
    triple produced by the standardize / successive_approx stages.
    """
    if isinstance(frame_or_resum, Resummation):
        resum = frame_or_resum
    else:
        resum = Resummation(grid)
    return [resum.sample(x, hbar) for x, hbar in points]


# ---------------------------------------------------------------------------
# Gevrey remainders
# ---------------------------------------------------------------------------

@dataclass
class GevreyRemainderReport:
    n_values: list[int]
    hbar_values: list[complex]
    remainders: np.ndarray          # shape (len(hbar), len(n))
    C: float
    M: float
    n_star: list[int]
    slope: float
    r_squared: float

    def bound_holds(self) -> bool:
        for i, hb in enumerate(self.hbar_values):
            for j, n in enumerate(self.n_values):
                bound = self.C * self.M ** n * math.factorial(n) * abs(hb) ** n
                if self.remainders[i, j] > bound * (1 + 1e-9):
                    return False
        return True


def gevrey_remainders(resum: Resummation, fs_original: FormalSolution,
                      x: complex, hbar_values, n_max: int = 15) -> GevreyRemainderReport:
    """Remainders R_n = f - sum_{k<n} f_k hbar^k and a single fitted (C, M).

    The fit is least squares in the log domain over pre-noise-floor points,
    with C inflated so the bound holds at every measured remainder.  n*(hbar)
    is the index of the smallest remainder; the report carries the slope and
    R^2 of log|R_{n*}| against 1/|hbar|.
    """
    w = resum.sqrt_d0_at(x)
    ns = list(range(0, n_max + 1))
    hbar_values = list(hbar_values)
    rem = np.zeros((len(hbar_values), len(ns)))
    for i, hb in enumerate(hbar_values):
        fval, _ = resum.value(x, hb)
        for j, n in enumerate(ns):
            partial = fs_original.evaluate_partial_sum(x, hb, n, w)
            rem[i, j] = abs(fval - partial)

    # least squares for (log C, log M) over clearly-resolved remainders
    rows = []
    floor = max(rem.min() * 4, 1e-14)
    for i, hb in enumerate(hbar_values):
        for j, n in enumerate(ns):
            if n >= 1 and rem[i, j] > floor:
                rows.append((n, math.log(rem[i, j]) - math.lgamma(n + 1)
                             - n * math.log(abs(hb))))
    if len(rows) >= 2:
        nn = np.array([r[0] for r in rows], dtype=float)
        yy = np.array([r[1] for r in rows], dtype=float)
        logc, logm, _ = linear_fit(nn, yy)
        m_fit = math.exp(logm)
    else:
        m_fit = 1.0
    c_fit = 0.0
    for i, hb in enumerate(hbar_values):
        for j, n in enumerate(ns):
            c_fit = max(c_fit, rem[i, j] / (m_fit ** n * math.factorial(n)
                                            * abs(hb) ** n))

    n_star = [ns[int(np.argmin(rem[i, :]))] for i in range(len(hbar_values))]
    best = rem.min(axis=1)
    inv_h = np.array([1.0 / abs(hb) for hb in hbar_values])
    _, slope, r2 = linear_fit(inv_h, np.log(best))
    return GevreyRemainderReport(
        n_values=ns, hbar_values=hbar_values, remainders=rem,
        C=c_fit, M=m_fit, n_star=n_star, slope=slope, r_squared=r2)


# ---------------------------------------------------------------------------
# Theta sweep
# ---------------------------------------------------------------------------

@dataclass
class ThetaSweepReport:
    thetas: list[float]
    points: list[tuple[complex, complex]]
    values: np.ndarray             # shape (len(thetas), len(points))
    max_pairwise: float
    reports: list


def theta_sweep(eq: RiccatiEquation, x0: complex, thetas, alpha, points,
                settings: PipelineSettings | None = None,
                chi: FieldElem | None = None,
                force: bool = False) -> ThetaSweepReport:
    """Build f^theta for each direction and compare values pairwise.

    Directions whose hypothesis check fails raise HypothesisFailed (unless
    forced); comparison points must lie inside every accepted Borel disc.
    """
    thetas = list(thetas)
    points = list(points)
    values = np.zeros((len(thetas), len(points)), dtype=complex)
    reports = []
    for i, theta in enumerate(thetas):
        rep = hypothesis_check(eq, x0, theta, alpha)
        reports.append(rep)
        if not rep.passed and not force:
            raise HypothesisFailed(
                f"hypotheses fail for theta = {theta}", theta=theta, report=rep)
        resum = build_resummation(eq, x0, theta, alpha, settings=settings,
                                  chi=chi, force=force)
        for j, (x, hb) in enumerate(points):
            values[i, j] = resum.value(x, hb)[0]
    max_pair = 0.0
    for i in range(len(thetas)):
        for k in range(i + 1, len(thetas)):
            max_pair = max(max_pair, float(np.max(np.abs(values[i] - values[k]))))
    return ThetaSweepReport(thetas=thetas, points=points, values=values,
                            max_pairwise=max_pair, reports=reports)


# ---------------------------------------------------------------------------
# Integration-by-parts identity
# ---------------------------------------------------------------------------

def ibp_identity_check(grid: BorelGrid, hbar_values, j_column: int = 0) -> dict:
    """Check L[phi] = hbar phi(., 0) + hbar L[d_xi phi] on a grid column.

    The xi-derivative is the 4th-order finite difference on the lattice.
    """
    col = grid.values[j_column, :]
    h = grid.h
    n = len(col)
    dcol = np.zeros(n, dtype=complex)
    dcol[2:-2] = (col[:-4] - 8 * col[1:-3] + 8 * col[3:-1] - col[4:]) / (12 * h)
    # one-sided 4th order at the edges
    edge = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    dcol[0] = np.dot(edge, col[:5])
    dcol[1] = np.dot(edge, col[1:6])
    dcol[-1] = -np.dot(edge, col[-1:-6:-1])
    dcol[-2] = -np.dot(edge, col[-2:-7:-1])

    deviations = []
    for hb in hbar_values:
        w = laplace_lattice_weights(h, n, hb)
        lhs = np.sum(w * col)
        rhs = hb * col[0] + hb * np.sum(w * dcol)
        deviations.append(abs(lhs - rhs))
    return {
        "deviations": deviations,
        "max_deviation": max(deviations),
        "phi_at_zero": col[0],
    }
