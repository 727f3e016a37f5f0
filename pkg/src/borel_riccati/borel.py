"""Borel-plane machinery: standardization of the Riccati equation onto the
halfstrip lattice and the solution of the convolution integral equation by
successive approximations.

The lattice shares one step h between the z and xi axes so the diagonal
integral operator lands on nodes exactly.  A node (j, m) is valid when
j + m <= J; every operator preserves that triangle.

Note on orientation: the mathematically consistent form of the integral
equation is

    phi(z, xi) = -a0(z + xi) - I[ alpha0 + a1 phi + alpha1*phi
                                  + a2 phi*phi + alpha2*phi*phi ](z, xi),

with I[h](z, xi) = int_0^xi h(z + t, xi - t) dt: the initial condition is
phi(z, 0) = -a0(z) (forced by L[phi] = hbar phi(.,0) + hbar L[d_xi phi] and
the hbar-expansion F_1 = -a0), and the seed is transported along the
characteristic z + xi = const.  The source text's printed recursion seeds
with +a0(z) untransported; resumming that iteration does not solve the
equation (see the decisions ledger for the numerical evidence).
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    GridTooShort,
    HalfstripMissing,
    InsufficientFormalOrder,
    LatticeMismatch,
    NoConvergence,
)
from .field import FieldElem
from .formal import FormalSolution, RiccatiEquation
from .geometry import HalfStrip, LiouvilleFrame, trace_lattice_nodes
from .numerics import linear_fit


# ---------------------------------------------------------------------------
# Lattice operators
# ---------------------------------------------------------------------------

def _fft_len(n: int) -> int:
    L = 1
    while L < 2 * n:
        L *= 2
    return L


def convolve(f: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid convolution along the xi axis (last axis; shared lattice).

    (f*g)(xi_m) = h [ sum_{s=0..m} f_{m-s} g_s - (f_0 g_m + f_m g_0)/2 ],
    so (f*g)(0) = 0 exactly.
    """
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if f.shape[-1] != g.shape[-1]:
        raise LatticeMismatch(f"xi lengths differ: {f.shape[-1]} vs {g.shape[-1]}")
    n = f.shape[-1]
    L = _fft_len(n)
    out = np.fft.ifft(np.fft.fft(f, n=L, axis=-1) * np.fft.fft(g, n=L, axis=-1),
                      axis=-1)[..., :n]
    out -= 0.5 * (f[..., :1] * g + g[..., :1] * f)
    out *= h
    out[..., 0] = 0.0
    return out


def integral_op(a: np.ndarray, h: float) -> np.ndarray:
    """Diagonal trapezoid operator I[a](j, m) = h sum''_{s=0..m} a[j+s, m-s].

    Valid on the triangle j + m <= J; entries beyond it are left as zero.
    Uses strided antidiagonal views, so the whole grid costs O(J*M).
    """
    a = np.asarray(a, dtype=complex)
    J1, M1 = a.shape
    if J1 < M1:
        raise GridTooShort(f"z-lattice ({J1} nodes) shorter than xi-lattice ({M1})")
    out = np.zeros_like(a)
    flat_in = a.reshape(-1)
    flat_out = out.reshape(-1)
    M = M1 - 1
    for d in range(1, J1):
        # antidiagonal j + m = d: rows j = max(0, d - M) .. d
        j_lo = max(0, d - M)
        count = d - j_lo + 1
        sl = slice(d + j_lo * M, d + j_lo * M + count * M, M)
        v = flat_in[sl]
        c = np.cumsum(v)
        # sum over s for row j = j_lo + k is c[-1] - c[k-1]; trapezoid halves
        totals = c[-1] - np.concatenate(([0], c[:-1]))
        totals -= 0.5 * (v + v[-1])
        # row d itself (m = 0) gets zero
        totals[-1] = 0.0
        flat_out[sl] = h * totals
    return out


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

@dataclass
class StandardizedEquation:
    """Sampled coefficients of hbar dF/dz = F + hbar(A2 F^2 + A1 F + A0).

    ``lead[i]`` holds the hbar-leading part a_i(z_j); ``borel[i]`` the exact
    xi-polynomial Borel transform of the tail, as rows of xi-power
    coefficients (row r = coefficient of xi^r), already rotated by e^{i m
    theta}.
    """

    frame: LiouvilleFrame
    eq: RiccatiEquation
    fs: FormalSolution
    h: float
    j_eval: int
    m_count: int
    x_nodes: np.ndarray
    sqrt_nodes: np.ndarray
    lead: list[np.ndarray]
    borel: list[np.ndarray | None]
    coeff_elems: dict[str, list[FieldElem]]
    c0_equals_minus_f2: bool

    @property
    def j_count(self) -> int:
        return len(self.x_nodes) - 1

    def alpha_grid(self, i: int, xi: np.ndarray) -> np.ndarray | None:
        rows = self.borel[i]
        if rows is None:
            return None
        out = np.zeros((len(self.x_nodes), len(xi)), dtype=complex)
        p = np.ones_like(xi, dtype=complex)
        for r in range(rows.shape[0]):
            out += rows[r][:, None] * p[None, :]
            p = p * xi
        return out


def standardized_coefficients(eq: RiccatiEquation, fs: FormalSolution):
    """Exact hbar-polynomial coefficients of (A2, A1, A0) as FieldElems.

    A2 = eps a / sqrt(D0), A1 = eps (b_* + 2 a f1 + 2 a_* f0)/sqrt(D0),
    A0 = eps (-f1' + a f1^2 + (2 a_* f0 + b_*) f1
              + a_** f0^2 + b_** f0 + c_**)/sqrt(D0).
    """
    if fs.order < 2:
        raise InsufficientFormalOrder("standardization needs order >= 2")
    eps = fs.alpha
    tower = eq.tower
    if eq.a0_is_zero():
        inv = eps * (tower.one() / eq.b0)
    else:
        inv = eps * (tower.one() / tower.sqrt_d0())
    f0, f1 = fs.coeffs[0], fs.coeffs[1]
    n = max(len(eq.a), len(eq.b), len(eq.c))
    a2 = [inv * eq.coeff("a", m) for m in range(n)]
    a1 = [inv * (eq.coeff("b", m + 1) + 2 * eq.coeff("a", m) * f1
                 + 2 * eq.coeff("a", m + 1) * f0) for m in range(n)]
    a0 = []
    f1sq = f1 * f1
    f0sq = f0 * f0
    for m in range(n):
        term = eq.coeff("a", m) * f1sq \
            + (2 * eq.coeff("a", m + 1) * f0 + eq.coeff("b", m + 1)) * f1 \
            + eq.coeff("a", m + 2) * f0sq + eq.coeff("b", m + 2) * f0 \
            + eq.coeff("c", m + 2)
        if m == 0:
            term = term - f1.derivative()
        a0.append(inv * term)
    for lst in (a2, a1, a0):
        while len(lst) > 1 and lst[-1].is_zero():
            lst.pop()
    return a2, a1, a0


def standardize(eq: RiccatiEquation, frame: LiouvilleFrame, fs: FormalSolution,
                h: float, xi_max: float, z_extent: float,
                halfstrip: HalfStrip | None = None,
                require_halfstrip: bool = False) -> StandardizedEquation:
    """Sample the standardized coefficients along the (theta, alpha)-ray.

    The lattice starts at the frame basepoint; nodes are the unit-speed ray
    samples at t = j h for j = 0 .. j_eval + M + 4, so every column up to
    j_eval has complete diagonals.
    """
    if require_halfstrip and halfstrip is None:
        raise HalfstripMissing("standardize requires a validated halfstrip")
    if halfstrip is not None and halfstrip.classification_kind() not in (
            "infinite_to_pole", "closed"):
        raise HalfstripMissing("halfstrip center ray is not infinite or closed")
    a2, a1, a0 = standardized_coefficients(eq, fs)

    m_count = int(round(xi_max / h))
    j_eval = int(round(z_extent / h))
    j_total = j_eval + m_count + 4
    x_nodes, sqrt_nodes = trace_lattice_nodes(frame, frame.x0, h, j_total)

    rot = cmath.exp(1j * frame.theta)

    def sample(coeff_list):
        lead = coeff_list[0].evaluate(x_nodes, sqrt_d0_value=sqrt_nodes)
        lead = np.asarray(lead, dtype=complex) + np.zeros(len(x_nodes), dtype=complex)
        if len(coeff_list) == 1:
            return lead, None
        rows = []
        fact = 1.0
        for r, cm in enumerate(coeff_list[1:]):
            if r > 0:
                fact *= r
            vals = cm.evaluate(x_nodes, sqrt_d0_value=sqrt_nodes)
            vals = np.asarray(vals, dtype=complex) + np.zeros(len(x_nodes), dtype=complex)
            rows.append(vals * (rot ** (r + 1)) / fact)
        return lead, np.array(rows)

    lead2, bor2 = sample(a2)
    lead1, bor1 = sample(a1)
    lead0, bor0 = sample(a0)

    consistent = False
    if fs.order >= 2:
        consistent = (a0[0] + fs.coeffs[2]).is_zero()

    return StandardizedEquation(
        frame=frame,
        eq=eq,
        fs=fs,
        h=h,
        j_eval=j_eval,
        m_count=m_count,
        x_nodes=x_nodes,
        sqrt_nodes=sqrt_nodes,
        lead=[lead0, lead1, lead2],
        borel=[bor0, bor1, bor2],
        coeff_elems={"a2": a2, "a1": a1, "a0": a0},
        c0_equals_minus_f2=consistent,
    )


# ---------------------------------------------------------------------------
# Successive approximations
# ---------------------------------------------------------------------------

@dataclass
class BorelGrid:
    """phi(z_j, xi_m) on the shared-step lattice, with growth diagnostics."""

    std: StandardizedEquation
    h: float
    xi: np.ndarray
    values: np.ndarray
    n_star: int
    iterate_maxima: list[float]
    growth_a: float
    growth_k: float
    ie_residual: float
    iterates: list[np.ndarray] | None = None
    _tri_mask: np.ndarray = dc_field(default=None, repr=False)

    @property
    def j_eval(self) -> int:
        return self.std.j_eval

    def valid_mask(self) -> np.ndarray:
        if self._tri_mask is None:
            J1, M1 = self.values.shape
            jj = np.arange(J1)[:, None]
            mm = np.arange(M1)[None, :]
            self._tri_mask = jj + mm <= J1 - 1
        return self._tri_mask

    def column(self, zeta: complex) -> np.ndarray:
        """phi(zeta, xi_m) by 5-point Lagrange interpolation across z-columns."""
        from .numerics import lagrange_row
        zs = self.h * np.arange(self.std.j_eval + 1)
        idx, w = lagrange_row(zs, zeta)
        return w @ self.values[idx, :]

    def export_csv(self) -> tuple[str, dict]:
        lines = ["j,m,re,im"]
        J1, M1 = self.values.shape
        mask = self.valid_mask()
        for j in range(min(J1, self.j_eval + 1)):
            for m in range(M1):
                if mask[j, m]:
                    v = self.values[j, m]
                    lines.append(f"{j},{m},{v.real!r},{v.imag!r}")
        header = {
            "h": self.h,
            "J": int(J1 - 1),
            "J_eval": int(self.j_eval),
            "M": int(M1 - 1),
            "growth_fit": {"A": self.growth_a, "K": self.growth_k},
            "n_star": self.n_star,
            "ie_residual": self.ie_residual,
        }
        return "\n".join(lines) + "\n", header


def _triangle_max(arr: np.ndarray, mask: np.ndarray) -> float:
    return float(np.max(np.abs(arr[mask]))) if mask.any() else 0.0


def successive_approx(std: StandardizedEquation, tol: float = 1e-10,
                      n_max: int = 60, keep_iterates: bool = False) -> BorelGrid:
    """Solve the Borel-plane integral equation on the lattice.

    Seeds phi_0(z, xi) = -a0(z + xi), then

        phi_n = -I[ a1 phi_{n-1} + alpha1 * phi_{n-2}
                    + a2 sum_{i+j=n-2} phi_i * phi_j
                    + alpha2 * sum_{i+j=n-3} phi_i * phi_j ],

    stopping at the first n with max|phi_n| < tol * max|sum phi|.  A final
    substitution pass reports the integral-equation residual.
    """
    h = std.h
    J1 = std.j_count + 1
    M1 = std.m_count + 1
    xi = h * np.arange(M1)
    jj = np.arange(J1)[:, None]
    mm = np.arange(M1)[None, :]
    diag_idx = np.minimum(jj + mm, J1 - 1)
    tri = jj + mm <= J1 - 1

    a0g, a1g, a2g = std.lead[0], std.lead[1], std.lead[2]
    alpha0 = std.alpha_grid(0, xi)
    alpha1 = std.alpha_grid(1, xi)
    alpha2 = std.alpha_grid(2, xi)
    a1_col = a1g[:, None]
    a2_col = a2g[:, None]
    a1_zero = np.all(a1g == 0)
    a2_zero = np.all(a2g == 0)

    phi0 = -a0g[diag_idx]
    phis = [phi0]
    total = phi0.copy()
    maxima = [_triangle_max(phi0, tri)]
    t_cache: dict[int, np.ndarray] = {}

    # cached xi-FFT spectra: each iterate (and alpha_i) is transformed once
    L = _fft_len(M1)

    def spectrum(arr: np.ndarray) -> np.ndarray:
        return np.fft.fft(arr, n=L, axis=-1)

    spectra = [spectrum(phi0)]
    sp_alpha1 = spectrum(alpha1) if alpha1 is not None else None
    sp_alpha2 = spectrum(alpha2) if alpha2 is not None else None

    def conv_from_spec(sp: np.ndarray, f: np.ndarray, g0_col: np.ndarray,
                       f0_col: np.ndarray, g: np.ndarray) -> np.ndarray:
        out = np.fft.ifft(sp, axis=-1)[..., :M1]
        out -= 0.5 * (f0_col * g + g0_col * f)
        out *= h
        out[..., 0] = 0.0
        return out

    def pair_sum(m: int) -> np.ndarray:
        # sum_{i+j=m} phi_i * phi_j; only phi_0 has a nonzero xi=0 column,
        # so the trapezoid endpoint correction reduces to -h phi0[:,0] phi_m.
        # Pairs whose product cannot reach the tolerance are skipped (this
        # also avoids denormal-heavy multiplies of negligible spectra).
        if m not in t_cache:
            scale_now = _triangle_max(total, tri)
            cutoff = tol * max(scale_now, 1e-300) * 1e-2
            sp = np.zeros((J1, L), dtype=complex)
            any_term = False
            for i in range(0, m // 2 + 1):
                j = m - i
                if maxima[i] * maxima[j] < cutoff:
                    continue
                prod = spectra[i] * spectra[j]
                sp += prod if i == j else 2 * prod
                any_term = True
            if not any_term:
                t_cache[m] = np.zeros((J1, M1), dtype=complex)
                return t_cache[m]
            acc = np.fft.ifft(sp, axis=-1)[..., :M1]
            acc *= h
            acc -= h * phi0[:, :1] * phis[m]
            acc[..., 0] = 0.0
            t_cache[m] = acc
        return t_cache[m]

    n = 0
    converged = False
    while n < n_max:
        n += 1
        if n == 1:
            operand = np.zeros((J1, M1), dtype=complex)
            if alpha0 is not None:
                operand += alpha0
            if not a1_zero:
                operand += a1_col * phis[0]
        else:
            operand = np.zeros((J1, M1), dtype=complex)
            if not a1_zero and maxima[n - 1] > 0:
                operand += a1_col * phis[n - 1]
            if alpha1 is not None and maxima[n - 2] > 0:
                operand += conv_from_spec(
                    sp_alpha1 * spectra[n - 2], alpha1, phis[n - 2][:, :1],
                    alpha1[:, :1], phis[n - 2])
            if not a2_zero and n >= 2:
                ps = pair_sum(n - 2)
                if ps.any():
                    operand += a2_col * ps
            if alpha2 is not None and n >= 3:
                ps = pair_sum(n - 3)
                if ps.any():
                    operand += convolve(alpha2, ps, h)
        phi_n = -integral_op(operand, h)
        phis.append(phi_n)
        spectra.append(spectrum(phi_n))
        total += phi_n
        m_n = _triangle_max(phi_n, tri)
        maxima.append(m_n)
        scale = _triangle_max(total, tri)
        # two consecutive small iterates: a single one can be structurally
        # zero (all odd iterates vanish whenever a1 and the alpha_i do)
        if n >= 2 and m_n < tol * max(scale, 1e-300) \
                and maxima[-2] < tol * max(scale, 1e-300):
            converged = True
            break

    if not converged:
        raise NoConvergence(
            f"no convergence after {n_max} iterations (last max {maxima[-1]:.3e})",
            growth_trend=maxima)

    # growth fit |phi| <= A exp(K xi) over all valid nodes
    col_max = np.zeros(M1)
    for m in range(M1):
        rows = slice(0, J1 - m)
        col_max[m] = np.max(np.abs(total[rows, m]))
    tail = slice(M1 // 2, M1)
    safe = np.maximum(col_max, 1e-300)
    _, slope, _ = linear_fit(xi[tail], np.log(safe[tail]))
    growth_k = max(slope, 0.0)
    growth_a = float(np.max(col_max * np.exp(-growth_k * xi)))

    # one substitution pass through the integral equation
    conv_tt = convolve(total, total, h)
    resid_operand = np.zeros((J1, M1), dtype=complex)
    if alpha0 is not None:
        resid_operand += alpha0
    if not a1_zero:
        resid_operand += a1_col * total
    if alpha1 is not None:
        resid_operand += convolve(alpha1, total, h)
    if not a2_zero:
        resid_operand += a2_col * conv_tt
    if alpha2 is not None:
        resid_operand += convolve(alpha2, conv_tt, h)
    recon = phi0 - integral_op(resid_operand, h)
    ie_residual = _triangle_max(total - recon, tri)

    return BorelGrid(
        std=std,
        h=h,
        xi=xi,
        values=total,
        n_star=n,
        iterate_maxima=maxima,
        growth_a=growth_a,
        growth_k=growth_k,
        ie_residual=ie_residual,
        iterates=phis if keep_iterates else None,
    )
