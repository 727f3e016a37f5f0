"""Formal perturbation theory: leading orders, the exact coefficient
recursion, formal Borel coefficients, Gevrey fitting, the formal discriminant
and the theorem-hypothesis checker.

All coefficients are exact elements of the quadratic tower; floats only
appear in :func:`gevrey_fit` and the hypothesis checker's ray tracing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Sequence

from .errors import (
    DegenerateDiscriminant,
    EvaluationFailed,
    NoMinusSolution,
)
from .field import (
    BranchContext,
    FieldElem,
    FieldTower,
    RF_ZERO,
    RationalFunction,
    polynomial_roots,
)
from .parsing import parse_rational


def _sign_value(alpha) -> int:
    if alpha in (1, "+", "plus"):
        return 1
    if alpha in (-1, "-", "minus"):
        return -1
    raise ValueError(f"alpha must be '+' or '-', got {alpha!r}")


# ---------------------------------------------------------------------------
# The equation
# ---------------------------------------------------------------------------

class RiccatiEquation:
    """hbar f' = a f^2 + b f + c with hbar-polynomial coefficients.

    ``a``, ``b``, ``c`` are lists indexed by hbar-power.  Entries are stored
    as tower elements so that regularized equations (coefficients involving
    sqrt(D0)) share the same representation; plain equations have purely
    rational entries.
    """

    def __init__(self, a, b, c, *, tower: FieldTower | None = None, chi: FieldElem | None = None):
        if tower is None:
            a_rf = [_as_rf(x) for x in a]
            b_rf = [_as_rf(x) for x in b]
            c_rf = [_as_rf(x) for x in c]
            a0 = a_rf[0] if a_rf else RF_ZERO
            b0 = b_rf[0] if b_rf else RF_ZERO
            c0 = c_rf[0] if c_rf else RF_ZERO
            d0 = b0 * b0 - 4 * a0 * c0
            if d0.is_zero():
                raise DegenerateDiscriminant("leading-order discriminant is identically zero")
            sqrt_rational = b0 if a0.is_zero() else None
            tower = FieldTower(d0, sqrt_rational)
            a = [tower.elem(x, 0) for x in a_rf]
            b = [tower.elem(x, 0) for x in b_rf]
            c = [tower.elem(x, 0) for x in c_rf]
        self.tower = tower
        self.a = list(a)
        self.b = list(b)
        self.c = list(c)
        self.chi = chi       # set when this equation is a chi-regularization
        self.parent = None   # the unregularized equation, when applicable

        d0 = tower.d0
        self.d0 = d0
        self._turning_points: list[complex] | None = None

    # -- constructors ---------------------------------------------------------

    @staticmethod
    def from_strings(a: Sequence[str], b: Sequence[str], c: Sequence[str]) -> "RiccatiEquation":
        return RiccatiEquation(
            [parse_rational(s) for s in a],
            [parse_rational(s) for s in b],
            [parse_rational(s) for s in c],
        )

    # -- coefficient access ---------------------------------------------------

    def coeff(self, which: str, k: int) -> FieldElem:
        lst = getattr(self, which)
        return lst[k] if k < len(lst) else self.tower.zero()

    @property
    def a0(self) -> FieldElem:
        return self.coeff("a", 0)

    @property
    def b0(self) -> FieldElem:
        return self.coeff("b", 0)

    @property
    def c0(self) -> FieldElem:
        return self.coeff("c", 0)

    def order(self) -> int:
        return max(len(self.a), len(self.b), len(self.c)) - 1

    def a0_is_zero(self) -> bool:
        return self.a0.is_zero()

    # -- geometry-facing data --------------------------------------------------

    def turning_points(self) -> list[complex]:
        if self._turning_points is None:
            self._turning_points = polynomial_roots(self.d0.num)
        return self._turning_points

    def d0_poles(self) -> list[complex]:
        return polynomial_roots(self.d0.den)

    # -- transformations --------------------------------------------------------

    def regularized(self, chi: FieldElem) -> "RiccatiEquation":
        """Change of unknown f = chi * g; D0 is unchanged.

        New coefficients: a' = chi*a, b' = b - hbar * chi'/chi, c' = c/chi.
        """
        if chi.is_zero():
            raise ValueError("regularizer chi must be nonzero")
        log_deriv = chi.derivative() / chi
        a_new = [chi * ak for ak in self.a]
        b_new = list(self.b) + [self.tower.zero()] * max(0, 2 - len(self.b))
        b_new[1] = b_new[1] - log_deriv
        while len(b_new) > 1 and b_new[-1].is_zero():
            b_new.pop()
        inv_chi = self.tower.one() / chi
        c_new = [inv_chi * ck for ck in self.c]
        out = RiccatiEquation(a_new, b_new, c_new, tower=self.tower, chi=chi)
        out.parent = self
        return out

    def monic_regularized(self) -> "RiccatiEquation":
        """The sqrt(D0)-regularization of Thm-style monic treatment."""
        return self.regularized(self.tower.sqrt_d0())

    def monic_form_coeffs(self) -> tuple[list[FieldElem], list[FieldElem]]:
        """(p, q) of the monic equation g' ... obtained via g = a f.

        For a == 1 this is just (b, c).  Otherwise p = b + hbar (log a)' and
        q = a*c, defined when a is hbar-independent and nonvanishing.
        """
        one = self.tower.one()
        if len(self.a) == 1 and self.a[0] == one:
            return list(self.b), list(self.c)
        if len(self.a) != 1:
            raise ValueError("monic form needs an hbar-independent leading coefficient")
        a0 = self.a[0]
        p = list(self.b) + [self.tower.zero()] * max(0, 2 - len(self.b))
        p[1] = p[1] + a0.derivative() / a0
        q = [a0 * ck for ck in self.c]
        return p, q

    def __repr__(self):
        return (f"RiccatiEquation(a={len(self.a)} terms, b={len(self.b)} terms, "
                f"c={len(self.c)} terms, D0={self.d0.to_string()})")


def _as_rf(x) -> RationalFunction:
    if isinstance(x, RationalFunction):
        return x
    if isinstance(x, str):
        return parse_rational(x)
    return RationalFunction.constant(x)


# ---------------------------------------------------------------------------
# Formal solutions
# ---------------------------------------------------------------------------

@dataclass
class FormalSolution:
    """Truncated formal power-series solution and its Borel coefficients."""

    alpha: int
    coeffs: list[FieldElem]
    order: int
    borel_coeffs: list[FieldElem] = dc_field(default_factory=list)

    def __post_init__(self):
        if not self.borel_coeffs and self.order >= 1:
            self.borel_coeffs = formal_borel_series(self.coeffs)

    def evaluate_partial_sum(self, x: complex, hbar: complex, n: int,
                             sqrt_d0_value: complex) -> complex:
        """sum_{k<n} f_k(x) hbar^k."""
        total = 0j
        p = 1.0 + 0j
        for k in range(min(n, len(self.coeffs))):
            total += self.coeffs[k].evaluate(x, sqrt_d0_value=sqrt_d0_value) * p
            p *= hbar
        return total

    def to_strings(self) -> list[dict]:
        out = []
        for k, f in enumerate(self.coeffs):
            out.append({"k": k, "u": f.u.to_string(), "v": f.v.to_string()})
        return out


def formal_borel_series(coeffs: Sequence[FieldElem]) -> list[FieldElem]:
    """Formal Borel transform: phi_k = f_{k+1} / k! (the constant term drops)."""
    out = []
    fact = 1
    for k in range(len(coeffs) - 1):
        if k > 0:
            fact *= k
        out.append(coeffs[k + 1] / Fraction(fact))
    return out


def leading_order(eq: RiccatiEquation, alpha) -> FieldElem:
    """Exact leading-order root, labeled so that 2 a0 f0 + b0 = alpha*sqrt(D0)."""
    eps = _sign_value(alpha)
    if eq.d0.is_zero():
        raise DegenerateDiscriminant("D0 vanishes identically")
    if eq.a0_is_zero():
        if eps < 0:
            raise NoMinusSolution("no holomorphic '-' family when a0 == 0")
        return -eq.c0 / eq.b0
    sqrt_d0 = eq.tower.sqrt_d0()
    return (eps * sqrt_d0 - eq.b0) / (2 * eq.a0)


def formal_solve(eq: RiccatiEquation, alpha, order: int) -> FormalSolution:
    """Run the exact coefficient recursion up to the requested order."""
    if order < 0:
        raise ValueError("order must be >= 0")
    eps = _sign_value(alpha)
    f0 = leading_order(eq, alpha)
    coeffs = [f0]
    if eq.a0_is_zero():
        # preferred root: sqrt(D0) = b0, so eps*sqrt(D0) stays b0
        inv_sqrt = eq.tower.one() / eq.b0
    else:
        inv_sqrt = eq.tower.one() / eq.tower.sqrt_d0()

    # pair_sums[m] accumulates sum_{i+j=m} f_i f_j incrementally as the f_k
    # appear; entries above the current order stay partial until consumed
    zero = eq.tower.zero()
    pair_sums: list[FieldElem] = [zero] * (2 * order + 1)
    pair_sums[0] = f0 * f0
    for k in range(1, order + 1):
        # product sum over k1+k2+k3 = k with k2,k3 != k; at this point
        # pair_sums[m] for m < k is complete and pair_sums[k] holds exactly
        # the pairs with i,j < k, which is the required exclusion
        s = zero
        for k1 in range(0, k + 1):
            ak1 = eq.coeff("a", k1)
            if not ak1.is_zero():
                s = s + ak1 * pair_sums[k - k1]
        for k1 in range(1, k + 1):
            bk1 = eq.coeff("b", k1)
            if not bk1.is_zero():
                s = s + bk1 * coeffs[k - k1]
        s = s + eq.coeff("c", k)
        fk = eps * inv_sqrt * (coeffs[k - 1].derivative() - s)
        coeffs.append(fk)
        if fk.is_zero():
            continue
        for j in range(0, k):
            m = k + j
            if m <= 2 * order:
                term = fk * coeffs[j]
                pair_sums[m] = pair_sums[m] + term + term
        if 2 * k <= 2 * order:
            pair_sums[2 * k] = pair_sums[2 * k] + fk * fk
    return FormalSolution(alpha=eps, coeffs=coeffs, order=order)


def _pair_sum(coeffs: list[FieldElem], m: int) -> FieldElem:
    total = coeffs[0].tower.zero()
    for i in range(0, m + 1):
        if i < len(coeffs) and m - i < len(coeffs):
            total = total + coeffs[i] * coeffs[m - i]
    return total


def residual_series(eq: RiccatiEquation, coeffs: Sequence[FieldElem],
                    through_order: int) -> list[FieldElem]:
    """hbar-expansion of hbar f' - (a f^2 + b f + c) for the truncated series.

    All returned entries must be exactly zero when ``coeffs`` solves the
    equation through ``through_order``.
    """
    n = through_order
    if len(coeffs) <= n:
        raise ValueError("need coefficients through the requested order")
    zero = eq.tower.zero()
    pair = [_pair_sum(list(coeffs[: n + 1]), m) for m in range(n + 1)]
    out = []
    for k in range(0, n + 1):
        r = coeffs[k - 1].derivative() if k >= 1 else zero
        for k1 in range(0, k + 1):
            ak1 = eq.coeff("a", k1)
            if not ak1.is_zero():
                r = r - ak1 * pair[k - k1]
            bk1 = eq.coeff("b", k1)
            if not bk1.is_zero():
                r = r - bk1 * coeffs[k - k1]
        r = r - eq.coeff("c", k)
        out.append(r)
    return out


def formal_discriminant(eq: RiccatiEquation, fs_plus: FormalSolution,
                        fs_minus: FormalSolution, order: int) -> list[FieldElem]:
    """hbar-series of a^2 (f+ - f-)^2 through the given order.

    The square convention makes the order-0 coefficient equal D0 exactly; the
    source formula's printed product (f+ - f-)(f- - f+) is its negative.
    """
    if fs_plus.order < order or fs_minus.order < order:
        raise ValueError("formal solutions too short for requested order")
    diff = [fs_plus.coeffs[k] - fs_minus.coeffs[k] for k in range(order + 1)]
    zero = eq.tower.zero()
    # (sum a_k h^k)^2 and diff^2, truncated
    a_sq = _series_product([eq.coeff("a", k) for k in range(order + 1)],
                           [eq.coeff("a", k) for k in range(order + 1)], order, zero)
    d_sq = _series_product(diff, diff, order, zero)
    return _series_product(a_sq, d_sq, order, zero)


def _series_product(a, b, order, zero):
    out = [zero] * (order + 1)
    for i, ai in enumerate(a[: order + 1]):
        if ai.is_zero():
            continue
        for j in range(0, order + 1 - i):
            bj = b[j]
            if not bj.is_zero():
                out[i + j] = out[i + j] + ai * bj
    return out


# ---------------------------------------------------------------------------
# Gevrey fit
# ---------------------------------------------------------------------------

@dataclass
class GevreyFit:
    """Empirical (C, M) with |f_k(x0)| <= C M^k k! for every computed k."""

    C: float
    M: float
    sample_point: complex
    orders_used: tuple[int, int]
    radius_estimate: float
    magnitudes: list[float]

    def bound_holds(self) -> bool:
        fact = 1.0
        for k, mag in enumerate(self.magnitudes):
            if k > 0:
                fact *= k
            if mag > self.C * self.M ** k * fact * (1 + 1e-12):
                return False
        return True


def gevrey_fit(fs: FormalSolution, x0: complex, branch: BranchContext,
               skip_orders: int = 5) -> GevreyFit:
    """Fit the factorial envelope of the coefficient magnitudes at x0.

    Estimator: M = max_{k >= k0} (|f_k|/k!)^(1/k) with k0 skipping the
    transient low orders, then C = max_k |f_k| / (M^k k!).  The reciprocal of
    M estimates the radius of the Borel disc.
    """
    try:
        w = branch.sqrt_at(x0)
    except Exception as exc:  # pragma: no cover - defensive
        raise EvaluationFailed(f"cannot continue sqrt(D0) to {x0}") from exc
    mags = []
    for f in fs.coeffs:
        try:
            mags.append(abs(f.evaluate(x0, sqrt_d0_value=w)))
        except Exception as exc:
            raise EvaluationFailed(f"coefficient evaluation failed at {x0}") from exc
    k0 = min(skip_orders, max(1, len(mags) - 1))
    m_est = 0.0
    fact = 1.0
    for k, mag in enumerate(mags):
        if k > 0:
            fact *= k
        if k >= k0 and mag > 0:
            m_est = max(m_est, (mag / fact) ** (1.0 / k))
    if m_est == 0.0:
        m_est = 1e-300  # all-zero tail: any M works, report a tiny one
    c_est = 0.0
    fact = 1.0
    for k, mag in enumerate(mags):
        if k > 0:
            fact *= k
        c_est = max(c_est, mag / (m_est ** k * fact))
    return GevreyFit(
        C=c_est,
        M=m_est,
        sample_point=x0,
        orders_used=(0, len(mags) - 1),
        radius_estimate=1.0 / m_est,
        magnitudes=mags,
    )


# ---------------------------------------------------------------------------
# Hypothesis checker
# ---------------------------------------------------------------------------

@dataclass
class OrdCheck:
    label: str
    k: int
    lhs_order: float
    bound: float
    passed: bool


@dataclass
class HypothesisReport:
    """Per-hypothesis pass/fail for the existence theorems."""

    theta: float
    alpha: int
    x0: complex
    ray_kind: str
    limit_point: complex | None          # None = infinity (or not applicable)
    ray_ok: bool
    d0_order: float | None
    raw_checks: list[OrdCheck]
    monic_checks: list[OrdCheck]
    raw_ok: bool
    monic_ok: bool
    log_deriv_ok: bool
    a0_nonvanishing_on_ray: bool

    @property
    def passed(self) -> bool:
        return self.ray_ok and self.a0_nonvanishing_on_ray and (self.raw_ok or self.monic_ok)

    @property
    def requires_regularization(self) -> bool:
        return self.passed and not self.raw_ok

    def summary(self) -> dict:
        return {
            "theta": self.theta,
            "alpha": "+" if self.alpha > 0 else "-",
            "ray": self.ray_kind,
            "limit_point": None if self.limit_point is None else
            [self.limit_point.real, self.limit_point.imag],
            "ray_ok": self.ray_ok,
            "raw_ok": self.raw_ok,
            "monic_ok": self.monic_ok,
            "log_deriv_ok": self.log_deriv_ok,
            "passed": self.passed,
            "requires_regularization": self.requires_regularization,
        }


def _ord_at(r: RationalFunction, point: complex | None) -> float:
    if point is None:
        return r.order_at_infinity()
    return r.order_at(point)


def _elem_ord_at(e: FieldElem, d0: RationalFunction, point: complex | None) -> float:
    """Order of u + v*sqrt(D0); the sqrt contributes half of D0's order."""
    ou = _ord_at(e.u, point)
    if e.v.is_zero():
        return ou
    ov = _ord_at(e.v, point) + _ord_at(d0, point) / 2.0
    return max(ou, ov)


def hypothesis_check(eq: RiccatiEquation, x0: complex, theta: float, alpha,
                     max_arclength: float = 40.0) -> HypothesisReport:
    """Check the simplified existence hypotheses along the (theta, alpha)-ray.

    (1) the ray from x0 misses turning points and either closes or limits to a
        pole of D0 of order >= 2 (infinity included);
    (2) order bounds at the limit point: either the raw bounds
        2*ord(a_k), 2*ord(b_k), 2*ord(c_k) <= ord(D0) for every k, or the
        monic bounds 2*ord(p_k) <= ord(D0), ord(q_k) <= ord(D0).
    Closed rays skip (2).
    """
    from .geometry import LiouvilleFrame, trace_ray

    eps = _sign_value(alpha)
    frame = LiouvilleFrame(eq, x0, theta, eps)
    ray = trace_ray(frame, x0, max_arclength=max_arclength)
    kind = ray.classification.kind
    ray_ok = kind in ("closed", "infinite_to_pole")
    limit_point = None
    d0_ord: float | None = None
    skip_ord = kind == "closed"

    if kind == "infinite_to_pole":
        limit_point = ray.classification.pole  # None encodes infinity
        d0_ord = _ord_at(eq.d0, limit_point)
        if d0_ord < 2 and limit_point is not None:
            ray_ok = False
    raw_checks: list[OrdCheck] = []
    monic_checks: list[OrdCheck] = []
    raw_ok = monic_ok = False
    log_deriv_ok = True

    if ray_ok and not skip_ord:
        d0_ord = _ord_at(eq.d0, limit_point)
        raw_ok = True
        for label, lst in (("a", eq.a), ("b", eq.b), ("c", eq.c)):
            for k, coeff in enumerate(lst):
                o = _elem_ord_at(coeff, eq.d0, limit_point)
                ok = 2 * o <= d0_ord or o == -math.inf
                raw_checks.append(OrdCheck(label, k, o, d0_ord / 2.0, ok))
                raw_ok = raw_ok and ok
        try:
            p, q = eq.monic_form_coeffs()
        except ValueError:
            monic_ok = False
        else:
            monic_ok = True
            for k, coeff in enumerate(p):
                o = _elem_ord_at(coeff, eq.d0, limit_point)
                ok = 2 * o <= d0_ord or o == -math.inf
                monic_checks.append(OrdCheck("p", k, o, d0_ord / 2.0, ok))
                monic_ok = monic_ok and ok
            for k, coeff in enumerate(q):
                o = _elem_ord_at(coeff, eq.d0, limit_point)
                ok = o <= d0_ord or o == -math.inf
                monic_checks.append(OrdCheck("q", k, o, d0_ord, ok))
                monic_ok = monic_ok and ok
        # hypothesis (3): d/dx log D0 bounded by D0 near the limit point
        log_d = eq.d0.derivative() / eq.d0
        log_deriv_ok = _ord_at(log_d, limit_point) <= _ord_at(eq.d0, limit_point)
        monic_ok = monic_ok and log_deriv_ok
    elif skip_ord:
        raw_ok = True
        monic_ok = True

    a0_ok = True
    if eps < 0:
        if eq.a0_is_zero():
            a0_ok = False
        else:
            # sample a0 along the traced ray
            for xval, wval in zip(ray.x[:: max(1, len(ray.x) // 64)],
                                  ray.sqrt_d0[:: max(1, len(ray.x) // 64)]):
                try:
                    val = eq.a0.evaluate(xval, sqrt_d0_value=wval)
                except Exception:
                    a0_ok = False
                    break
                if abs(val) < 1e-12:
                    a0_ok = False
                    break

    return HypothesisReport(
        theta=theta,
        alpha=eps,
        x0=x0,
        ray_kind=kind,
        limit_point=limit_point,
        ray_ok=ray_ok,
        d0_order=d0_ord,
        raw_checks=raw_checks,
        monic_checks=monic_checks,
        raw_ok=raw_ok,
        monic_ok=monic_ok,
        log_deriv_ok=log_deriv_ok,
        a0_nonvanishing_on_ray=a0_ok,
    )
