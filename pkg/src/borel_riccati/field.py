"""Exact arithmetic in Q(i)(x) adjoined a square root of the discriminant.

Everything the formal recursion touches lives in the quadratic tower
``Q(i)(x)[sqrt(D0)]``: elements are pairs ``u + v*sqrt(D0)`` of rational
functions over Gaussian rationals.  All operations are exact; floating point
enters only through :func:`FieldElem.evaluate`, which continues the square
root branch along a path.

The tower degenerates when ``sqrt(D0)`` is itself rational (the ``a0 == 0``
case, where the preferred root is ``b0``); elements are then canonicalized to
have zero irrational part so that equality and zero tests stay exact.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import BranchAmbiguous, DivisionByZeroElem, PoleHit

Scalar = Union[int, Fraction, "GaussianRational"]


# ---------------------------------------------------------------------------
# Gaussian rationals
# ---------------------------------------------------------------------------

class GaussianRational:
    """Element of Q(i): exact real and imaginary rational parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if type(re) is Fraction else Fraction(re)
        self.im = im if type(im) is Fraction else Fraction(im)

    @staticmethod
    def coerce(value: Scalar) -> "GaussianRational":
        if isinstance(value, GaussianRational):
            return value
        return GaussianRational(Fraction(value))

    def __add__(self, other):
        other = GaussianRational.coerce(other)
        return GaussianRational(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-GaussianRational.coerce(other))

    def __rsub__(self, other):
        return GaussianRational.coerce(other) + (-self)

    def __mul__(self, other):
        other = GaussianRational.coerce(other)
        if not self.im and not other.im:  # the dominant purely-real case
            return GaussianRational(self.re * other.re)
        return GaussianRational(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = GaussianRational.coerce(other)
        if not self.im and not other.im:
            if not other.re:
                raise ZeroDivisionError("division by zero in Q(i)")
            return GaussianRational(self.re / other.re)
        n = other.re * other.re + other.im * other.im
        if n == 0:
            raise ZeroDivisionError("division by zero in Q(i)")
        return GaussianRational(
            (self.re * other.re + self.im * other.im) / n,
            (self.im * other.re - self.re * other.im) / n,
        )

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = GaussianRational(other)
        if not isinstance(other, GaussianRational):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    def __complex__(self):
        return complex(self.re) + 1j * complex(self.im)

    def __repr__(self):
        return f"GaussianRational({self.re!r}, {self.im!r})"

    def __str__(self):
        return format_gaussian(self)


GR_ZERO = GaussianRational(0)
GR_ONE = GaussianRational(1)


def _frac_str(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_gaussian(g: GaussianRational) -> str:
    """Canonical string; mixed values are parenthesized so they re-parse."""
    if g.im == 0:
        return _frac_str(g.re)
    if g.re == 0:
        if g.im == 1:
            return "i"
        if g.im == -1:
            return "-i"
        return f"{_frac_str(g.im)}*i"
    im = g.im
    sign = "+" if im > 0 else "-"
    im_abs = abs(im)
    im_part = "i" if im_abs == 1 else f"{_frac_str(im_abs)}*i"
    return f"({_frac_str(g.re)}{sign}{im_part})"


# ---------------------------------------------------------------------------
# Polynomials over Q(i)
# ---------------------------------------------------------------------------

class Polynomial:
    """Dense univariate polynomial over Q(i), ascending coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[Scalar] = ()):
        cs = [GaussianRational.coerce(c) for c in coeffs]
        while cs and not cs[-1]:
            cs.pop()
        self.coeffs = tuple(cs)

    # degree of the zero polynomial is -1 by convention
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def leading(self) -> GaussianRational:
        return self.coeffs[-1] if self.coeffs else GR_ZERO

    def __add__(self, other):
        other = _poly_coerce(other)
        re_a, im_a, den_a = _to_int_coeffs(self)
        re_b, im_b, den_b = _to_int_coeffs(other)
        g = math.gcd(den_a, den_b)
        ma, mb = den_b // g, den_a // g
        den = den_a * ma
        n = max(len(re_a), len(re_b))
        re = [0] * n
        im = [0] * n
        for i, (r, s) in enumerate(zip(re_a, im_a)):
            re[i] = r * ma
            im[i] = s * ma
        for i, (r, s) in enumerate(zip(re_b, im_b)):
            re[i] += r * mb
            im[i] += s * mb
        return _from_int_coeffs(re, im, den)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-c for c in self.coeffs)

    def __sub__(self, other):
        return self + (-_poly_coerce(other))

    def __rsub__(self, other):
        return _poly_coerce(other) + (-self)

    def __mul__(self, other):
        other = _poly_coerce(other)
        if self.is_zero() or other.is_zero():
            return Polynomial()
        re_a, im_a, den_a = _to_int_coeffs(self)
        re_b, im_b, den_b = _to_int_coeffs(other)
        n = len(re_a) + len(re_b) - 1
        re = [0] * n
        im = [0] * n
        for i in range(len(re_a)):
            ra, sa = re_a[i], im_a[i]
            if not ra and not sa:
                continue
            for j in range(len(re_b)):
                rb, sb = re_b[j], im_b[j]
                if rb or sb:
                    re[i + j] += ra * rb - sa * sb
                    im[i + j] += ra * sb + sa * rb
        return _from_int_coeffs(re, im, den_a * den_b)

    __rmul__ = __mul__

    def scale(self, s: Scalar) -> "Polynomial":
        s = GaussianRational.coerce(s)
        return Polynomial(c * s for c in self.coeffs)

    def divmod(self, other: "Polynomial"):
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.coeffs)
        dq = len(rem) - len(other.coeffs)
        if dq < 0:
            return Polynomial(), self
        quot = [GR_ZERO] * (dq + 1)
        lead = other.coeffs[-1]
        for k in range(dq, -1, -1):
            c = rem[k + len(other.coeffs) - 1] / lead
            quot[k] = c
            if c:
                for j, b in enumerate(other.coeffs):
                    rem[k + j] = rem[k + j] - c * b
        return Polynomial(quot), Polynomial(rem)

    def monic(self) -> "Polynomial":
        if self.is_zero():
            return self
        lead = self.coeffs[-1]
        return Polynomial(c / lead for c in self.coeffs)

    def derivative(self) -> "Polynomial":
        return Polynomial(c * k for k, c in enumerate(self.coeffs) if k >= 1)

    def __call__(self, x):
        """Horner evaluation; accepts complex scalars or numpy arrays."""
        if isinstance(x, np.ndarray):
            acc = np.zeros_like(x, dtype=complex)
            for c in reversed(self.coeffs):
                acc = acc * x + complex(c)
            return acc
        acc = 0j
        for c in reversed(self.coeffs):
            acc = acc * x + complex(c)
        return acc

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return f"Polynomial({list(map(str, self.coeffs))})"


def _poly_coerce(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    return Polynomial([GaussianRational.coerce(p)])


POLY_ZERO = Polynomial()
POLY_ONE = Polynomial([1])
POLY_X = Polynomial([0, 1])


def _to_int_coeffs(p: Polynomial) -> tuple[list[int], list[int], int]:
    """Clear denominators: (re, im, den) with value sum (re+i im)/den x^k."""
    den = 1
    for c in p.coeffs:
        den = den * c.re.denominator // math.gcd(den, c.re.denominator)
        den = den * c.im.denominator // math.gcd(den, c.im.denominator)
    re = [int(c.re * den) for c in p.coeffs]
    im = [int(c.im * den) for c in p.coeffs]
    return re, im, den


def _from_int_coeffs(re: list[int], im: list[int], den: int) -> Polynomial:
    return Polynomial(
        GaussianRational(Fraction(r, den), Fraction(s, den))
        for r, s in zip(re, im))


def _int_trim(re: list[int], im: list[int]):
    while re and not re[-1] and not im[-1]:
        re.pop()
        im.pop()


def _int_content_strip(re: list[int], im: list[int]):
    g = 0
    for r, s in zip(re, im):
        g = math.gcd(g, r)
        g = math.gcd(g, s)
        if g == 1:
            return
    if g > 1:
        for i in range(len(re)):
            re[i] //= g
            im[i] //= g


def _int_prs_gcd(re_a, im_a, re_b, im_b) -> tuple[list[int], list[int]]:
    """Primitive polynomial-remainder-sequence gcd over Z[i].

    Content is stripped only by integer gcd (Gaussian units/1+i factors may
    remain); the caller normalizes to a monic polynomial over Q(i).
    """
    ra, ia = list(re_a), list(im_a)
    rb, ib = list(re_b), list(im_b)
    _int_content_strip(ra, ia)
    _int_content_strip(rb, ib)
    steps = 0
    while rb:
        if len(ra) < len(rb):
            ra, ia, rb, ib = rb, ib, ra, ia
            continue
        # one pseudo-reduction step: lead(B) * A - lead(A) x^d * B
        lb_r, lb_i = rb[-1], ib[-1]
        la_r, la_i = ra[-1], ia[-1]
        d = len(ra) - len(rb)
        new_r = [la * lb_r - li * lb_i for la, li in zip(ra, ia)]
        new_i = [la * lb_i + li * lb_r for la, li in zip(ra, ia)]
        # subtract conj-consistent multiple: (lead A) * x^d * B
        for j in range(len(rb)):
            new_r[j + d] -= la_r * rb[j] - la_i * ib[j]
            new_i[j + d] -= la_r * ib[j] + la_i * rb[j]
        _int_trim(new_r, new_i)
        steps += 1
        if steps % 3 == 0 or len(new_r) <= 1:
            _int_content_strip(new_r, new_i)
        if len(new_r) >= len(ra):  # no progress; defensive guard
            raise ArithmeticError("pseudo-division failed to reduce degree")
        ra, ia = rb, ib
        rb, ib = new_r, new_i
    return ra, ia


def _int_exact_div(re_p, im_p, den_p: int, re_g, im_g) -> tuple[list[int], list[int], int]:
    """Exact division p/g of integer-coefficient polynomials over Q(i).

    The remainder is known to vanish; the quotient is returned as integer
    pairs over a single denominator.  Each elimination step rescales by the
    norm of g's leading coefficient so all arithmetic stays integral.
    """
    lb_r, lb_i = re_g[-1], im_g[-1]
    norm = lb_r * lb_r + lb_i * lb_i
    rr = list(re_p)
    ri = list(im_p)
    nq = len(re_p) - len(re_g) + 1
    q_r = [0] * nq
    q_i = [0] * nq
    den = den_p
    for k in range(nq - 1, -1, -1):
        top = k + len(re_g) - 1
        tr, ti = rr[top], ri[top]
        if tr or ti:
            # quotient coefficient numerator: lead(R) * conj(lead(g))
            cr = tr * lb_r + ti * lb_i
            ci = ti * lb_r - tr * lb_i
            # rescale everything by norm so the subtraction is integral
            for j in range(top + 1):
                rr[j] *= norm
                ri[j] *= norm
            for j in range(nq):
                q_r[j] *= norm
                q_i[j] *= norm
            den *= norm
            q_r[k] = cr
            q_i[k] = ci
            for j in range(len(re_g)):
                rr[k + j] -= cr * re_g[j] - ci * im_g[j]
                ri[k + j] -= cr * im_g[j] + ci * re_g[j]
        rr[top] = 0
        ri[top] = 0
    return q_r, q_i, den


def _valuation(p: Polynomial) -> int:
    for k, c in enumerate(p.coeffs):
        if c:
            return k
    return 0


def _shift_down(p: Polynomial, v: int) -> Polynomial:
    return Polynomial(p.coeffs[v:]) if v else p


def _int_valuation(re: list[int], im: list[int]) -> int:
    for k, (r, s) in enumerate(zip(re, im)):
        if r or s:
            return k
    return 0


def _reduce_fraction(num: Polynomial, den: Polynomial) -> tuple[Polynomial, Polynomial]:
    """Cancel the polynomial gcd of num/den using integer kernels throughout."""
    re_n, im_n, den_n = _to_int_coeffs(num)
    re_d, im_d, den_d = _to_int_coeffs(den)
    v = min(_int_valuation(re_n, im_n), _int_valuation(re_d, im_d))
    if v:
        re_n, im_n = re_n[v:], im_n[v:]
        re_d, im_d = re_d[v:], im_d[v:]
    if len(re_n) > 1 and len(re_d) > 1:
        re_g, im_g = _int_prs_gcd(re_n, im_n, re_d, im_d)
        if len(re_g) > 1:
            re_n, im_n, den_n = _int_exact_div(re_n, im_n, den_n, re_g, im_g)
            re_d, im_d, den_d = _int_exact_div(re_d, im_d, den_d, re_g, im_g)
    return (_from_int_coeffs(re_n, im_n, den_n),
            _from_int_coeffs(re_d, im_d, den_d))


def poly_gcd(a: Polynomial, b: Polynomial) -> Polynomial:
    """Monic gcd via a primitive PRS over Z[i].

    The shared power of x is split off first, which makes the ubiquitous
    monomial-denominator case O(1).
    """
    if a.is_zero():
        return b.monic() if not b.is_zero() else b
    if b.is_zero():
        return a.monic()
    va, vb = _valuation(a), _valuation(b)
    v = min(va, vb)
    a = _shift_down(a, va)
    b = _shift_down(b, vb)
    if a.degree() == 0 or b.degree() == 0:
        g = POLY_ONE
    else:
        re_a, im_a, _ = _to_int_coeffs(a)
        re_b, im_b, _ = _to_int_coeffs(b)
        re_g, im_g = _int_prs_gcd(re_a, im_a, re_b, im_b)
        g = _from_int_coeffs(re_g, im_g, 1).monic()
    if v:
        g = g * Polynomial([GR_ZERO] * v + [GR_ONE])
    return g


# ---------------------------------------------------------------------------
# Rational functions
# ---------------------------------------------------------------------------

class RationalFunction:
    """Quotient of polynomials, always reduced with a monic denominator."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=POLY_ONE, _reduced=False):
        num = _poly_coerce(num)
        den = _poly_coerce(den)
        if den.is_zero():
            raise ZeroDivisionError("rational function with zero denominator")
        if not _reduced:
            if num.is_zero():
                den = POLY_ONE
            elif den.degree() > 0:
                num, den = _reduce_fraction(num, den)
            lead = den.leading()
            if lead != GR_ONE:
                num = Polynomial(c / lead for c in num.coeffs)
                den = Polynomial(c / lead for c in den.coeffs)
        self.num = num
        self.den = den

    # -- constructors --------------------------------------------------------

    @staticmethod
    def constant(value: Scalar) -> "RationalFunction":
        return RationalFunction(Polynomial([GaussianRational.coerce(value)]))

    @staticmethod
    def x() -> "RationalFunction":
        return RationalFunction(POLY_X)

    @staticmethod
    def from_string(text: str) -> "RationalFunction":
        from .parsing import parse_rational
        return parse_rational(text)

    # -- predicates ----------------------------------------------------------

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_constant(self) -> bool:
        return self.num.degree() <= 0 and self.den.degree() == 0

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = _rf_coerce(other)
        return RationalFunction(self.num * other.den + other.num * self.den,
                                self.den * other.den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den, _reduced=True)

    def __sub__(self, other):
        return self + (-_rf_coerce(other))

    def __rsub__(self, other):
        return _rf_coerce(other) + (-self)

    def __mul__(self, other):
        other = _rf_coerce(other)
        return RationalFunction(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _rf_coerce(other)
        if other.is_zero():
            raise ZeroDivisionError("division by zero rational function")
        return RationalFunction(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        return _rf_coerce(other) / self

    def __pow__(self, n: int):
        if n < 0:
            return RationalFunction.constant(1) / self ** (-n)
        out = RationalFunction.constant(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def derivative(self) -> "RationalFunction":
        return RationalFunction(
            self.num.derivative() * self.den - self.num * self.den.derivative(),
            self.den * self.den,
        )

    # -- analysis -------------------------------------------------------------

    def order_at_infinity(self) -> float:
        """Growth order at infinity: deg(num) - deg(den); -inf for zero."""
        if self.is_zero():
            return -math.inf
        return self.num.degree() - self.den.degree()

    def order_at(self, point: complex, tol: float = 1e-7) -> float:
        """Pole order at a finite point (negative = zero of that order).

        Root multiplicities are counted numerically by clustering, so `point`
        should come from the same root-finding pass as the poles themselves.
        """
        if self.is_zero():
            return -math.inf
        den_mult = _root_multiplicity(self.den, point, tol)
        num_mult = _root_multiplicity(self.num, point, tol)
        return den_mult - num_mult

    def __call__(self, x):
        """Evaluate at complex points; raises PoleHit near denominator zeros."""
        n = self.num(x)
        d = self.den(x)
        if isinstance(x, np.ndarray):
            scale = _poly_scale(self.den, np.abs(x))
            if np.any(np.abs(d) <= 1e-13 * scale):
                raise PoleHit("evaluation at a pole of a rational function")
            return n / d
        scale = _poly_scale(self.den, abs(x))
        if abs(d) <= 1e-13 * scale:
            raise PoleHit(f"evaluation at a pole near x={x}")
        return n / d

    def __eq__(self, other):
        if isinstance(other, (int, Fraction, GaussianRational)):
            other = RationalFunction.constant(other)
        if not isinstance(other, RationalFunction):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __repr__(self):
        return f"RationalFunction({self.to_string()!r})"

    def to_string(self) -> str:
        from .parsing import rational_to_string
        return rational_to_string(self)


def _rf_coerce(r) -> RationalFunction:
    if isinstance(r, RationalFunction):
        return r
    if isinstance(r, (int, Fraction, GaussianRational)):
        return RationalFunction.constant(r)
    if isinstance(r, Polynomial):
        return RationalFunction(r)
    if isinstance(r, str):
        return RationalFunction.from_string(r)
    raise TypeError(f"cannot coerce {type(r)!r} to RationalFunction")


def _poly_scale(p: Polynomial, absx) -> float:
    """Rough magnitude scale of p at |x|, for relative pole tests."""
    mags = [abs(complex(c)) for c in p.coeffs] or [1.0]
    if isinstance(absx, np.ndarray):
        top = np.maximum(1.0, absx) ** p.degree() if p.degree() > 0 else 1.0
        return max(mags) * top
    top = max(1.0, absx) ** p.degree() if p.degree() > 0 else 1.0
    return max(mags) * top


def _root_multiplicity(p: Polynomial, point: complex, tol: float) -> int:
    roots = polynomial_roots(p)
    return int(sum(1 for r in roots if abs(r - point) < tol * max(1.0, abs(point))))


def polynomial_roots(p: Polynomial) -> list[complex]:
    """Numeric roots (numpy companion matrix + Newton polish)."""
    deg = p.degree()
    if deg <= 0:
        return []
    cs = np.array([complex(c) for c in reversed(p.coeffs)])
    roots = np.roots(cs)
    dp = p.derivative()
    polished = []
    for r in roots:
        x = complex(r)
        for _ in range(40):
            fx = p(x)
            dfx = dp(x)
            if dfx == 0:
                break
            step = fx / dfx
            x -= step
            if abs(step) < 1e-15 * max(1.0, abs(x)):
                break
        polished.append(x)
    return polished


RF_ZERO = RationalFunction(POLY_ZERO)
RF_ONE = RationalFunction(POLY_ONE)
RF_X = RationalFunction(POLY_X)


# ---------------------------------------------------------------------------
# The quadratic tower and its elements
# ---------------------------------------------------------------------------

class FieldTower:
    """Ambient data shared by all field elements of one equation.

    ``sqrt_rational`` is set when sqrt(D0) lies in Q(i)(x) itself (the a0 == 0
    case, where the preferred root is b0); the extension is then trivial and
    every element is canonicalized to a purely rational one.
    """

    __slots__ = ("d0", "sqrt_rational")

    def __init__(self, d0: RationalFunction, sqrt_rational: RationalFunction | None = None):
        if d0.is_zero():
            raise ValueError("tower requires a nonzero discriminant")
        self.d0 = d0
        self.sqrt_rational = sqrt_rational

    def elem(self, u=0, v=0) -> "FieldElem":
        return FieldElem(self, _rf_coerce(u), _rf_coerce(v))

    def sqrt_d0(self) -> "FieldElem":
        return self.elem(0, 1)

    def zero(self) -> "FieldElem":
        return self.elem(0, 0)

    def one(self) -> "FieldElem":
        return self.elem(1, 0)

    def __eq__(self, other):
        if not isinstance(other, FieldTower):
            return NotImplemented
        return self.d0 == other.d0 and self.sqrt_rational == other.sqrt_rational

    def __hash__(self):
        return hash((self.d0, self.sqrt_rational))

    def __repr__(self):
        return f"FieldTower(D0={self.d0.to_string()})"


class FieldElem:
    """Element u + v*sqrt(D0) with exact rational-function parts."""

    __slots__ = ("tower", "u", "v")

    def __init__(self, tower: FieldTower, u: RationalFunction, v: RationalFunction):
        if tower.sqrt_rational is not None and not v.is_zero():
            u = u + v * tower.sqrt_rational
            v = RF_ZERO
        self.tower = tower
        self.u = u
        self.v = v

    def _check(self, other: "FieldElem"):
        if self.tower is not other.tower and self.tower != other.tower:
            raise ValueError("field elements from different towers")

    def __add__(self, other):
        other = self._coerce(other)
        self._check(other)
        return FieldElem(self.tower, self.u + other.u, self.v + other.v)

    __radd__ = __add__

    def __neg__(self):
        return FieldElem(self.tower, -self.u, -self.v)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        self._check(other)
        d0 = self.tower.d0
        return FieldElem(
            self.tower,
            self.u * other.u + self.v * other.v * d0,
            self.u * other.v + self.v * other.u,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        self._check(other)
        norm = other.u * other.u - other.v * other.v * self.tower.d0
        if norm.is_zero():
            raise DivisionByZeroElem("field element with identically zero norm")
        conj = FieldElem(self.tower, other.u, -other.v)
        num = self * conj
        return FieldElem(self.tower, num.u / norm, num.v / norm)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def _coerce(self, other) -> "FieldElem":
        if isinstance(other, FieldElem):
            return other
        if isinstance(other, (int, Fraction, GaussianRational, RationalFunction, Polynomial)):
            return self.tower.elem(_rf_coerce(other), 0)
        raise TypeError(f"cannot coerce {type(other)!r} to FieldElem")

    def derivative(self) -> "FieldElem":
        """d/dx, using d(sqrt(D0))/dx = D0'/(2*sqrt(D0)) = (D0'/2D0)*sqrt(D0)."""
        d0 = self.tower.d0
        return FieldElem(
            self.tower,
            self.u.derivative(),
            self.v.derivative() + self.v * d0.derivative() / (2 * d0),
        )

    def is_zero(self) -> bool:
        return self.u.is_zero() and self.v.is_zero()

    def is_rational(self) -> bool:
        return self.v.is_zero()

    def __eq__(self, other):
        try:
            other = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self.u == other.u and self.v == other.v and self.tower == other.tower

    def __hash__(self):
        return hash((self.u, self.v))

    def evaluate(self, x, sqrt_d0_value=None, branch: "BranchContext | None" = None):
        """Numeric value u(x) + v(x)*sqrt(D0)(x).

        The square root is supplied either directly (``sqrt_d0_value``, e.g.
        the branch-continued values along a traced ray) or through a
        :class:`BranchContext`.  Accepts scalars or numpy arrays.
        """
        u = self.u(x)
        if self.v.is_zero():
            return u
        if sqrt_d0_value is None:
            if branch is None:
                raise ValueError("need sqrt_d0_value or a BranchContext")
            sqrt_d0_value = branch.sqrt_at(x)
        return u + self.v(x) * sqrt_d0_value

    def __repr__(self):
        if self.v.is_zero():
            return f"FieldElem({self.u.to_string()})"
        return f"FieldElem({self.u.to_string()} + ({self.v.to_string()})*sqrt(D0))"


# ---------------------------------------------------------------------------
# Branch tracking
# ---------------------------------------------------------------------------

@dataclass
class BranchContext:
    """A chosen square-root branch of D0, continued along paths.

    ``sign_at_basepoint`` fixes the branch relative to the principal square
    root at the basepoint.  Continuation refuses steps whose square-root
    argument jumps by more than pi/2, refining the path until the jump is
    resolved or a turning point is detected.
    """

    d0: RationalFunction
    basepoint: complex
    sign_at_basepoint: int = 1
    continuation_path: tuple[complex, ...] = ()

    MAX_DEPTH = 48

    def sqrt_at_basepoint(self) -> complex:
        w = cmath.sqrt(self.d0(self.basepoint))
        return self.sign_at_basepoint * w

    def sqrt_at(self, x: complex, path: Sequence[complex] | None = None) -> complex:
        """Continue sqrt(D0) from the basepoint to x along a polyline."""
        if path is None:
            path = [*self.continuation_path, x]
        w = self.sqrt_at_basepoint()
        prev = self.basepoint
        for target in path:
            w = self._continue_segment(prev, target, w)
            prev = target
        return w

    def continue_values(self, points: Sequence[complex]) -> list[complex]:
        """Branch values along an ordered point sequence starting near the basepoint."""
        out = []
        w = self.sqrt_at_basepoint()
        prev = self.basepoint
        for x in points:
            w = self._continue_segment(prev, x, w)
            out.append(w)
            prev = x
        return out

    def _continue_segment(self, a: complex, b: complex, w: complex, depth: int = 0) -> complex:
        val = self.d0(b)
        if abs(val) < 1e-24:
            raise BranchAmbiguous(f"path reaches a turning point near x={b}")
        s = cmath.sqrt(val)
        cand = s if abs(s - w) <= abs(s + w) else -s
        # |arg jump| < pi/2 <=> Re(cand/w) > |Im(cand/w)| is too strict; use Re > 0
        ratio = cand / w
        if ratio.real > 0.1:
            return cand
        if depth >= self.MAX_DEPTH:
            raise BranchAmbiguous(
                f"branch continuation ambiguous between x={a} and x={b}"
            )
        mid = (a + b) / 2
        w_mid = self._continue_segment(a, mid, w, depth + 1)
        return self._continue_segment(mid, b, w_mid, depth + 1)
