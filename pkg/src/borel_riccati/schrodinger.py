"""Exact WKB solutions of hbar^2 psi'' = q psi built from canonical exact
Riccati solutions, with hypothesis checking and Wronskian verification.

The WKB ansatz psi = exp(-(1/hbar) int f) turns the equation into
hbar f' = f^2 - q; both canonical solutions f_+/- feed the basis
psi_+/- normalized to 1 at the basepoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

from .errors import NoHalfStrip
from .field import RationalFunction
from .formal import RiccatiEquation, hypothesis_check
from .geometry import LiouvilleFrame, trace_ray
from .numerics import adaptive_polyline_quadrature
from .parsing import parse_rational
from .resum import PipelineSettings, Resummation, build_resummation


class SchrodingerProblem:
    """Potential q(x, hbar) = sum q_k(x) hbar^k and its derived Riccati data."""

    def __init__(self, q, x0: complex):
        self.q = [qk if isinstance(qk, RationalFunction) else parse_rational(qk)
                  for qk in q]
        self.x0 = x0
        self.riccati = RiccatiEquation([RationalFunction.constant(1)],
                                       [RationalFunction.constant(0)],
                                       [-qk for qk in self.q])

    @property
    def q0(self) -> RationalFunction:
        return self.q[0]


@dataclass
class WkbHypothesisReport:
    pole_conditions: list[dict]
    poles_ok: bool
    plus_ray: str
    minus_ray: str
    rays_ok: bool

    @property
    def passed(self) -> bool:
        return self.poles_ok and self.rays_ok

    def summary(self) -> dict:
        return {
            "poles_ok": self.poles_ok,
            "plus_ray": self.plus_ray,
            "minus_ray": self.minus_ray,
            "rays_ok": self.rays_ok,
            "passed": self.passed,
            "pole_conditions": self.pole_conditions,
        }


def check_wkb_hypotheses(problem: SchrodingerProblem, theta: float = 0.0,
                         max_arclength: float = 40.0) -> WkbHypothesisReport:
    """Verify the pole-order conditions and trace both rays of Gamma(x0).

    Polynomial potentials use the degree conditions (infinity as the pole);
    rational potentials additionally need every finite pole of each q_k to be
    a pole of q0 of order >= 2 with ord(q_k) <= ord(q0).
    """
    from .field import polynomial_roots

    q0 = problem.q0
    conditions: list[dict] = []
    ok = True

    polynomial_input = all(qk.den.degree() == 0 for qk in problem.q)
    if polynomial_input:
        d0 = max(q0.num.degree(), 0)
        for k, qk in enumerate(problem.q):
            dk = qk.num.degree()
            cond = dk <= d0
            conditions.append({"k": k, "kind": "degree", "value": dk,
                               "bound": d0, "ok": cond})
            ok = ok and cond
    else:
        pole_set = polynomial_roots(q0.den)
        for p in pole_set:
            o0 = q0.order_at(p)
            cond = o0 >= 2
            conditions.append({"k": 0, "kind": "pole-order",
                               "pole": [p.real, p.imag], "value": o0,
                               "bound": 2, "ok": cond})
            ok = ok and cond
            for k, qk in enumerate(problem.q[1:], start=1):
                okk = qk.order_at(p) <= o0
                conditions.append({"k": k, "kind": "pole-order",
                                   "pole": [p.real, p.imag],
                                   "value": qk.order_at(p), "bound": o0,
                                   "ok": okk})
                ok = ok and okk
        for k, qk in enumerate(problem.q[1:], start=1):
            for p in polynomial_roots(qk.den):
                shared = any(abs(p - p0) < 1e-7 * max(1.0, abs(p0))
                             for p0 in pole_set)
                if not shared:
                    conditions.append({"k": k, "kind": "pole-location",
                                       "pole": [p.real, p.imag], "ok": False})
                    ok = False
        o_inf0 = q0.order_at_infinity()
        for k, qk in enumerate(problem.q):
            okk = qk.order_at_infinity() <= max(o_inf0, 0) or qk.is_zero()
            conditions.append({"k": k, "kind": "order-at-infinity",
                               "value": qk.order_at_infinity(),
                               "bound": max(o_inf0, 0), "ok": okk})
            ok = ok and okk

    eq = problem.riccati
    ends = []
    for alpha in (+1, -1):
        frame = LiouvilleFrame(eq, problem.x0, theta, alpha)
        ray = trace_ray(frame, problem.x0, max_arclength=max_arclength)
        ends.append(ray.classification.kind)
    rays_ok = all(kind in ("infinite_to_pole", "closed") for kind in ends)
    return WkbHypothesisReport(pole_conditions=conditions, poles_ok=ok,
                               plus_ray=ends[0], minus_ray=ends[1],
                               rays_ok=rays_ok)


@dataclass
class WkbSolution:
    """Samples of one exact WKB solution psi (and psi') normalized at x0."""

    sign: int
    x0: complex
    samples: list[tuple[complex, complex, complex, complex]] = dc_field(
        default_factory=list)  # (x, hbar, psi, dpsi)

    def psi_at(self, x: complex, hbar: complex) -> complex:
        for xs, hs, psi, _ in self.samples:
            if abs(xs - x) < 1e-14 and abs(hs - hbar) < 1e-14:
                return psi
        raise KeyError(f"no sample at ({x}, {hbar})")

    def to_csv(self) -> str:
        lines = ["x_re,x_im,hbar_re,hbar_im,psi_re,psi_im,dpsi_re,dpsi_im"]
        for x, hb, psi, dpsi in self.samples:
            lines.append(",".join(repr(v) for v in (
                x.real, x.imag, hb.real, hb.imag,
                psi.real, psi.imag, dpsi.real, dpsi.imag)))
        return "\n".join(lines) + "\n"


class WkbBasis:
    """The pair (psi_+, psi_-) built from both Riccati resummations.

    Each sign can fail independently (its ray may be singular from the chosen
    basepoint); pass ``signs`` to build a partial basis.
    """

    def __init__(self, problem: SchrodingerProblem, theta: float = 0.0,
                 settings: PipelineSettings | None = None, force: bool = False,
                 signs=(+1, -1)):
        self.problem = problem
        self.theta = theta
        eq = problem.riccati
        chi = eq.tower.sqrt_d0()   # monic path: f = sqrt(D0) g
        self.resum = {}
        for alpha in signs:
            self.resum[alpha] = build_resummation(
                eq, problem.x0, theta, alpha, settings=settings, chi=chi,
                force=force)

    def f_value(self, alpha: int, x: complex, hbar: complex) -> complex:
        return self.resum[alpha].value(x, hbar)[0]

    def psi(self, alpha: int, x: complex, hbar: complex,
            path=None, quad_tol: float = 1e-10) -> tuple[complex, complex]:
        """psi_alpha(x) = exp(-(1/hbar) int_{x0}^x f_alpha) and psi'."""
        import cmath

        res = self.resum[alpha]
        vertices = [self.problem.x0, *(path or ()), x]

        def integrand(ts):
            import numpy as np
            out = np.empty(len(ts), dtype=complex)
            for i, t in enumerate(ts):
                out[i] = res.value(complex(t), hbar)[0]
            return out

        integral = adaptive_polyline_quadrature(integrand, vertices, tol=quad_tol)
        psi = cmath.exp(-integral / hbar)
        fx = res.value(x, hbar)[0]
        return psi, -fx * psi / hbar


def exact_wkb_basis(problem: SchrodingerProblem, theta: float, points,
                    settings: PipelineSettings | None = None,
                    force: bool = False) -> tuple[WkbSolution, WkbSolution]:
    """Both normalized exact WKB solutions sampled at the given (x, hbar)."""
    basis = WkbBasis(problem, theta, settings=settings, force=force)
    out = []
    for alpha in (+1, -1):
        sol = WkbSolution(sign=alpha, x0=problem.x0)
        for x, hbar in points:
            psi, dpsi = basis.psi(alpha, x, hbar)
            sol.samples.append((x, hbar, psi, dpsi))
        out.append(sol)
    return out[0], out[1]


def wronskian(pair: tuple[WkbSolution, WkbSolution], x: complex,
              hbar: complex) -> complex:
    """psi_+ psi_-' - psi_+' psi_-; equals (f_+ - f_-)/hbar at the basepoint.

    With the ansatz psi' = -f psi / hbar this carries an extra 1/hbar
    relative to the bare difference f_+ - f_-.
    """
    plus, minus = pair
    psi_p = dpsi_p = psi_m = dpsi_m = None
    for xs, hs, psi, dpsi in plus.samples:
        if abs(xs - x) < 1e-14 and abs(hs - hbar) < 1e-14:
            psi_p, dpsi_p = psi, dpsi
    for xs, hs, psi, dpsi in minus.samples:
        if abs(xs - x) < 1e-14 and abs(hs - hbar) < 1e-14:
            psi_m, dpsi_m = psi, dpsi
    if psi_p is None or psi_m is None:
        raise KeyError(f"both solutions need a sample at ({x}, {hbar})")
    return psi_p * dpsi_m - dpsi_p * psi_m
