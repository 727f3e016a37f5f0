"""WKB geometry: the Liouville transformation, trajectory tracing and
classification, and halfstrip validation by probe rays.

Rays are integrated in unit Phi-speed form dx/dt = eps_alpha e^{i theta} /
sqrt(D0)(x), so the trace parameter t coincides with arclength in the
straightened z-plane; the Borel lattice consumes the samples directly.
"""

from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .errors import NoHalfStrip, PathThroughSingularity, RootFindingFailed
from .field import BranchContext, RationalFunction, polynomial_roots
from .formal import RiccatiEquation, _sign_value
from .numerics import adaptive_quadrature, dp45_step

ESCAPE_RADIUS = 1e6
POLE_PROXIMITY = 1e-6
TURNING_POINT_FACTOR = 1e-8
CLOSURE_TOL = 1e-6


def thread_count() -> int:
    env = os.environ.get("BOREL_RICCATI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def turning_points(eq: RiccatiEquation) -> list[complex]:
    """Roots of the numerator of D0, Newton-refined."""
    roots = polynomial_roots(eq.d0.num)
    num = eq.d0.num
    scale = max(abs(complex(c)) for c in num.coeffs) if num.coeffs else 1.0
    for r in roots:
        resid = abs(num(r))
        local = scale * max(1.0, abs(r)) ** max(num.degree(), 0)
        if resid > 1e-12 * local:
            raise RootFindingFailed(f"turning point at {r} has residual {resid}")
    return roots


@dataclass
class LiouvilleFrame:
    """Basepoint, branch and direction data for one resummation run."""

    eq: RiccatiEquation
    x0: complex
    theta: float
    alpha: int
    branch_sign: int = 1

    def __post_init__(self):
        self.alpha = _sign_value(self.alpha)
        if self.eq.tower.sqrt_rational is not None:
            # degenerate tower: the preferred root is the rational b0 itself,
            # so the numeric branch must agree with it at the basepoint
            import cmath as _cmath
            target = self.eq.tower.sqrt_rational(self.x0)
            principal = _cmath.sqrt(self.eq.d0(self.x0))
            self.branch_sign = 1 if abs(principal - target) <= abs(principal + target) else -1
        self.branch = BranchContext(self.eq.d0, self.x0, self.branch_sign)

    def eps(self) -> int:
        return self.alpha

    def rotation(self) -> complex:
        """Multiplier taking Phi to the straightened coordinate zeta."""
        return self.alpha * cmath.exp(-1j * self.theta)


def liouville_map(frame: LiouvilleFrame, x: complex,
                  path: Sequence[complex] | None = None,
                  tol: float = 1e-11) -> complex:
    """Phi(x) = int_{x0}^{x} sqrt(D0), branch-continued along a polyline.

    The default path is the straight segment.  Each segment is integrated
    with adaptive Gauss-Kronrod panels; the branch is continued through the
    ordered panel evaluations.
    """
    vertices = [frame.x0, *(path or ()), x]
    d0 = frame.eq.d0
    tps = frame.eq.turning_points()
    total = 0j
    w_ref = frame.branch.sqrt_at_basepoint()
    for a, b in zip(vertices[:-1], vertices[1:]):
        if a == b:
            continue
        seg_len = abs(b - a)
        for tp in tps:
            # distance from the segment [a, b] to the turning point
            u = (tp - a) / (b - a)
            s = min(max(u.real, 0.0), 1.0)
            if abs(a + s * (b - a) - tp) < 1e-9 * max(1.0, seg_len):
                raise PathThroughSingularity(f"path passes through turning point {tp}")
        total_seg, w_ref = _segment_integral(d0, a, b, w_ref, tol)
        total += total_seg
    return total


def _segment_integral(d0: RationalFunction, a: complex, b: complex,
                      w_start: complex, tol: float, depth: int = 0):
    """Integral of the continued sqrt(D0) over [a, b]; returns (value, w_end)."""
    w_end = _match_sqrt(d0, b, w_start)
    w_mid = _match_sqrt(d0, (a + b) / 2, w_start)
    turned = (w_mid / w_start).real <= 0.05 or (w_end / w_mid).real <= 0.05
    if not turned:
        w_box = [w_start]

        def integrand(xs: np.ndarray) -> np.ndarray:
            vals = np.sqrt(d0(xs))
            flip = np.abs(vals - w_box[0]) > np.abs(vals + w_box[0])
            vals = np.where(flip, -vals, vals)
            return vals

        # single-panel branch matching is only safe when the argument of
        # sqrt(D0) stays well within a half-turn across the panel
        args_ok = True
        probe = np.array([a + s * (b - a) for s in (0.1, 0.3, 0.5, 0.7, 0.9)])
        vals = integrand(probe)
        rel = vals[1:] / vals[:-1]
        if np.any(rel.real <= 0.05):
            args_ok = False
        if args_ok:
            value = adaptive_quadrature(integrand, a, b, tol=tol)
            return value, w_end
    if depth >= 48:
        raise PathThroughSingularity(f"cannot continue sqrt(D0) across [{a}, {b}]")
    mid = (a + b) / 2
    v1, w_mid = _segment_integral(d0, a, mid, w_start, tol, depth + 1)
    v2, w_end = _segment_integral(d0, mid, b, w_mid, tol, depth + 1)
    return v1 + v2, w_end


def _match_sqrt(d0: RationalFunction, x: complex, w_ref: complex) -> complex:
    s = cmath.sqrt(d0(x))
    return s if abs(s - w_ref) <= abs(s + w_ref) else -s


# ---------------------------------------------------------------------------
# Ray tracing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RayClassification:
    kind: str                      # infinite_to_pole | escapes_domain |
    #                                hits_turning_point | closed | unclassified
    pole: complex | None = None    # for infinite_to_pole; None means infinity
    turning_point: complex | None = None
    t_hit: float | None = None
    period: float | None = None


@dataclass
class RayTrace:
    """Unit-speed trace of a WKB (theta, alpha)-ray."""

    t: np.ndarray
    x: np.ndarray
    sqrt_d0: np.ndarray
    classification: RayClassification
    theta: float
    alpha: int

    def arclength(self) -> float:
        return float(self.t[-1]) if len(self.t) else 0.0

    def to_csv(self, frame: LiouvilleFrame | None = None) -> str:
        lines = ["t,x_re,x_im,z_re,z_im"]
        z = np.asarray(self.t, dtype=complex)
        if frame is not None:
            z = frame.alpha * np.exp(1j * frame.theta) * self.t
        for ti, xi, zi in zip(self.t, self.x, z):
            lines.append(f"{ti!r},{xi.real!r},{xi.imag!r},{zi.real!r},{zi.imag!r}")
        c = self.classification
        extra = ""
        if c.kind == "infinite_to_pole":
            extra = "infinity" if c.pole is None else f"{c.pole.real!r}{c.pole.imag:+}j"
        elif c.kind == "hits_turning_point":
            extra = f"{c.turning_point.real!r}{c.turning_point.imag:+}j at t={c.t_hit!r}"
        elif c.kind == "closed":
            extra = f"period={c.period!r}"
        lines.append(f"# classification: {c.kind} {extra}".rstrip())
        return "\n".join(lines) + "\n"


class _RayIntegrator:
    """DP45 on dx/dt = eps e^{i theta} / sqrt(D0)(x) with branch tracking.

    A turning-point event fires as soon as any stage evaluation comes within
    ``tp_radius`` of a turning point; waiting for |D0| itself to vanish would
    let the stepper jump across the singularity onto another sheet.
    """

    TP_RADIUS = 1e-3

    def __init__(self, frame: LiouvilleFrame, x_start: complex):
        self.frame = frame
        self.d0 = frame.eq.d0
        self.tps = frame.eq.turning_points()
        self.direction = frame.alpha * cmath.exp(1j * frame.theta)
        self.w_ref = frame.branch.sqrt_at(x_start) if x_start != frame.x0 \
            else frame.branch.sqrt_at_basepoint()

    def _local_scale(self, x: complex) -> float:
        num = self.d0.num
        mags = [abs(complex(c)) for c in num.coeffs] or [1.0]
        return max(mags) * max(1.0, abs(x)) ** max(num.degree(), 0)

    def nearest_tp(self, x: complex):
        if not self.tps:
            return None, math.inf
        tp = min(self.tps, key=lambda p: abs(p - x))
        return tp, abs(tp - x) / max(1.0, abs(tp))

    def rhs(self, t: float, x: complex) -> complex:
        tp, dist = self.nearest_tp(x)
        if dist < self.TP_RADIUS:
            raise _TurningPointSignal(x, tp)
        if abs(self.d0(x)) < TURNING_POINT_FACTOR * self._local_scale(x):
            raise _TurningPointSignal(x, tp)
        w = _match_sqrt(self.d0, x, self.w_ref)
        return self.direction / w

    def advance(self, x: complex) -> complex:
        self.w_ref = _match_sqrt(self.d0, x, self.w_ref)
        return self.w_ref


class _TurningPointSignal(Exception):
    def __init__(self, x: complex, tp: complex | None = None):
        self.x = x
        self.tp = tp


def trace_ray(frame: LiouvilleFrame, x_start: complex,
              max_arclength: float = 50.0, rel_tol: float = 1e-10,
              record_step: float | None = None) -> RayTrace:
    """Trace the (theta, alpha)-ray from x_start and classify its end.

    ``record_step`` forces samples at exact multiples of the given t-step
    (the Borel lattice wants shared-step nodes); by default samples land
    wherever the adaptive stepper does.
    """
    integ = _RayIntegrator(frame, x_start)
    d0_poles = frame.eq.d0_poles()
    tps = frame.eq.turning_points()

    ts = [0.0]
    xs = [x_start]
    ws = [integ.w_ref]
    t, x = 0.0, x_start
    h = min(0.01, max_arclength / 10)
    classification: RayClassification | None = None
    v0 = integ.rhs(0.0, x_start)
    capture = 0.05 * max(1.0, abs(x_start))
    armed = False  # closure checks enabled once the ray has left the start
    geom_scale = max([1.0, abs(x_start)] + [abs(p) for p in tps]
                     + [abs(p) for p in d0_poles])
    outward_run = 0  # consecutive confidently-outward accepted steps

    while t < max_arclength:
        target = None
        if record_step is not None:
            target = (math.floor(t / record_step + 1e-12) + 1) * record_step
            h = min(h, target - t)
        if t + h > max_arclength:
            h = max_arclength - t
        try:
            x_new, err = dp45_step(integ.rhs, t, x, h)
        except _TurningPointSignal as sig:
            classification = _tp_classification(frame, integ, sig, x, t)
            break
        scale = rel_tol * max(1.0, abs(x), abs(x_new))
        if err > scale:
            h *= max(0.2, 0.9 * (scale / err) ** 0.2)
            if h < 1e-13 * max(1.0, abs(t)):
                tp, _ = integ.nearest_tp(x)
                classification = RayClassification(
                    "hits_turning_point", turning_point=tp if tp is not None else x,
                    t_hit=t)
                break
            continue
        t += h
        x = x_new
        w = integ.advance(x)
        if record_step is None or (target is not None and abs(t - target) < 1e-12):
            ts.append(t)
            xs.append(x)
            ws.append(w)
        factor = 2.0 if err == 0 else min(2.0, 0.9 * (scale / err) ** 0.2)
        h *= factor

        if abs(x) > ESCAPE_RADIUS:
            classification = _far_field_classification(frame.eq)
            break
        # early escape-to-infinity certificate: sustained, strongly outward
        # motion well past every finite critical point
        if abs(x) > 3.0 * geom_scale:
            v_out = x_new - xs[-1] if len(xs) else x_new
            radial = (v_out * x.conjugate()).real
            if radial > 0.2 * abs(v_out) * abs(x):
                outward_run += 1
            else:
                outward_run = 0
            if outward_run >= 12 and frame.eq.d0.order_at_infinity() >= -2:
                classification = RayClassification("infinite_to_pole", pole=None)
                break
        else:
            outward_run = 0
        hit_pole = next((p for p in d0_poles
                         if abs(x - p) < POLE_PROXIMITY * max(1.0, abs(p))), None)
        if hit_pole is not None:
            classification = RayClassification("infinite_to_pole", pole=hit_pole)
            break
        dist_start = abs(x - x_start)
        if not armed and dist_start > 2 * capture:
            armed = True
        elif armed and dist_start < capture:
            period = _refine_closure(integ, t, x, x_start, v0)
            if period is not None:
                classification = RayClassification("closed", period=period)
                break
            armed = False

    if classification is None:
        classification = _limit_point_analysis(frame.eq, np.array(xs[-24:], dtype=complex),
                                               d0_poles)
    return RayTrace(
        t=np.array(ts),
        x=np.array(xs, dtype=complex),
        sqrt_d0=np.array(ws, dtype=complex),
        classification=classification,
        theta=frame.theta,
        alpha=frame.alpha,
    )


def _refine_closure(integ: _RayIntegrator, t: float, x: complex,
                    x_start: complex, v0: complex) -> float | None:
    """Newton-refine the closest passage to the start; return the period.

    Solves Re[(x(t) - x_start) conj(x'(t))] = 0 (perpendicular passage) and
    accepts when the refined point closes within tolerance with aligned
    velocity.
    """
    from .numerics import integrate_fixed_endpoint

    t_c, x_c = t, x
    w_save = integ.w_ref
    try:
        for _ in range(60):
            v = integ.rhs(t_c, x_c)
            g = ((x_c - x_start) * v.conjugate()).real
            dt = -g / (abs(v) ** 2)
            if abs(dt) < 1e-15 * max(1.0, t_c):
                break
            x_c = integrate_fixed_endpoint(integ.rhs, t_c, t_c + dt, x_c)
            t_c += dt
        v_c = integ.rhs(t_c, x_c)
    except Exception:
        integ.w_ref = w_save
        return None
    integ.w_ref = w_save
    align = (v_c / v0).real / abs(v_c / v0)
    if abs(x_c - x_start) < CLOSURE_TOL * max(1.0, abs(x_start)) and align > 0.999:
        return t_c
    return None


def _tp_classification(frame: LiouvilleFrame, integ: _RayIntegrator,
                       sig: _TurningPointSignal, x_last: complex,
                       t_last: float) -> RayClassification:
    """Pin the hit location and estimate the remaining Phi-arclength."""
    tp = sig.tp if sig.tp is not None else sig.x
    t_hit = t_last
    try:
        d0 = frame.eq.d0
        w_box = [integ.w_ref]

        def integrand(xs_: np.ndarray) -> np.ndarray:
            vals = np.sqrt(d0(xs_))
            flip = np.abs(vals - w_box[0]) > np.abs(vals + w_box[0])
            return np.where(flip, -vals, vals)

        t_hit = t_last + abs(adaptive_quadrature(integrand, x_last, tp, tol=1e-10))
    except Exception:
        pass
    return RayClassification("hits_turning_point", turning_point=tp, t_hit=t_hit)


def _far_field_classification(eq: RiccatiEquation) -> RayClassification:
    # Phi-distance to infinity diverges iff ord_infinity(D0) >= -2: reaching
    # the escape radius in finite arclength means D0 decays faster than that.
    if eq.d0.order_at_infinity() >= -2:
        return RayClassification("infinite_to_pole", pole=None)
    return RayClassification("escapes_domain")


def _limit_point_analysis(eq: RiccatiEquation, tail: np.ndarray,
                          d0_poles: list[complex]) -> RayClassification:
    """Classify a ray that exhausted max_arclength by its tail behavior.

    Poles of D0 of order >= 2 (infinity included) sit at infinite
    Phi-distance, so rays limiting to them never trigger proximity stops;
    monotone approach over the recorded tail is the certificate used instead.
    """
    if len(tail) < 6:
        return RayClassification("unclassified")
    radii = np.abs(tail)
    geom_scale = max([1.0] + [abs(tp) for tp in eq.turning_points()]
                     + [abs(p) for p in d0_poles])
    outward = np.all(np.diff(radii) > 0)
    if outward and radii[-1] > 3.0 * geom_scale and eq.d0.order_at_infinity() >= -2:
        return RayClassification("infinite_to_pole", pole=None)
    for p in d0_poles:
        dist = np.abs(tail - p)
        if np.all(np.diff(dist) < 0) and dist[-1] < 0.2 * max(1.0, abs(p)):
            if eq.d0.order_at(p) >= 2:
                return RayClassification("infinite_to_pole", pole=p)
    return RayClassification("unclassified")


def advance_along_z(frame: LiouvilleFrame, x_from: complex, dz: complex,
                    rel_tol: float = 1e-11) -> complex:
    """Follow Phi^{-1}: move x so that Phi changes by exactly dz."""
    if dz == 0:
        return x_from
    integ = _RayIntegrator(frame, x_from)
    direction = dz / abs(dz)

    def rhs(t: float, x: complex) -> complex:
        val = integ.d0(x)
        if abs(val) < (TURNING_POINT_FACTOR * integ._local_scale(x)) ** 2:
            raise PathThroughSingularity(f"z-advance hits a turning point near {x}")
        w = _match_sqrt(integ.d0, x, integ.w_ref)
        integ.w_ref = w
        return direction / w

    from .numerics import integrate_fixed_endpoint
    return integrate_fixed_endpoint(rhs, 0.0, abs(dz), x_from, rel_tol=rel_tol)


# ---------------------------------------------------------------------------
# Halfstrips
# ---------------------------------------------------------------------------

@dataclass
class HalfStrip:
    center_ray: RayTrace
    radius: float
    theta: float
    alpha: int
    probe_rays: list[RayTrace] = dc_field(default_factory=list)

    def classification_kind(self) -> str:
        return self.center_ray.classification.kind


def probe_halfstrip(frame: LiouvilleFrame, x0: complex, r_target: float,
                    n_probes: int = 8, max_arclength: float = 50.0,
                    max_bisections: int = 8) -> HalfStrip:
    """Validate a halfstrip radius by tracing offset probe rays.

    Probes start at Phi-offsets i*s*e^{i theta} for s in (-r, r).  The radius
    is bisected until every probe classification matches the center ray's;
    the largest validated radius <= r_target is returned.
    """
    center = trace_ray(frame, x0, max_arclength=max_arclength)
    kind = center.classification.kind
    if kind not in ("infinite_to_pole", "closed", "unclassified"):
        raise NoHalfStrip(f"center ray is {kind}")
    if kind == "unclassified":
        raise NoHalfStrip("center ray could not be classified as infinite or closed")

    def probes_match(r: float) -> tuple[bool, list[RayTrace]]:
        offsets = [r * (k + 1) / ((n_probes + 1) // 2) for k in range((n_probes + 1) // 2)]
        offsets = [s for off in offsets for s in (+off, -off)][:n_probes]
        rot = cmath.exp(1j * frame.theta)
        rays: list[RayTrace] = []

        def one(off: float) -> RayTrace | None:
            try:
                x_probe = advance_along_z(frame, x0, 1j * off * rot * 0.999)
                return trace_ray(frame, x_probe, max_arclength=max_arclength)
            except Exception:
                return None

        with ThreadPoolExecutor(max_workers=thread_count()) as pool:
            results = list(pool.map(one, offsets))
        ok = True
        for ray in results:
            if ray is None or ray.classification.kind != kind:
                ok = False
            else:
                rays.append(ray)
        if ok and kind == "closed":
            periods = [r_.classification.period for r_ in rays] + [center.classification.period]
            ok = max(periods) - min(periods) < 1e-8 * max(periods)
        return ok, rays

    r = r_target
    ok, rays = probes_match(r)
    bisections = 0
    while not ok and bisections < max_bisections:
        r /= 2
        ok, rays = probes_match(r)
        bisections += 1
    if not ok:
        raise NoHalfStrip(f"no validated halfstrip radius down to {r}")
    return HalfStrip(center_ray=center, radius=r, theta=frame.theta,
                     alpha=frame.alpha, probe_rays=rays)


def trace_lattice_nodes(frame: LiouvilleFrame, x_start: complex, h: float,
                        count: int, rel_tol: float = 1e-11):
    """Ray samples at t = 0, h, ..., count*h (exact lattice nodes).

    Returns (x_nodes, sqrt_d0_nodes) as complex arrays of length count+1.
    Raises PathThroughSingularity when the ray cannot be continued that far.
    """
    integ = _RayIntegrator(frame, x_start)
    xs = np.empty(count + 1, dtype=complex)
    ws = np.empty(count + 1, dtype=complex)
    xs[0] = x_start
    ws[0] = integ.w_ref
    from .numerics import StepFailed, integrate_fixed_endpoint
    x = x_start
    for j in range(1, count + 1):
        try:
            x = integrate_fixed_endpoint(
                lambda t, y: integ.rhs(t, y), (j - 1) * h, j * h, x, rel_tol=rel_tol)
        except (_TurningPointSignal, StepFailed) as exc:
            raise PathThroughSingularity(
                f"lattice ray stops near node {j} (of {count}): {exc}") from exc
        xs[j] = x
        ws[j] = integ.advance(x)
    return xs, ws
