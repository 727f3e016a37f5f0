"""Command-line front end: JSON configs in, CSV tables and JSON reports out.

Subcommands map onto pipeline stages:

    borel-riccati formal        exact coefficients + Gevrey fit
    borel-riccati trajectories  WKB ray traces and classification summary
    borel-riccati resum         full resummation, sample table, manifest
    borel-riccati schrodinger   exact WKB basis + Wronskian report

Every run writes a manifest carrying the config hash, version, per-stage
diagnostics and timing; emitted data files reference it.  Exit status is 0
iff all thresholds configured for the command are met.
"""

from __future__ import annotations

import argparse
import cmath
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BorelRiccatiError, ConfigParseError
from .field import FieldElem
from .formal import (
    RiccatiEquation,
    formal_solve,
    gevrey_fit,
    hypothesis_check,
    residual_series,
)
from .geometry import LiouvilleFrame, trace_ray
from .parsing import parse_rational
from .resum import PipelineSettings, build_resummation, theta_sweep
from .schrodinger import SchrodingerProblem, exact_wkb_basis, wronskian


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _as_complex(value) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(value[0], value[1])
    raise ConfigParseError(f"expected number or [re, im] pair, got {value!r}")


def _complex_out(z: complex) -> list[float]:
    return [z.real, z.imag]


@dataclass
class GridConfig:
    h: float = 1.0 / 128
    xi_max: float = 12.0
    n_max: int = 60
    tol: float = 1e-10
    z_extent: float = 1.0

    def to_dict(self) -> dict:
        return {"h": self.h, "Xi_max": self.xi_max, "n_max": self.n_max,
                "tol": self.tol, "z_extent": self.z_extent}


@dataclass
class RunConfig:
    """Parsed, canonicalized run configuration."""

    equation: dict
    mode: str = "riccati"            # riccati | monic | schrodinger
    theta: float = 0.0
    alpha: str = "+"
    basepoint: complex = 1.0 + 0j
    branch_sign: int = 1
    formal_order: int = 24
    grid: GridConfig = dc_field(default_factory=GridConfig)
    eval_points: list[tuple[complex, complex]] = dc_field(default_factory=list)
    chi: dict | None = None
    thresholds: dict = dc_field(default_factory=dict)
    outputs: dict = dc_field(default_factory=dict)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        if "equation" not in data:
            raise ConfigParseError("config needs an 'equation' block")
        eq = data["equation"]
        mode = data.get("mode", "riccati")
        if mode not in ("riccati", "monic", "schrodinger"):
            raise ConfigParseError(f"unknown mode {mode!r}")
        if mode == "schrodinger":
            if "q" not in eq:
                raise ConfigParseError("schrodinger mode needs equation.q")
        elif not ({"a", "b", "c"} <= set(eq) or {"p", "q"} <= set(eq)):
            raise ConfigParseError("equation needs a,b,c or p,q lists")
        for key in ("a", "b", "c", "p", "q"):
            for s in eq.get(key, []):
                parse_rational(s)  # fail early with location info
        grid = GridConfig(**{
            {"Xi_max": "xi_max"}.get(k, k): v
            for k, v in data.get("grid", {}).items()})
        points = [(_as_complex(p["x"]), _as_complex(p["hbar"]))
                  for p in data.get("eval_points", [])]
        alpha = data.get("alpha", "+")
        if alpha not in ("+", "-"):
            raise ConfigParseError(f"alpha must be '+' or '-', got {alpha!r}")
        return RunConfig(
            equation={k: list(v) for k, v in eq.items()},
            mode=mode,
            theta=float(data.get("theta", 0.0)),
            alpha=alpha,
            basepoint=_as_complex(data.get("basepoint", 1.0)),
            branch_sign=int(data.get("branch_sign", 1)),
            formal_order=int(data.get("formal_order", 24)),
            grid=grid,
            eval_points=points,
            chi=data.get("chi"),
            thresholds=dict(data.get("thresholds", {})),
            outputs=dict(data.get("outputs", {})),
        )

    def to_dict(self) -> dict:
        return {
            "equation": {k: [parse_rational(s).to_string() for s in v]
                         for k, v in sorted(self.equation.items())},
            "mode": self.mode,
            "theta": self.theta,
            "alpha": self.alpha,
            "basepoint": _complex_out(self.basepoint),
            "branch_sign": self.branch_sign,
            "formal_order": self.formal_order,
            "grid": self.grid.to_dict(),
            "eval_points": [{"x": _complex_out(x), "hbar": _complex_out(hb)}
                            for x, hb in self.eval_points],
            "chi": self.chi,
            "thresholds": self.thresholds,
            "outputs": self.outputs,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    # -- model construction ------------------------------------------------------

    def riccati_equation(self) -> RiccatiEquation:
        eq = self.equation
        if self.mode == "schrodinger":
            problem = self.schrodinger_problem()
            return problem.riccati
        if "a" in eq:
            return RiccatiEquation.from_strings(eq["a"], eq.get("b", ["0"]),
                                                eq.get("c", ["0"]))
        return RiccatiEquation.from_strings(["1"], eq["p"], eq["q"])

    def schrodinger_problem(self) -> SchrodingerProblem:
        return SchrodingerProblem(self.equation["q"], self.basepoint)

    def chi_elem(self, eq: RiccatiEquation) -> FieldElem | None:
        if self.mode == "monic":
            return eq.tower.sqrt_d0()
        if self.chi is None:
            return None
        if self.chi == "sqrt_d0":
            return eq.tower.sqrt_d0()
        rational = parse_rational(self.chi.get("rational", "1"))
        power = int(self.chi.get("sqrt_d0_power", 0))
        elem = eq.tower.elem(rational, 0)
        if power:
            elem = elem * eq.tower.sqrt_d0()
        return elem

    def pipeline_settings(self) -> PipelineSettings:
        return PipelineSettings(
            h=self.grid.h, xi_max=self.grid.xi_max, n_max=self.grid.n_max,
            tol=self.grid.tol, z_extent=self.grid.z_extent,
            formal_order=self.formal_order)


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"invalid JSON: {exc.msg}",
                               line=exc.lineno, column=exc.colno) from exc
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

class Manifest:
    def __init__(self, config: RunConfig, command: str):
        self.data = {
            "tool": "borel-riccati",
            "version": __version__,
            "command": command,
            "config_hash": config.config_hash(),
            "stages": {},
            "files": [],
        }
        self._t0 = time.time()

    def stage(self, name: str, **diagnostics):
        self.data["stages"][name] = {
            "elapsed_s": round(time.time() - self._t0, 6), **diagnostics}

    def add_file(self, path: Path):
        self.data["files"].append(path.name)

    def write(self, out_dir: Path) -> Path:
        self.data["total_elapsed_s"] = round(time.time() - self._t0, 6)
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def _write(out_dir: Path, name: str, text: str, manifest: Manifest) -> Path:
    path = out_dir / name
    path.write_text(text)
    manifest.add_file(path)
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_formal(config: RunConfig, out_dir: Path) -> int:
    manifest = Manifest(config, "formal")
    eq = config.riccati_equation()
    chi = config.chi_elem(eq)
    work = eq.regularized(chi) if chi is not None else eq
    fs = formal_solve(work, config.alpha, config.formal_order)
    manifest.stage("formal_solve", order=fs.order)

    resid = residual_series(work, fs.coeffs, fs.order)
    exact_zero = all(r.is_zero() for r in resid)
    manifest.stage("residual", exact_zero=exact_zero)

    frame = LiouvilleFrame(eq, config.basepoint, config.theta, config.alpha,
                           config.branch_sign)
    fit = gevrey_fit(fs, config.basepoint, frame.branch)
    payload = {
        "alpha": config.alpha,
        "order": fs.order,
        "coefficients": fs.to_strings(),
        "borel_coefficients": [
            {"k": k, "u": e.u.to_string(), "v": e.v.to_string()}
            for k, e in enumerate(fs.borel_coeffs)],
        "residual_exactly_zero": exact_zero,
        "gevrey_fit": {
            "C": fit.C, "M": fit.M, "radius_estimate": fit.radius_estimate,
            "sample_point": _complex_out(fit.sample_point),
            "bound_holds": fit.bound_holds(),
        },
    }
    _write(out_dir, "formal.json", json.dumps(payload, indent=2) + "\n", manifest)
    manifest.write(out_dir)
    return 0 if exact_zero else 1


def cmd_trajectories(config: RunConfig, out_dir: Path, thetas=None,
                     seeds=None) -> int:
    manifest = Manifest(config, "trajectories")
    eq = config.riccati_equation()
    thetas = thetas if thetas is not None else [config.theta]
    if seeds is None:
        seeds = [config.basepoint]
    summary = []
    for ti, theta in enumerate(thetas):
        for si, seed in enumerate(seeds):
            for alpha in ("+", "-"):
                entry = {"theta": theta, "seed": _complex_out(seed),
                         "alpha": alpha}
                try:
                    frame = LiouvilleFrame(eq, seed, theta, alpha,
                                           config.branch_sign)
                    ray = trace_ray(frame, seed, max_arclength=40.0)
                except BorelRiccatiError as exc:
                    entry["error"] = str(exc)
                    summary.append(entry)
                    continue
                name = f"ray_t{ti}_s{si}_{'p' if alpha == '+' else 'm'}.csv"
                _write(out_dir, name, ray.to_csv(frame), manifest)
                c = ray.classification
                entry.update({
                    "classification": c.kind,
                    "file": name,
                    "pole": None if c.pole is None else _complex_out(c.pole),
                    "turning_point": None if c.turning_point is None
                    else _complex_out(c.turning_point),
                    "t_hit": c.t_hit,
                    "period": c.period,
                })
                summary.append(entry)
    manifest.stage("trace", rays=len(summary))
    _write(out_dir, "classification.json",
           json.dumps(summary, indent=2) + "\n", manifest)
    manifest.write(out_dir)
    return 0


def _sample_csv(samples) -> str:
    lines = ["x_re,x_im,hbar_re,hbar_im,f_re,f_im,residual,tail_bound"]
    for s in samples:
        lines.append(",".join(repr(v) for v in (
            s.x.real, s.x.imag, s.hbar.real, s.hbar.imag,
            s.f.real, s.f.imag, s.residual, s.tail_bound)))
    return "\n".join(lines) + "\n"


def cmd_resum(config: RunConfig, out_dir: Path, force: bool = False,
              theta_sweep_spec: str | None = None) -> int:
    manifest = Manifest(config, "resum")
    eq = config.riccati_equation()
    chi = config.chi_elem(eq)
    report = hypothesis_check(eq, config.basepoint, config.theta, config.alpha)
    manifest.stage("hypothesis_check", **report.summary())
    if not report.passed and not force:
        _write(out_dir, "hypothesis_report.json",
               json.dumps(report.summary(), indent=2) + "\n", manifest)
        manifest.write(out_dir)
        print("hypothesis check failed (use --force to attempt anyway)",
              file=sys.stderr)
        return 2

    settings = config.pipeline_settings()
    resum = build_resummation(eq, config.basepoint, config.theta, config.alpha,
                              settings=settings, chi=chi, force=force)
    grid = resum.grid
    manifest.stage("resummation", n_star=grid.n_star,
                   growth_fit={"A": grid.growth_a, "K": grid.growth_k},
                   ie_residual=grid.ie_residual)

    samples = [resum.sample(x, hb) for x, hb in config.eval_points]
    _write(out_dir, "samples.csv", _sample_csv(samples), manifest)
    csv_text, header = grid.export_csv()
    _write(out_dir, "borel_grid.csv", csv_text, manifest)
    _write(out_dir, "borel_grid.json",
           json.dumps(header, indent=2) + "\n", manifest)

    residual_tol = float(config.thresholds.get("residual", 1e-6))
    tail_tol = float(config.thresholds.get("tail", 1e-6))
    ok = all(s.residual < residual_tol and s.tail_bound < tail_tol
             for s in samples)
    manifest.stage("samples", count=len(samples), all_within_thresholds=ok)

    if theta_sweep_spec:
        lo, hi, count = theta_sweep_spec.split(":")
        thetas = list(np.linspace(float(lo), float(hi), int(count)))
        sweep = theta_sweep(eq, config.basepoint, thetas, config.alpha,
                            config.eval_points, settings=settings, chi=chi,
                            force=force)
        manifest.stage("theta_sweep", thetas=thetas,
                       max_pairwise=sweep.max_pairwise)
        payload = {
            "thetas": thetas,
            "max_pairwise": sweep.max_pairwise,
            "values": [[_complex_out(v) for v in row] for row in sweep.values],
        }
        _write(out_dir, "theta_sweep.json",
               json.dumps(payload, indent=2) + "\n", manifest)

    manifest.write(out_dir)
    return 0 if ok else 1


def cmd_schrodinger(config: RunConfig, out_dir: Path, force: bool = False) -> int:
    manifest = Manifest(config, "schrodinger")
    problem = config.schrodinger_problem()
    from .schrodinger import check_wkb_hypotheses
    report = check_wkb_hypotheses(problem, config.theta)
    manifest.stage("hypothesis_check", **report.summary())
    _write(out_dir, "hypothesis_report.json",
           json.dumps(report.summary(), indent=2) + "\n", manifest)
    if not report.passed and not force:
        manifest.write(out_dir)
        print("WKB hypothesis check failed (use --force to attempt anyway)",
              file=sys.stderr)
        return 2

    settings = config.pipeline_settings()
    plus, minus = exact_wkb_basis(problem, config.theta, config.eval_points,
                                  settings=settings, force=force)
    _write(out_dir, "psi_plus.csv", plus.to_csv(), manifest)
    _write(out_dir, "psi_minus.csv", minus.to_csv(), manifest)

    wr = []
    for x, hb in config.eval_points:
        wr.append({"x": _complex_out(x), "hbar": _complex_out(hb),
                   "wronskian": _complex_out(wronskian((plus, minus), x, hb))})
    drift = 0.0
    if len(wr) >= 2:
        mags = [complex(w["wronskian"][0], w["wronskian"][1]) for w in wr]
        base = abs(mags[0])
        drift = max(abs(m - mags[0]) for m in mags) / max(base, 1e-300)
    payload = {"wronskians": wr, "relative_drift": drift}
    _write(out_dir, "wronskian.json", json.dumps(payload, indent=2) + "\n",
           manifest)
    manifest.stage("wronskian", relative_drift=drift)
    manifest.write(out_dir)
    drift_tol = float(config.thresholds.get("wronskian_drift", 1e-5))
    return 0 if drift <= drift_tol else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="borel-riccati",
        description="Exact solutions of singularly perturbed Riccati "
                    "equations by Borel-Laplace resummation.")
    parser.add_argument("command",
                        choices=["formal", "trajectories", "resum", "schrodinger"])
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="run even when hypothesis checks fail")
    parser.add_argument("--theta-sweep", default=None, metavar="A:B:N",
                        help="resum: also sweep theta over N values in [A, B]")
    parser.add_argument("--order", type=int, default=None,
                        help="override formal truncation order")
    parser.add_argument("--grid-h", type=float, default=None,
                        help="override lattice step")
    parser.add_argument("--xi-max", type=float, default=None,
                        help="override Borel-lattice extent")
    parser.add_argument("--tol", type=float, default=None,
                        help="override successive-approximation tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except (ConfigParseError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.order is not None:
        config.formal_order = args.order
    if args.grid_h is not None:
        config.grid.h = args.grid_h
    if args.xi_max is not None:
        config.grid.xi_max = args.xi_max
    if args.tol is not None:
        config.grid.tol = args.tol

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "formal":
            return cmd_formal(config, out_dir)
        if args.command == "trajectories":
            return cmd_trajectories(config, out_dir)
        if args.command == "resum":
            return cmd_resum(config, out_dir, force=args.force,
                             theta_sweep_spec=args.theta_sweep)
        if args.command == "schrodinger":
            return cmd_schrodinger(config, out_dir, force=args.force)
    except BorelRiccatiError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
