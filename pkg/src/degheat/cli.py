"""Config-driven experiment runner.

    degheat {solve,adjoint,carleman,duality,control,hardy} [--config PATH] [--out DIR] [--seed INT] [--verbose]

Every run writes ``summary.json`` (even on failure) plus the effective
``config.ini``.  Exit status: 0 when every check passed, 1 when a check
failed, 2 on configuration or validation errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from . import config as cfgmod
from .carleman import COROLLARY, THEOREM, admissibility_report, ratio_sweep, validate_context
from .control import (
    ControlTask,
    duality_sides,
    synthesize,
    two_stage_control,
    verify_control,
    verify_two_stage,
)
from .errors import DegheatError
from .evolution import AdjointProblem, ForwardProblem, energy_report, solve_adjoint, solve_forward
from .io import atomic_json, atomic_text, write_rows
from .mesh import build_graded_mesh, write_grid_csv
from .operator import assemble, hardy_check
from .profiles import parse_profile, space_time_profile, spatial_profile, time_profile

log = logging.getLogger("degheat")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_ERROR = 0, 1, 2


class Checks:
    """Named pass/fail records collected by a subcommand."""

    def __init__(self):
        self.items = {}

    def add(self, name, value, passed, threshold=None):
        self.items[name] = {"value": value, "threshold": threshold, "passed": bool(passed)}
        log.info("check %s: %s (value=%r)", name, "PASS" if passed else "FAIL", value)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.items.values())


def _mesh(cfg, N=None, M=None, T=None):
    m, p = cfg.mesh, cfg.problem
    return build_graded_mesh(N or m.N, m.gamma, M or m.M, T or p.T)


def _classical_rate(spec):
    """``k`` if ``spec`` is a scaled sine/eigenmode of index k, else None."""
    _, name, arg = parse_profile(spec)
    if name in ("sine", "eigenmode"):
        return int(arg or 1)
    return None


# -- subcommands -----------------------------------------------------------------

def cmd_solve(cfg, out: Path, checks: Checks) -> dict:
    """Forward solve: trajectory CSV, conormal trace and energy JSON."""
    p, d, seed = cfg.problem, cfg.data, cfg.run.seed
    mesh = _mesh(cfg)
    u0 = spatial_profile(d.initial, mesh, p.alpha, seed)
    g = time_profile(d.boundary, mesh, seed)
    prob = ForwardProblem(p.alpha, p.T, u0, g)
    tr = solve_forward(prob, mesh, p.scheme)
    U = tr.states.values

    write_grid_csv(tr.states, out / "trajectory.csv")
    write_rows(out / "conormal.csv", ("t", "conormal_trace"), zip(mesh.times, tr.conormal_trace))
    write_rows(out / "energy_series.csv", ("t", "l2_sq", "h1_alpha_cumulative"),
               zip(mesh.times, tr.l2_sq, tr.h1_alpha_cumulative))
    energy = energy_report(tr, prob)
    energy["ratio"] = ((energy["sup_l2_sq"] + energy["h1_alpha_time_integral"]) / energy["data_norm_sq"]
                       if energy["data_norm_sq"] > 0 else None)
    atomic_json(out / "energy.json", energy)

    checks.add("finite", bool(np.all(np.isfinite(U))), np.all(np.isfinite(U)))
    checks.add("boundary_imposed", float(np.max(np.abs(U[:, 0] - g))), np.array_equal(U[:, 0], g), 0.0)
    k = _classical_rate(d.initial)
    if p.alpha == 0.0 and k is not None and not np.any(g):
        expect = np.exp(-(k * np.pi) ** 2 * p.T) * u0.values
        err = float(np.sqrt(np.dot(mesh.dual_widths, (U[-1] - expect) ** 2)
                            / np.dot(mesh.dual_widths, expect ** 2)))
        checks.add("classical_decay", err, err <= 1e-2, 1e-2)
    return {"energy": energy, "terminal_l2": float(np.sqrt(tr.l2_sq[-1]))}


def cmd_adjoint(cfg, out: Path, checks: Checks) -> dict:
    """Backward adjoint solve and its conormal trace at x=0."""
    p, d = cfg.problem, cfg.data
    mesh = _mesh(cfg)
    v = spatial_profile(d.adjoint, mesh, p.alpha, cfg.run.seed)
    tr = solve_adjoint(AdjointProblem(p.alpha, p.T, v), mesh, p.scheme)
    write_grid_csv(tr.states, out / "trajectory.csv")
    write_rows(out / "conormal.csv", ("t", "conormal_trace"), zip(mesh.times, tr.conormal_trace))
    psi = tr.conormal_trace
    checks.add("finite", bool(np.all(np.isfinite(tr.states.values))), np.all(np.isfinite(tr.states.values)))
    scale, name, _ = parse_profile(d.adjoint)
    k = _classical_rate(d.adjoint)
    if p.alpha == 0.0 and name == "sine":
        exact = scale * k * np.pi * np.exp(-(k * np.pi) ** 2 * (p.T - mesh.times))
        err = float(np.max(np.abs(psi - exact)) / np.max(np.abs(exact)))
        checks.add("classical_trace", err, err <= 1e-2, 1e-2)
    return {"trace_at_T": float(psi[-1]), "trace_at_0": float(psi[0])}


def cmd_carleman(cfg, out: Path, checks: Checks) -> dict:
    """Admissibility report and weighted-estimate ratio sweep over s."""
    p, c = cfg.problem, cfg.carleman
    s_sorted = sorted(c.s_list)
    report = admissibility_report(p.alpha, c.beta, p.T, s_sorted[0])
    atomic_json(out / "admissibility.json", report)
    checks.add("admissible", report["valid"], report["valid"])
    if not report["valid"]:
        return {"admissibility": report}

    ctx = validate_context(p.alpha, c.beta, p.T, s_sorted[0])
    mesh = _mesh(cfg)
    v = space_time_profile(c.field, mesh)
    op = assemble(p.alpha, mesh)
    header = ("s", "lhs_cubic", "lhs_linear", "lhs_gradient", "rhs", "ratio")
    sweep = ratio_sweep(v, ctx, s_sorted, c.variant, op)
    write_rows(out / "sweep.csv", header, sweep.rows())
    result = {"variant": c.variant, "ratios": sweep.ratios,
              "band_truncation": [sd.band_truncation for sd in sweep.sides]}
    if sweep.bounded_tail is not None:
        result["bounded_tail"] = sweep.bounded_tail
        checks.add("bounded_tail", sweep.bounded_tail, sweep.bounded_tail)

    if c.check_corollary and c.variant == THEOREM:
        cor = ratio_sweep(v, ctx, s_sorted, COROLLARY, op)
        write_rows(out / "corollary_sweep.csv", header, cor.rows())
        ordered = all(
            a.lhs_cubic <= b.lhs_cubic and a.lhs_linear <= b.lhs_linear and a.lhs_gradient <= b.lhs_gradient
            for a, b in zip(cor.sides, sweep.sides)
        )
        checks.add("corollary_below_theorem", ordered, ordered)
        result["corollary_ratios"] = cor.ratios
    return result


def _duality_row(name, g, v, alpha, mesh, scheme):
    lhs, rhs = duality_sides(g, v, alpha, mesh, scheme)
    gap = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + np.finfo(float).eps)
    return (name, lhs, rhs, gap)


def cmd_duality(cfg, out: Path, checks: Checks) -> dict:
    """Duality-gap table over a catalog of (g, v) pairs."""
    p, d, m, seed = cfg.problem, cfg.data, cfg.mesh, cfg.run.seed
    mesh = _mesh(cfg)
    rows = []

    v = spatial_profile(d.adjoint, mesh, p.alpha, seed)
    rows.append(_duality_row("zero", np.zeros(mesh.M + 1), v, p.alpha, mesh, p.scheme))
    checks.add("zero_pair_gap", rows[-1][3], rows[-1][3] == 0.0, 0.0)
    rows.append(_duality_row("config", time_profile(d.boundary, mesh, seed), v, p.alpha, mesh, p.scheme))

    # closed form: both sides equal int_0^T pi exp(-pi^2 (T-t)) sin^2(pi t/T) dt
    Tc = 0.5
    cmesh = build_graded_mesh(m.N, m.gamma, m.M, Tc)
    row = _duality_row("classical", time_profile("sin2", cmesh), spatial_profile("sine:1", cmesh),
                       0.0, cmesh, p.scheme)
    rows.append(row)
    exact = quad(lambda t: np.pi * np.exp(-np.pi ** 2 * (Tc - t)) * np.sin(np.pi * t / Tc) ** 2, 0.0, Tc)[0]
    checks.add("classical_gap", row[3], row[3] <= 1e-3, 1e-3)

    gaps = []
    for tag, k in (("refine_coarse", 1), ("refine_fine", 2)):
        rm = build_graded_mesh(k * m.N, m.gamma, k * m.M, p.T)
        rows.append(_duality_row(tag, time_profile("random", rm, seed), spatial_profile("random", rm, p.alpha, seed),
                                 p.alpha, rm, p.scheme))
        gaps.append(rows[-1][3])
    ratio = gaps[0] / gaps[1] if gaps[1] > 0 else float("inf")
    checks.add("refinement_ratio", ratio, ratio >= 1.5, 1.5)

    write_rows(out / "duality.csv", ("case", "lhs", "rhs", "gap"), rows)
    return {
        "classical_exact": exact,
        "classical_lhs_rel_error": abs(row[1] - exact) / exact,
        "classical_rhs_rel_error": abs(row[2] - exact) / exact,
        "refinement_ratio": ratio,
    }


def cmd_control(cfg, out: Path, checks: Checks) -> dict:
    """Boundary-control synthesis with an independent verification solve."""
    p, c, d, seed = cfg.problem, cfg.control, cfg.data, cfg.run.seed
    mesh = _mesh(cfg)
    u0 = spatial_profile(d.initial, mesh, p.alpha, seed)
    uT = spatial_profile(d.target, mesh, p.alpha, seed)
    params = dict(epsilon=c.epsilon, rho=c.rho, max_iters=c.max_iters, grad_tol=c.grad_tol,
                  rho_min=c.rho_min, scheme=p.scheme)

    extra = {}
    if c.mode == "two_stage":
        task = ControlTask(p.alpha, p.T, type(u0).zeros(mesh), uT, **params)
        res = two_stage_control(u0, uT, task, mesh)
        verify = verify_two_stage(res.g, u0, uT, p.alpha, p.scheme)
        half = mesh.M // 2
        zero_first = bool(np.all(res.g[:half] == 0.0))
        checks.add("first_half_zero", zero_first, zero_first)
        u1 = res.extras["intermediate_state"].values
        ends = float(max(abs(u1[0]), abs(u1[-1])))
        checks.add("intermediate_vanishes_at_ends", ends, ends <= 1e-6, 1e-6)
        write_grid_csv(res.extras["intermediate_state"], out / "intermediate.csv")
        extra["intermediate_endpoint_max"] = ends
    else:
        res = synthesize(ControlTask(p.alpha, p.T, u0, uT, **params), mesh)
        verify = verify_control(res.g, u0, uT, p.alpha, p.scheme)

    diff = abs(verify - res.terminal_error)
    checks.add("self_verification", diff, diff <= 1e-10, 1e-10)
    checks.add("converged", res.converged, res.converged)
    extra.update(verification_terminal_error=verify, history=res.history)
    res.write(out / "result.json", out / "control.csv", mesh.times, **extra)
    write_grid_csv(res.terminal, out / "terminal.csv")
    return dict(res.summary(), **extra)


def cmd_hardy(cfg, out: Path, checks: Checks) -> dict:
    """Weighted Hardy-type bounds for a catalog of profiles at N and 2N."""
    p, m = cfg.problem, cfg.mesh
    beta = cfg.carleman.beta
    rows, result = [], {}
    for spec in cfg.data.hardy:
        reps = []
        for k in (1, 2):
            mesh = build_graded_mesh(k * m.N, m.gamma, m.M, p.T)
            f = spatial_profile(spec, mesh, p.alpha, cfg.run.seed)
            r = hardy_check(f, p.alpha, beta, assemble(p.alpha, mesh))
            reps.append(r)
            rows.append((spec, k * m.N, r.flux_bound_margin, r.solution_bound_margin,
                         r.integral_bound_ratio, r.proof_constant))
        coarse, fine = reps
        worst = min(fine.flux_bound_margin, fine.solution_bound_margin)
        checks.add(f"{spec}:margins", worst, worst >= -1e-2, -1e-2)
        viol = [max(0.0, -min(r.flux_bound_margin, r.solution_bound_margin)) for r in reps]
        checks.add(f"{spec}:violation_non_increasing", viol, viol[1] <= viol[0])
        drift = abs(fine.integral_bound_ratio / coarse.integral_bound_ratio - 1.0) \
            if coarse.integral_bound_ratio > 0 else 0.0
        checks.add(f"{spec}:integral_ratio_stable", drift,
                   np.isfinite(fine.integral_bound_ratio) and drift <= 0.1, 0.1)
        result[spec] = {"integral_bound_ratio": fine.integral_bound_ratio, "ratio_drift": drift}
    write_rows(out / "hardy.csv", ("profile", "N", "flux_bound_margin", "solution_bound_margin",
                                   "integral_bound_ratio", "proof_constant"), rows)
    return result


COMMANDS = {
    "solve": cmd_solve,
    "adjoint": cmd_adjoint,
    "carleman": cmd_carleman,
    "duality": cmd_duality,
    "control": cmd_control,
    "hardy": cmd_hardy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides [run] output_dir)")
    common.add_argument("--seed", type=int, help="seed for randomized profiles (overrides [run] seed)")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="degheat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
    return parser


def run(command: str, cfg: cfgmod.ExperimentConfig, out: Path):
    """Run ``command`` and write its summary; returns ``(exit_code, summary)``."""
    checks = Checks()
    summary = {"command": command, "config": cfg.to_dict(), "error": None}
    code = EXIT_OK
    try:
        out.mkdir(parents=True, exist_ok=True)
        atomic_text(out / "config.ini", cfgmod.dumps(cfg))
        summary["results"] = COMMANDS[command](cfg, out, checks)
        if not checks.passed:
            code = EXIT_CHECK_FAILED
    except DegheatError as exc:
        log.debug("%s", exc)
        summary["error"] = f"{type(exc).__name__}: {exc}"
        report = getattr(exc, "report", None)
        if report is not None:
            summary["admissibility"] = report
        code = EXIT_ERROR
    summary["checks"] = checks.items
    summary["passed"] = code == EXIT_OK
    atomic_json(out / "summary.json", summary)
    return code, summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    out = args.out
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_overrides(run={"seed": args.seed})
    except DegheatError as exc:
        out = out or Path("out")
        out.mkdir(parents=True, exist_ok=True)
        atomic_json(out / "summary.json", {"command": args.command, "error": f"{type(exc).__name__}: {exc}",
                                           "checks": {}, "passed": False})
        print(f"degheat: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = out or Path(cfg.run.output_dir)
    code, summary = run(args.command, cfg, out)
    if summary["error"]:
        print(f"degheat: {summary['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
