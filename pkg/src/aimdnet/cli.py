"""Command-line interface: ``aimdnet {solve,simulate,scan,check,density}``.

Exit status: 0 success, 1 a check failed, 2 possible multi-stability
(bracket did not collapse or the scan found several clusters),
3 non-convergence or numerical failure, 4 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
import warnings
from dataclasses import replace

import numpy as np
import scipy

from . import __version__
from .config import (COMMANDS, SCHEMA_VERSION, ConfigError, RunConfig, default_config,
                     load_config)
from .corpus import corpus
from .equilibrium import StationaryLaw, loads, residual, stationary_mean
from .model import ClassParams, DomainError
from .simulator import (simulate_finite, simulate_particles, simulate_single, write_event_log)
from .solvers import (BracketError, PreconditionError, estimate_contraction,
                      scan_multistability, solve, solve_bracket)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_MULTISTABLE, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 1, 2, 3, 4
STATUS = {0: "ok", 1: "checks failed", 2: "possible multi-stability", 3: "not converged",
          4: "configuration error"}


class Outcome:
    """What a command produced: a JSON payload, a main CSV table and side files."""

    def __init__(self, result: dict, code: int = EXIT_OK, table=None, files=None):
        self.result = result
        self.code = code
        self.table = table            # (header, rows)
        self.files = files or {}      # name -> (header, rows) or callable(path)


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(fh, header, rows) -> None:
    fh.write(",".join(header) + "\n")
    for row in rows:
        fh.write(",".join(fmt(v) for v in row) + "\n")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# ---------------------------------------------------------------------------
# commands

def _solve_model(model, cfg: RunConfig):
    return solve(model, cfg.solver, cfg.method)


def cmd_solve(cfg: RunConfig) -> Outcome:
    model = cfg.model.build()
    res = _solve_model(model, cfg)
    recheck = residual(model, loads(model, res.z_star))
    out = res.to_dict()
    out["residual_recheck"] = recheck
    if all(s.kind == "constant" for s in model.loss):
        z = np.array([c.p * stationary_mean(c.r, c.a / s.delta)
                      for c, s in zip(model.classes, model.loss)])
        out["closed_form"] = {"z": z.tolist(), "u": (model.A @ z).tolist()}
    if res.converged and recheck <= cfg.solver.tol:
        code = EXIT_OK
    elif res.bracket is not None and not res.converged:
        code = EXIT_MULTISTABLE
    else:
        code = EXIT_NONCONVERGED
    rows = [("u", j, f"node{j}", float(u)) for j, u in enumerate(res.u_star)]
    rows += [("z", k, model.labels[k], float(z)) for k, z in enumerate(res.z_star)]
    return Outcome(out, code, (("kind", "index", "label", "value"), rows))


def cmd_simulate(cfg: RunConfig) -> Outcome:
    block = cfg.simulate
    opts = block.options
    files = {}
    if block.mode == "single":
        s = simulate_single(block.a, block.beta, block.r, opts.w0, opts)
        out = s.to_dict()
        se = float(s.standard_errors["class_means"][0])
        mean = float(s.class_means[0])
        out["mean"] = mean
        out["ci95"] = [mean - 1.96 * se, mean + 1.96 * se]
        if block.beta > 0:
            out["stationary_mean"] = stationary_mean(block.r, block.a / block.beta)
        rows = [(0, mean, se, out.get("stationary_mean", float("nan")))]
        table = (("class", "mean", "se", "stationary_mean"), rows)
    else:
        model = cfg.model.build()
        if block.mode == "particles":
            s = simulate_particles(model, opts)
            est = s.u_bar
            se = s.standard_errors["u_bar"]
            ref_model = model
        else:
            s = simulate_finite(model, block.counts, opts, block.scaled_load)
            total = sum(block.counts)
            est = np.array(s.metadata["u_per_connection"])
            se = s.standard_errors["u_bar"] * (1.0 if block.scaled_load else 1.0 / total)
            ref_model = model.replace(classes=tuple(ClassParams(c.a, c.r, n / total, c.label)
                                                    for c, n in zip(model.classes, block.counts)))
        out = s.to_dict()
        u_star = gap = None
        if block.compare and (block.mode == "particles" or block.scaled_load):
            ref = _solve_model(ref_model, cfg)
            u_star = ref.u_star
            gap = (est - u_star) / u_star
            out["comparison"] = {"u_bar": est.tolist(), "u_star": u_star.tolist(),
                                 "relative_gap": gap.tolist(), "converged": ref.converged}
        elif block.compare:
            out["comparison"] = {"skipped": "raw-load finite systems have no mean-field reference"}
        rows = [(j, float(est[j]), float(se[j]),
                 float(u_star[j]) if u_star is not None else float("nan"),
                 float(gap[j]) if gap is not None else float("nan")) for j in range(len(est))]
        table = (("node", "u_bar", "se", "u_star", "relative_gap"), rows)
    hist_rows = []
    for k, (edges, masses) in enumerate(s.histograms):
        hist_rows += [(k, float(lo), float(hi), float(m))
                      for lo, hi, m in zip(edges[:-1], edges[1:], masses)]
    files["histograms.csv"] = (("class", "lower", "upper", "mass"), hist_rows)
    if s.events is not None:
        files["events.csv"] = lambda path, ev=s.events: write_event_log(ev, path)
    return Outcome(out, EXIT_OK, table, files)


def cmd_scan(cfg: RunConfig) -> Outcome:
    model = cfg.model.build()
    rep = scan_multistability(model, cfg.scan.n_starts, cfg.scan.seed, cfg.solver, cfg.scan.rtol)
    if rep.n_clusters == 1:
        code = EXIT_OK
    elif rep.n_clusters > 1:
        code = EXIT_MULTISTABLE
    else:
        code = EXIT_NONCONVERGED
    rows = [(c, k, float(v)) for c, rep_z in enumerate(rep.clusters) for k, v in enumerate(rep_z)]
    return Outcome(rep.to_dict(), code, (("cluster", "class", "z"), rows))


def density_table(r: float, rho: float, n_points: int = 2001, w_max: float | None = None):
    """Grid, density values and integration metadata.

    The density is even in ``w`` with zero slope at the origin, so the
    trapezoid rule on ``[0, w_max]`` is highly accurate; the mass beyond
    ``w_max`` comes from the closed-form distribution function.
    """
    law = StationaryLaw(r, rho)
    if w_max is None:
        w_max = float(law.ppf(1.0 - 1e-13))
    w = np.linspace(0.0, w_max, n_points)
    h = law.density(w)
    trap = float(np.trapezoid(h, w)) if hasattr(np, "trapezoid") else float(np.trapz(h, w))
    tail = float(1.0 - law.cdf(w_max))
    meta = {"r": r, "rho": rho, "mean": law.mean, "w_max": w_max, "n_points": n_points,
            "trapezoid_integral": trap, "tail_mass": tail, "total_mass": trap + tail}
    return w, h, meta


def cmd_density(cfg: RunConfig) -> Outcome:
    b = cfg.density
    w, h, meta = density_table(b.r, b.rho, b.n_points, b.w_max)
    out = {"metadata": meta, "w": w.tolist(), "H": h.tolist()}
    return Outcome(out, EXIT_OK, (("w", "H"), list(zip(w.tolist(), h.tolist()))))


def run_checks(pattern: str | None = None, simulate: bool = True, horizon: float = 200.0,
               particles: int = 1000, seed: int = 0) -> list[dict]:
    """Cross-validation on the built-in corpus; one record per check."""
    from .simulator import SimOptions

    checks = []

    def add(entry, name, value, threshold, passed):
        checks.append({"instance": entry.name, "check": name, "value": value,
                       "threshold": threshold, "passed": bool(passed)})

    for e in corpus(pattern):
        model = e.build()
        t0 = time.perf_counter()
        spec = solve(model)
        ref = solve_bracket(model)
        gap = float(np.max(np.abs(spec.u_star - ref.u_star)))
        add(e, "solver_agreement", gap, 1e-8, gap < 1e-8)
        add(e, "residual", spec.residual, 1e-10, spec.residual < 1e-10)
        width = (float(np.max(ref.bracket[1] - ref.bracket[0]))
                 if ref.bracket is not None else math.inf)
        add(e, "bracket_collapse", width, 1e-10, ref.converged and width < 1e-10)
        rep = scan_multistability(model, 32, seed)
        add(e, "scan_clusters", rep.n_clusters, 1, rep.n_clusters == 1)
        if e.topology == "ring2":
            est = estimate_contraction(model)
            add(e, "contraction", est, 1.0, est < 1.0)
        if simulate and e.mean_field:
            s = simulate_particles(model, SimOptions(horizon=horizon, seed=seed,
                                                     particles_per_class=particles))
            worst = float(np.max(np.abs(s.u_bar - spec.u_star) / spec.u_star))
            add(e, "mean_field_gap", worst, 0.02, worst < 0.02)
        checks[-1]["seconds"] = time.perf_counter() - t0
    return checks


def cmd_check(cfg: RunConfig) -> Outcome:
    b = cfg.check
    checks = run_checks(b.filter, b.simulate, b.horizon, b.particles_per_class, b.seed)
    if not checks:
        warnings.warn(f"no corpus instance matches {b.filter!r}", UserWarning)
    n_fail = sum(not c["passed"] for c in checks)
    out = {"n_checks": len(checks), "n_failed": n_fail, "checks": checks}
    rows = [(c["instance"], c["check"], float(c["value"]), float(c["threshold"]),
             "pass" if c["passed"] else "FAIL") for c in checks]
    return Outcome(out, EXIT_CHECK_FAILED if n_fail else EXIT_OK,
                   (("instance", "check", "value", "threshold", "status"), rows))


HANDLERS = {"solve": cmd_solve, "simulate": cmd_simulate, "scan": cmd_scan,
            "check": cmd_check, "density": cmd_density}


def versions() -> dict:
    return {"artifact": __version__, "config_schema": SCHEMA_VERSION,
            "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def execute(cfg: RunConfig) -> tuple[dict, Outcome | None]:
    """Run ``cfg`` and assemble the report. Numerical failures become exit 3."""
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            outcome = HANDLERS[cfg.command](cfg)
            code, error = outcome.code, None
        except (PreconditionError, DomainError) as exc:
            outcome, code, error = None, EXIT_CONFIG, str(exc)
        except (BracketError, FloatingPointError, ArithmeticError) as exc:
            outcome, code, error = None, EXIT_NONCONVERGED, str(exc)
    report = {
        "schema": SCHEMA_VERSION,
        "command": cfg.command,
        "status": STATUS[code],
        "exit_code": code,
        "versions": versions(),
        "config": cfg.to_dict(),
        "result": None if outcome is None else outcome.result,
        "warnings": sorted({str(w.message) for w in caught}),
        "timings": {"total_seconds": time.perf_counter() - t0},
    }
    if error is not None:
        report["error"] = error
    return _jsonable(report), outcome


# ---------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aimdnet", description=__doc__.split("\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="exit status: 0 ok, 1 check failed, 2 possible "
                                            "multi-stability, 3 not converged, 4 config error")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"solve": "solve the fixed-point equation", "simulate": "run a stochastic simulation",
             "scan": "multi-start search for several equilibria",
             "check": "cross-validate on the built-in corpus",
             "density": "tabulate the stationary throughput density"}
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="PATH", help="JSON config (schema 1)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", metavar="DIR", help="write report.json and CSV files here")
        p.add_argument("--format", choices=("json", "csv"), help="stdout format")
        p.add_argument("--method", choices=("generic", "specialized"),
                       help="force the generic bracketing solver")
        p.add_argument("--quiet", action="store_true", help="print nothing on stdout")
        if name == "check":
            p.add_argument("--filter", help="topology, variant or name fragment")
    return parser


def resolve(args) -> RunConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("--config", str(exc)) from None
        cfg = load_config(text, args.command)
    else:
        cfg = default_config(args.command)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.method:
        cfg = replace(cfg, method=args.method)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.format:
        cfg = replace(cfg, format=args.format)
    if getattr(args, "filter", None) is not None:
        cfg = replace(cfg, check=replace(cfg.check, filter=args.filter))
    if cfg.out_dir is not None:
        try:
            os.makedirs(cfg.out_dir, exist_ok=True)
        except OSError as exc:
            raise ConfigError("output.dir", str(exc)) from None
        if not os.access(cfg.out_dir, os.W_OK):
            raise ConfigError("output.dir", f"{cfg.out_dir} is not writable")
    return cfg


def _write_outputs(cfg: RunConfig, report: dict, outcome: Outcome | None) -> None:
    d = cfg.out_dir
    with open(os.path.join(d, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    if outcome is None:
        return
    if outcome.table is not None:
        with open(os.path.join(d, f"{cfg.command}.csv"), "w") as fh:
            write_csv(fh, *outcome.table)
    for name, content in outcome.files.items():
        path = os.path.join(d, name)
        if callable(content):
            content(path)
        else:
            with open(path, "w") as fh:
                write_csv(fh, *content)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
    except ConfigError as exc:
        print(f"aimdnet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report, outcome = execute(cfg)
    if cfg.out_dir is not None:
        _write_outputs(cfg, report, outcome)
    if not args.quiet:
        if cfg.format == "csv" and outcome is not None and outcome.table is not None:
            write_csv(sys.stdout, *outcome.table)
        else:
            json.dump(report, sys.stdout, indent=2)
            sys.stdout.write("\n")
    for msg in report["warnings"]:
        if not args.quiet:
            print(f"aimdnet: warning: {msg}", file=sys.stderr)
    if "error" in report:
        print(f"aimdnet: {report['status']}: {report['error']}", file=sys.stderr)
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
