"""Command-line interface: ``crvolume <subcommand> [options]``.

Exit codes: 0 success, 2 usage, 3 configuration or parse error,
4 numerical failure.  Errors are written to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cgb import MetricError, renormalized_cgb
from .crgeom import STRUCTURE_TOL, GeometryError, boundary_fields, build_mesh, integrate_boundary
from .dsl import (
    ConfigError,
    ExpressionEvalError,
    ExpressionSyntaxError,
    PseudoconvexityError,
    builtin_domain,
    load_domain_spec,
    parse_builtin,
    parse_expression,
)
from .expand import expansion_at, v_and_L, predicted_c
from .jets import JetError
from .renorm import (
    FitError,
    UnsupportedDomainError,
    ball_closed_forms,
    conformal_anomaly,
    fit_volume_expansion,
    validate_special_phi,
    volume_samples,
)

SCHEMA_VERSION = 1
CSV_HEADER = ["direction", "Scal", "A_re", "A_im", "v2"]


class UsageError(Exception):
    pass


@dataclass
class RunReport:
    command: str
    domain: Optional[str]
    parameters: dict
    summaries: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    fields: Optional[dict] = None  # per-point dump for csv


# -- helpers --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _mesh(text: str) -> tuple:
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"--mesh expects N or N,N,N, got {text!r}") from None
    if len(vals) == 1:
        vals = vals * 3
    if len(vals) != 3 or min(vals) < 2:
        raise UsageError(f"--mesh expects N or N,N,N with N >= 2, got {text!r}")
    return tuple(vals)


def _window(text: str) -> tuple:
    try:
        a, b = (float(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--eps-window expects a,b, got {text!r}") from None
    if not (a < 0 and b < 0 and a != b):
        raise UsageError("--eps-window needs two distinct negative numbers")
    return tuple(sorted((a, b)))


def _spec(args, default="unit_ball"):
    if args.config and args.domain:
        raise UsageError("use either --config or --domain, not both")
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
        spec = load_domain_spec(text)
    else:
        spec = parse_builtin(args.domain or default)
    if args.mesh:
        spec = spec.with_mesh(args.mesh)
    if args.order:
        if args.order < 6:
            raise UsageError("--order must be at least 6 (Delta_b Scal needs six derivatives)")
        spec = spec.with_order(args.order)
    return spec


def _summary(x) -> dict:
    x = np.asarray(x, dtype=float)
    return {"min": float(np.min(x)), "max": float(np.max(x)), "mean": float(np.mean(x))}


def _boundary(spec, report: RunReport):
    t = time.perf_counter()
    mesh = build_mesh(spec)
    table = boundary_fields(spec, mesh.z, mesh.w)
    report.timings["boundary"] = time.perf_counter() - t
    e = expansion_at(table)
    report.summaries = {
        "Scal": _summary(table["scal"]),
        "absA2": _summary(table["absA2"]),
        "v2": _summary(e.v[2]),
    }
    report.diagnostics["mesh"] = list(mesh.resolution)
    report.diagnostics["mesh_points"] = mesh.size
    report.diagnostics["jet_order"] = spec.jet_order
    report.diagnostics["structure_tolerance"] = STRUCTURE_TOL
    report.diagnostics["max_structure_residual"] = float(np.max(table["residual"]))
    report.diagnostics["contact_measure"] = integrate_boundary(mesh, 1.0)
    report.fields = {
        "direction": [f"{a:.6f};{b:.6f};{c:.6f}" for a, b, c in zip(mesh.eta, mesh.xi1, mesh.xi2)],
        "Scal": table["scal"],
        "A_re": table["A11"].real,
        "A_im": table["A11"].imag,
        "v2": e.v[2],
    }
    return mesh, table


def _volume_fit(spec, window, report: RunReport):
    t = time.perf_counter()
    eps, vol = volume_samples(spec, window)
    fit = fit_volume_expansion(np.column_stack([eps, vol]))
    report.timings["volume_fit"] = time.perf_counter() - t
    report.diagnostics["fit_max_condition"] = 1e12
    report.diagnostics["fit_residual"] = fit.fit_residual
    report.diagnostics["fit_condition"] = fit.condition
    report.diagnostics["epsilon_range"] = list(fit.epsilon_range)
    return fit


# -- subcommands --------------------------------------------------------------

def cmd_analyze(args) -> RunReport:
    spec = _spec(args)
    rep = RunReport("analyze", spec.name, {"mesh": list(spec.mesh_resolution), "order": spec.jet_order})
    mesh, table = _boundary(spec, rep)
    t = time.perf_counter()
    vl = v_and_L(spec, mesh, table)
    rep.timings["L_refinement"] = time.perf_counter() - t
    pc = predicted_c(spec, mesh, table)
    rep.results = {
        "c0": pc["c0"],
        "c1": pc["c1"],
        "L": vl["L"],
        "L_uncertainty": vl["L_uncertainty"],
        "L_abs_integrand": vl["L_abs_scale"],
    }
    return rep


def cmd_ball_report(args) -> RunReport:
    spec = builtin_domain("unit_ball").with_mesh(args.mesh or builtin_domain("unit_ball").mesh_resolution)
    if args.order:
        spec = spec.with_order(args.order)
    window = args.eps_window or (-0.5, -0.05)
    rep = RunReport("ball-report", spec.name,
                    {"mesh": list(spec.mesh_resolution), "order": spec.jet_order, "eps_window": list(window)})
    mesh, table = _boundary(spec, rep)
    e = expansion_at(table)
    fit = _volume_fit(spec, window, rep)
    pc = predicted_c(spec, mesh, table)
    t = time.perf_counter()
    ledger = renormalized_cgb(spec, fit.V, mesh, table=table)
    rep.timings["cgb"] = time.perf_counter() - t
    contract = validate_special_phi(spec)
    phi = -1.0
    rep.results = {
        "phi_at_R_half": ball_closed_forms("phi", 0.5),
        "htilde_at_phi_-1": ball_closed_forms("htilde", phi),
        "r_at_phi_-1": ball_closed_forms("r", phi),
        "s_at_phi_-1": ball_closed_forms("s", phi),
        "dv_profile_at_phi_-1": ball_closed_forms("dv", phi),
        "hprime": float(np.mean(e.hprime)),
        "hdprime": float(np.mean(e.hdprime)),
        "rprime": float(np.mean(e.rprime)),
        "c0_predicted": pc["c0"],
        "c1_predicted": pc["c1"],
        "c0_fitted": fit.c0,
        "c1_fitted": fit.c1,
        "L": fit.L,
        "L_uncertainty": fit.L_uncertainty,
        "renormalized_volume": fit.V,
        "renormalized_volume_uncertainty": fit.V_uncertainty,
        "interior_chern_integral": ledger.interior_integral,
        "boundary_curvature_integral": ledger.boundary_curvature_integral,
        "script_V": ledger.script_V,
        "chi": ledger.chi_estimate,
    }
    rep.diagnostics["special_phi_contract"] = contract
    rep.diagnostics["interior_convergence"] = ledger.interior_convergence
    rep.diagnostics["interior_convergence_tolerance"] = 1e-4
    return rep


def cmd_anomaly(args) -> RunReport:
    spec = _spec(args)
    if not args.upsilon:
        raise UsageError("anomaly needs --upsilon EXPR")
    ups = parse_expression(args.upsilon)
    rep = RunReport("anomaly", spec.name,
                    {"mesh": list(spec.mesh_resolution), "order": spec.jet_order, "upsilon": args.upsilon})
    mesh, _ = _boundary(spec, rep)
    t = time.perf_counter()
    a = conformal_anomaly(spec, ups, mesh)
    rep.timings["anomaly"] = time.perf_counter() - t
    rep.results = {
        "full": a.full,
        "via_f_expansion": a.via_f_expansion,
        "linearized": a.linearized,
        "route_difference": abs(a.full - a.via_f_expansion),
        "f_prime_boundary": a.f_prime_boundary,
        "f_dprime_boundary": a.f_dprime_boundary,
    }
    rep.diagnostics["integrand_scale"] = a.scale
    return rep


def cmd_cgb(args) -> RunReport:
    spec = _spec(args)
    window = args.eps_window or (-0.5, -0.05)
    rep = RunReport("cgb", spec.name,
                    {"mesh": list(spec.mesh_resolution), "order": spec.jet_order, "eps_window": list(window)})
    if spec.special_phi is None:
        raise UnsupportedDomainError(
            f"{spec.name}: the renormalized volume needs a global special defining function (special_phi)"
        )
    mesh, table = _boundary(spec, rep)
    fit = _volume_fit(spec, window, rep)
    t = time.perf_counter()
    ledger = renormalized_cgb(spec, fit.V, mesh, table=table)
    rep.timings["cgb"] = time.perf_counter() - t
    rep.results = {"renormalized_volume": fit.V, **asdict(ledger)}
    return rep


def cmd_fit(args) -> RunReport:
    if not args.samples:
        raise UsageError("fit needs --samples PATH")
    try:
        data = np.loadtxt(args.samples, ndmin=2)
    except OSError as exc:
        raise ConfigError("samples", f"cannot read {args.samples}: {exc}") from None
    except ValueError as exc:
        raise ConfigError("samples", f"malformed sample file: {exc}") from None
    if data.shape[1] != 2:
        raise ConfigError("samples", "expected two columns (eps, volume)")
    if args.eps_window:
        a, b = args.eps_window
        data = data[(data[:, 0] >= a) & (data[:, 0] <= b)]
    fit = fit_volume_expansion(data)
    rep = RunReport("fit", None, {"samples": str(args.samples), "n_samples": int(len(data))})
    rep.results = {"c0": fit.c0, "c1": fit.c1, "L": fit.L, "V": fit.V,
                   "renormalized_volume": fit.V, "L_uncertainty": fit.L_uncertainty,
                   "V_uncertainty": fit.V_uncertainty}
    rep.diagnostics = {"fit_residual": fit.fit_residual, "fit_condition": fit.condition,
                       "epsilon_range": list(fit.epsilon_range)}
    return rep


COMMANDS = {
    "analyze": cmd_analyze,
    "ball-report": cmd_ball_report,
    "anomaly": cmd_anomaly,
    "cgb": cmd_cgb,
    "fit": cmd_fit,
}


# -- output -------------------------------------------------------------------

def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def emit_report(r: RunReport, fmt: str = "table", include_timings: bool = False) -> str:
    if fmt == "structured":
        doc = {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "command": r.command,
            "domain": r.domain,
            "parameters": r.parameters,
            "summaries": r.summaries,
            "results": r.results,
            "diagnostics": r.diagnostics,
        }
        if include_timings:
            doc["timings"] = r.timings
        return json.dumps(_clean(doc), indent=2) + "\n"
    if fmt == "csv":
        if r.fields is None:
            raise UsageError(f"csv output needs per-point fields; '{r.command}' has none")
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_HEADER)
        cols = [r.fields[k] for k in CSV_HEADER]
        for row in zip(*cols):
            wr.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()
    lines = [f"{r.command}  domain={r.domain}"]

    def walk(prefix, d):
        for k, v in d.items():
            if isinstance(v, dict):
                walk(f"{prefix}{k}.", v)
            else:
                v = _clean(v)
                s = repr(v) if isinstance(v, float) else str(v)
                lines.append(f"  {prefix + k:<40s} {s}")

    for title, part in (("parameters", r.parameters), ("summaries", r.summaries),
                        ("results", r.results), ("diagnostics", r.diagnostics)):
        if part:
            lines.append(f"[{title}]")
            walk("", part)
    if include_timings and r.timings:
        lines.append("[timings]")
        walk("", r.timings)
    return "\n".join(lines) + "\n"


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crvolume", description="Pseudohermitian invariants and renormalized volumes in C^2.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML/JSON domain document")
        s.add_argument("--domain", help="builtin domain, e.g. 'bumped_ball(0.05,2)'")
        s.add_argument("--mesh", type=_mesh, help="Hopf mesh N or N,N,N")
        s.add_argument("--order", type=int, help="jet order K")
        s.add_argument("--eps-window", type=_window, help="eps window a,b for volume fits")
        s.add_argument("--format", choices=["table", "structured", "csv"], default="table")
        s.add_argument("--out", help="write the report here instead of stdout")
        s.add_argument("--timings", action="store_true", help="include wall-times in the report")
        if name == "anomaly":
            s.add_argument("--upsilon", help="conformal factor expression in z, w")
        if name == "fit":
            s.add_argument("--samples", help="two-column text file of (eps, volume)")
    return p


def _fail(code: int, kind: str, exc: Exception) -> int:
    err = {"error": kind, "exit_code": code, "message": str(exc)}
    for attr in ("path", "position"):
        if hasattr(exc, attr):
            err[attr] = getattr(exc, attr)
    sys.stderr.write(json.dumps(err) + "\n")
    return code


def run_subcommand(argv=None) -> tuple[int, Optional[RunReport]]:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand; choose one of " + ", ".join(COMMANDS))
        report = COMMANDS[args.command](args)
        text = emit_report(report, args.format, args.timings)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0, report
    except UsageError as exc:
        return _fail(2, "usage", exc), None
    except (ConfigError, ExpressionSyntaxError, PseudoconvexityError, UnsupportedDomainError) as exc:
        return _fail(3, "config", exc), None
    except (GeometryError, JetError, FitError, MetricError, ExpressionEvalError, ArithmeticError) as exc:
        return _fail(4, "numerical", exc), None


def main(argv=None) -> int:
    return run_subcommand(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
