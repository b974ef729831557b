"""Command-line front end.

Every subcommand prints one JSON document (and writes it to ``--out`` when
given). The validated run configuration is echoed under ``"config"``.

Exit codes: 0 success or pass, 1 numeric failure, 2 usage error,
3 domain error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import sympy as sp

from . import __version__
from .errors import (DomainError, FedosovKitError, FlatnessError, GridError, NonCanonicalError,
                     NormalizationError, NotPureError, OpaqueDerivativeError, ParseError,
                     UnknownVariableError)
from .prefix import parse, to_prefix
from .symbolic import HBAR, coordinates, expr_equal

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    chart: str | None = None
    order: int = 6
    hbar: float | None = None
    grid: str | None = None
    tol: float = 1e-9
    seed: int = 0
    out: str | None = None
    args: dict = field(default_factory=dict)

    def validate(self):
        if self.order < 0 or self.order % 2:
            raise UsageError("--order must be a nonnegative even integer")
        if self.hbar is not None and not self.hbar > 0:
            raise UsageError("--hbar must be positive")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.grid is not None:
            self.grid_spec()
        return self

    def grid_spec(self, hbar: float = 1.0) -> tuple[float, int]:
        """(half_width, points) from "L:n", "n" or the defaults."""
        from .grid import default_half_width

        if self.grid is None:
            return default_half_width(hbar), 256
        try:
            if ":" in self.grid:
                a, b = self.grid.split(":")
                L, n = float(a), int(b)
            else:
                L, n = default_half_width(hbar), int(self.grid)
        except ValueError:
            raise UsageError(f"--grid expects 'L:n' or 'n', got {self.grid!r}") from None
        if L <= 0 or n < 8:
            raise UsageError("--grid needs a positive half width and at least 8 points")
        return L, n


# ---------------------------------------------------------------- helpers

def _expr(text: str, allowed) -> sp.Expr:
    e = parse(text)
    stray = {s for s in e.free_symbols if s not in set(allowed) and s != HBAR}
    if stray:
        names = ", ".join(sorted(s.name for s in stray))
        raise UnknownVariableError(f"unknown variables {names}; chart has "
                                   f"{', '.join(s.name for s in allowed)}")
    return e


def _render(e) -> dict:
    e = sp.simplify(e)
    return {"prefix": to_prefix(e), "text": str(e)}


def _chart(name):
    from .charts import get_chart

    if name is None:
        raise UsageError("--chart is required")
    try:
        return get_chart(name)
    except KeyError as exc:
        raise UsageError(str(exc)) from None


def _connection_for(cfg: RunConfig):
    from .connection import flat_connection_in_chart, zero_connection

    if cfg.chart in ("flat2d", "flat4d"):
        return zero_connection(_chart(cfg.chart).old_coords)
    if cfg.chart == "generic":
        from .connection import generic_connection

        return generic_connection(coordinates("T H"))
    chart = _chart(cfg.chart)
    if chart.inverse is None:
        raise DomainError(f"chart {cfg.chart} has no symbolic inverse; its connection "
                          "cannot be written in the new coordinates")
    return flat_connection_in_chart(chart)


def _context(cfg: RunConfig, **kw):
    from .fedosov import FedosovContext

    return FedosovContext(_connection_for(cfg), order=cfg.order,
                          assume_flat=cfg.chart == "generic", **kw)


def _sample_norm(e, coords, hbar, seed, samples=16) -> float:
    """Max |e| at random chart points in (0.3, 1.7)."""
    rng = np.random.default_rng(seed)
    f = sp.lambdify(list(coords) + [HBAR], e, "numpy")
    pts = rng.uniform(0.3, 1.7, size=(samples, len(coords)))
    return float(max(abs(complex(f(*p, hbar))) for p in pts))


# ---------------------------------------------------------------- subcommands

def cmd_star(cfg: RunConfig) -> tuple[dict, int]:
    from .fedosov import star_product

    ctx = _context(cfg)
    a = _expr(cfg.args["a"], ctx.coords)
    b = _expr(cfg.args["b"], ctx.coords)
    t0 = time.perf_counter()
    r = star_product(a, b, ctx)
    out = {"chart": cfg.chart, "a": to_prefix(a), "b": to_prefix(b), "order": cfg.order,
           "real": _render(r.re), "imag": _render(r.im)}
    if cfg.hbar is not None:
        out["real"]["at_hbar"] = _render(r.re.subs(HBAR, cfg.hbar))
        out["imag"]["at_hbar"] = _render(r.im.subs(HBAR, cfg.hbar))
    out["seconds"] = round(time.perf_counter() - t0, 3)
    return out, EXIT_OK


def cmd_lift(cfg: RunConfig) -> tuple[dict, int]:
    from .fedosov import fedosov_lift

    ctx = _context(cfg)
    f = _expr(cfg.args["f"], ctx.coords)
    lift = fedosov_lift(f, ctx, cfg.args.get("degree"))
    return {"chart": cfg.chart, "f": to_prefix(f), "order": cfg.order,
            "terms": lift.dump().splitlines()}, EXIT_OK


def cmd_connection(cfg: RunConfig) -> tuple[dict, int]:
    return {"chart": cfg.chart, "connection": _connection_for(cfg).to_json()}, EXIT_OK


def cmd_curvature(cfg: RunConfig) -> tuple[dict, int]:
    from .connection import SymplecticConnection, curvature

    if cfg.args.get("connection"):
        c = SymplecticConnection.from_json(Path(cfg.args["connection"]).read_text())
    else:
        c = _connection_for(cfg)
    K = curvature(c)
    comps = [{"ijkl": [int(x) for x in k], "expr": to_prefix(v)} for k, v in sorted(K.items())]
    return {"connection": c.to_json(), "curvature": comps, "flat": not comps}, (
        EXIT_OK if not comps else EXIT_FAIL)


def cmd_chart(cfg: RunConfig) -> tuple[dict, int]:
    chart = _chart(cfg.chart)
    out = {"chart": chart.name, "old_coords": [c.name for c in chart.old_coords],
           "new_coords": [c.name for c in chart.new_coords],
           "forward": [to_prefix(e) for e in chart.forward] if chart.forward else None,
           "inverse": [to_prefix(e) for e in chart.inverse] if chart.inverse else None,
           "singular": chart.singular}
    code = EXIT_OK
    if cfg.args.get("point"):
        pt = np.array([float(x) for x in cfg.args["point"].split(",")])
        if pt.size != chart.dim:
            raise UsageError(f"--point needs {chart.dim} comma-separated values")
        image = chart.to_new(pt)
        back = chart.to_old(image)
        defect = chart.canonicity_defect(pt)
        out.update(point=pt.tolist(), image=np.asarray(image).tolist(),
                   roundtrip_error=float(np.max(np.abs(back - pt))),
                   canonicity_defect=float(defect))
        code = EXIT_OK if defect < max(cfg.tol, 1e-8) else EXIT_FAIL
    return out, code


def cmd_eigencheck(cfg: RunConfig) -> tuple[dict, int]:
    from .fedosov import eigen_equation_residuals
    from .symbolic import is_zero

    ctx = _context(cfg)
    h = _expr(cfg.args["hamiltonian"], ctx.coords)
    w = _expr(cfg.args["candidate"], ctx.coords)
    e = _expr(cfg.args["energy"], ())
    res_re, res_im = eigen_equation_residuals(h, w, e, ctx)
    hb = 1.0 if cfg.hbar is None else cfg.hbar
    report = {}
    ok = True
    scale = _sample_norm(w, ctx.coords, hb, cfg.seed) or 1.0
    for name, r in (("real", res_re), ("imag", res_im)):
        r = sp.simplify(r)
        zero = is_zero(r) or bool(expr_equal(r, 0, seed=cfg.seed))
        norm = 0.0 if zero else _sample_norm(r, ctx.coords, hb, cfg.seed) / scale
        report[name] = {"residual": to_prefix(r), "relative_norm": norm,
                        "pass": norm <= cfg.tol}
        ok &= norm <= cfg.tol
    return {"chart": cfg.chart, "hamiltonian": to_prefix(h), "candidate": to_prefix(w),
            "energy": to_prefix(e), "order": cfg.order, "hbar_for_norms": hb,
            "residuals": report, "pass": ok}, EXIT_OK if ok else EXIT_FAIL


def cmd_theta(cfg: RunConfig) -> tuple[dict, int]:
    from .fedosov import extract_theta_coefficients

    ctx = _context(cfg)
    theta = extract_theta_coefficients(ctx, max_r=cfg.args.get("max_r") or cfg.order // 2)
    return {"chart": cfg.chart, "order": cfg.order,
            "theta": [{"rst": [int(x) for x in k], "expr": to_prefix(v)} for k, v in theta.items()]}, EXIT_OK


def cmd_purity(cfg: RunConfig) -> tuple[dict, int]:
    from .grid import GridFunction
    from .wigner import WignerState, check_basic_properties, purity_factorization, purity_idempotence

    g = GridFunction.load(cfg.args["manifest"])
    w = WignerState(g, "candidate")
    rep = check_basic_properties(w)
    if not rep.normalization_ok:
        raise NormalizationError(f"integral of W is {rep.normalization:.6g}, expected 1")
    idem = purity_idempotence(w)
    fac = purity_factorization(w)
    verdict = "pure" if idem.pure and fac.pure else ("mixed" if not (idem.pure or fac.pure)
                                                     else "inconsistent")
    out = {"manifest": cfg.args["manifest"], "normalization": rep.normalization,
           "l2": rep.l2, "l2_expected": rep.l2_expected,
           "bound_check": {"sup": rep.sup, "bound": rep.sup_bound, "pass": rep.bound_ok},
           "idempotence_defect": idem.defect, "sigma_ratio": fac.sigma_ratio,
           "verdict": verdict}
    return out, EXIT_OK if verdict == "pure" else EXIT_FAIL


def cmd_oscillator(cfg: RunConfig) -> tuple[dict, int]:
    from .moyal import hamiltonian_eigen_residuals
    from .oscillator import OscillatorEigenstate, eigen_ode_residual

    n = cfg.args["n"]
    if n < 0:
        raise UsageError("--n must be nonnegative")
    hb = 1.0 if cfg.hbar is None else cfg.hbar
    sym_state = OscillatorEigenstate(n)
    ode = eigen_ode_residual(sym_state.expr(), sym_state.energy)
    state = OscillatorEigenstate(n, hb)
    L, npts = cfg.grid_spec(hb)
    g = state.grid(L, npts)
    q = coordinates("q")[0]
    ra, rb = hamiltonian_eigen_residuals(q ** 2 / 2, g, float(state.energy))
    scale = g.max_abs()
    out = {"n": n, "hbar": hb, "energy": float(state.energy),
           "energy_symbolic": to_prefix(sym_state.energy),
           "wigner": to_prefix(sym_state.expr()), "ode_residual": to_prefix(ode),
           "grid": {"half_width": L, "points": npts},
           "residual_real": ra.max_abs() / scale,
           "residual_imag": rb.max_abs() / scale}
    grid_file = cfg.args.get("grid_file")
    if grid_file:
        out["grid_file"] = str(g.save(grid_file))
    ok = ode == 0 and max(out["residual_real"], out["residual_imag"]) < 1e-6
    return out, EXIT_OK if ok else EXIT_FAIL


def cmd_perturb(cfg: RunConfig) -> tuple[dict, int]:
    from .perturbation import PerturbationProblem, first_order_energy, solve_T1

    T, H = coordinates("T H")
    q, p = coordinates("q p")
    h1 = _expr(cfg.args["h1"], (T, H, q, p))
    h1 = h1.subs({q: sp.sqrt(2 * H) * sp.cos(T), p: -sp.sqrt(2 * H) * sp.sin(T)},
                 simultaneous=True)
    hb = 1.0 if cfg.hbar is None else cfg.hbar
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        solve_T1(h1, (T, H))
        prob = PerturbationProblem(h1, n=cfg.args["n"], hbar=hb, lam=cfg.args["lam"])
        res = first_order_energy(prob, check_size=True)
    return {"h1": to_prefix(h1), "n": cfg.args["n"], "hbar": hb, "E0": res.e0, "E1": res.e1,
            "E1_imag": res.imaginary, "secular_shift": to_prefix(res.secular_shift),
            "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught})}, EXIT_OK


def cmd_wigner_transform(cfg: RunConfig) -> tuple[dict, int]:
    from .oscillator import hermite_wavefunction
    from .wigner import check_basic_properties, wigner_from_wavefunction

    hb = 1.0 if cfg.hbar is None else cfg.hbar
    L, npts = cfg.grid_spec(hb)
    qs = np.linspace(-L, L, npts)
    if cfg.args.get("n") is not None:
        psi = hermite_wavefunction(cfg.args["n"], qs, hb)
        source = f"oscillator n={cfg.args['n']}"
    elif cfg.args.get("psi"):
        q = coordinates("q")[0]
        re = _expr(cfg.args["psi"], (q,)).subs(HBAR, hb)
        im = _expr(cfg.args.get("psi_imag") or "0", (q,)).subs(HBAR, hb)
        f = sp.lambdify(q, re + sp.I * im, "numpy")
        psi = np.broadcast_to(np.asarray(f(qs), dtype=complex), qs.shape)
        source = cfg.args["psi"]
    else:
        raise UsageError("wigner-transform needs --n or --psi")
    w = wigner_from_wavefunction(psi, qs, hb)
    rep = check_basic_properties(w)
    out = {"source": source, "hbar": hb, "grid": {"half_width": L, "points": npts},
           "properties": rep.to_dict()}
    if cfg.args.get("grid_file"):
        out["grid_file"] = str(w.grid.save(cfg.args["grid_file"]))
    if cfg.args.get("csv"):
        w.grid.to_csv(cfg.args["csv"])
        out["csv"] = cfg.args["csv"]
    return out, EXIT_OK if rep.all_ok else EXIT_FAIL


COMMANDS = {
    "star": cmd_star, "lift": cmd_lift, "connection": cmd_connection,
    "curvature": cmd_curvature, "chart": cmd_chart, "eigencheck": cmd_eigencheck,
    "theta": cmd_theta, "purity": cmd_purity, "oscillator": cmd_oscillator,
    "perturb": cmd_perturb, "wigner-transform": cmd_wigner_transform,
}


# ---------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--chart", help="chart registry name, e.g. flat2d, oscillatorTH")
    common.add_argument("--order", type=int, default=6, help="Weyl truncation degree N (even)")
    common.add_argument("--hbar", type=float, help="numeric Planck constant")
    common.add_argument("--grid", help="grid as 'L:n' (half width, points) or 'n'")
    common.add_argument("--tol", type=float, default=1e-9, help="pass/fail tolerance")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized equality tests")
    common.add_argument("--out", help="also write the JSON result here")

    parser = _Parser(prog="fedosovkit", description="Deformation quantization toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)

    s = sub.add_parser("star", parents=[common], help="star product of two expressions")
    s.add_argument("a")
    s.add_argument("b")
    s = sub.add_parser("lift", parents=[common], help="Fedosov lift of a function")
    s.add_argument("f")
    s.add_argument("--degree", type=int)
    sub.add_parser("connection", parents=[common], help="flat connection in a chart")
    s = sub.add_parser("curvature", parents=[common], help="curvature of a connection")
    s.add_argument("--connection", help="connection JSON file instead of --chart")
    s = sub.add_parser("chart", parents=[common], help="describe a chart, optionally at a point")
    s.add_argument("--point", help="comma-separated old coordinates")
    s = sub.add_parser("eigencheck", parents=[common], help="residuals of H * W = E W")
    s.add_argument("hamiltonian")
    s.add_argument("candidate")
    s.add_argument("energy")
    s = sub.add_parser("theta", parents=[common], help="eigen-equation coefficients in (T, H)")
    s.add_argument("--max-r", dest="max_r", type=int)
    s = sub.add_parser("purity", parents=[common], help="purity tests on a grid manifest")
    s.add_argument("manifest")
    s = sub.add_parser("oscillator", parents=[common], help="oscillator eigenstate report")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--grid-file", dest="grid_file", help="write the W_n grid manifest here")
    s = sub.add_parser("perturb", parents=[common], help="first-order energy shift")
    s.add_argument("--h1", required=True, help="perturbation in T, H (or q, p)")
    s.add_argument("--n", type=int, default=0)
    s.add_argument("--lam", type=float, default=1e-3, help="size used by the smallness check")
    s = sub.add_parser("wigner-transform", parents=[common], help="Wigner function of a wavefunction")
    s.add_argument("--n", type=int, help="oscillator eigenfunction index")
    s.add_argument("--psi", help="real part of psi(q) in prefix syntax")
    s.add_argument("--psi-imag", dest="psi_imag", help="imaginary part of psi(q)")
    s.add_argument("--grid-file", dest="grid_file", help="write the grid manifest here")
    s.add_argument("--csv", help="write a q,p,value CSV here")
    return parser


def parse_config(argv) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    name = ns.pop("subcommand")
    if name is None:
        raise UsageError("a subcommand is required")
    common = {k: ns.pop(k) for k in ("chart", "order", "hbar", "grid", "tol", "seed", "out")}
    return RunConfig(subcommand=name, args=ns, **common).validate()


def run(argv=None) -> tuple[dict, int]:
    """Parse, execute and return (document, exit code) without printing."""
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        return {"error": {"kind": "usage", "message": str(exc)}, "exit_code": EXIT_USAGE}, EXIT_USAGE
    doc = {"config": asdict(cfg)}
    try:
        result, code = COMMANDS[cfg.subcommand](cfg)
        doc.update(result)
    except (UsageError, ParseError, UnknownVariableError) as exc:
        err = {"kind": "usage", "message": str(exc)}
        if isinstance(exc, ParseError):
            err["position"] = exc.position
        doc["error"], code = err, EXIT_USAGE
    except (DomainError, FlatnessError, NonCanonicalError, NormalizationError, NotPureError,
            GridError, OpaqueDerivativeError, FedosovKitError) as exc:
        doc["error"], code = {"kind": "domain", "type": type(exc).__name__,
                              "message": str(exc)}, EXIT_DOMAIN
    except FileNotFoundError as exc:
        doc["error"], code = {"kind": "usage", "message": str(exc)}, EXIT_USAGE
    doc["exit_code"] = code
    return doc, code


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def main(argv=None) -> int:
    doc, code = run(argv)
    text = json.dumps(doc, indent=2, default=_jsonable)
    print(text)
    out = doc.get("config", {}).get("out")
    if out:
        Path(out).write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
