"""Command-line driver: identity suites, Frobenius tables, asymptotic fits and Proca tables."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import boundary_series as bs
from . import geometry as G
from . import jetcalc as jc
from . import tractor as T
from .forms import WeightedFormField

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESONANCE, EXIT_NUMERIC = 0, 1, 2, 3, 4

DEFAULT_TOLERANCES = {
    "dd": 1e-9, "naturality": 1e-8, "hodge": 1e-9, "hodge_sign": 1e-10, "sl2": 1e-8,
    "weitzenbock": 1e-8, "commutator": 1e-8, "commutator_flat": 1e-10, "appendix": 1e-11,
    "connection_forms": 1e-12, "proca": 1e-7, "potential": 1e-7, "beth": 1e-9,
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers

def fmt(x) -> str:
    return format(float(x) + 0.0, ".17g")


def _encode(obj) -> str:
    """JSON with every float printed to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if math.isfinite(x) else json.dumps(str(x))
    if isinstance(obj, (complex, np.complexfloating)):
        return _encode([obj.real, obj.imag])
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


@dataclass
class RunConfig:
    command: str
    model: str = "de_sitter"
    d: int = 3
    suite: str = "all"
    k_range: list | None = None
    weights: int = 2
    points: int = 8
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: str | None = None
    format: str = "json"
    timestamp: bool = True
    plot: bool = False
    extra: dict = field(default_factory=dict)


def _emit(cfg: RunConfig, report: dict, csv_header, csv_rows) -> None:
    if cfg.timestamp:
        report = {**report, "timestamp": datetime.now(timezone.utc).isoformat()}
    text = _encode(report) + "\n" if cfg.format == "json" else _csv_text(csv_header, csv_rows)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _plot_path(cfg: RunConfig, stem: str) -> Path:
    if cfg.out:
        return Path(cfg.out).with_suffix(".png")
    return Path(f"{stem}.png")


def _figure():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


# ---------------------------------------------------------------------------
# identity suites

def _rel(a, ref) -> float:
    return a.max_abs() / (1 + ref)


def _random_weights(rng, count):
    return [complex(rng.normal(0.3, 0.8), rng.normal(0, 0.6)) for _ in range(count)]


def suite_dd(geom, rng, cfg) -> dict:
    ctx = geom.at(geom.sample_points(rng, cfg.points), 2)
    n, worst = geom.n, 0.0
    for om in _random_weights(rng, cfg.weights):
        for k in _k_values(cfg, n, 0, n - 1):
            for sc in (ctx.lc, ctx.scale("S")):
                F = T.TractorFormField.random(rng, n, k, om).evaluate(sc)
                worst = max(worst, _rel(T.D(T.D(F)), F.max_abs()))
    return {"DD": worst}


def suite_naturality(geom, rng, cfg) -> dict:
    ctx = geom.at(geom.sample_points(rng, cfg.points), 2)
    lc, S = ctx.lc, ctx.scale("S")
    n = geom.n
    ops = {"D": (T.D, 0, n), "hodge": (T.tractor_hodge, 0, n + 1), "Dstar": (T.Dstar, 1, n + 1),
           "laplacian": (T.tractor_laplacian, 0, n + 1), "I": (T.I_op, 0, n),
           "Istar": (T.Istar_op, 1, n + 1)}
    out = {name: 0.0 for name in ops}
    for om in _random_weights(rng, cfg.weights):
        for k in _k_values(cfg, n, 0, n + 1):
            F = T.TractorFormField.random(rng, n, k, om).evaluate(lc)
            FS = T.transport(F, S)
            for name, (op, lo, hi) in ops.items():
                if lo <= k <= hi:
                    a, b = T.transport(op(F), S), op(FS)
                    out[name] = max(out[name], _rel(a - b, b.max_abs()))
    return out


def suite_hodge(geom, rng, cfg) -> dict:
    ctx = geom.at(geom.sample_points(rng, cfg.points), 1)
    n = geom.n
    res = {"defining_property": 0.0, "double_star": 0.0}
    for om in _random_weights(rng, cfg.weights):
        for k in _k_values(cfg, n, 0, n + 1):
            for sc in (ctx.lc, ctx.scale("S")):
                F = T.TractorFormField.random(rng, n, k, om).evaluate(sc)
                wedge = T.tractor_wedge(F, T.tractor_hodge(F)).mu.comps
                top = wedge[(slice(None),) + tuple(range(n))]
                ref = T.full_h(F, F) * T.volume_top(sc)
                res["defining_property"] = max(res["defining_property"],
                                               (top - ref).max_abs() / (1 + ref.max_abs()))
                ss = T.tractor_hodge(T.tractor_hodge(F))
                res["double_star"] = max(res["double_star"],
                                         _rel(ss - F.scaled(T.hodge_sign(sc, k)), F.max_abs()))
    return res


def suite_sl2(geom, rng, cfg) -> dict:
    out: dict[str, float] = {}
    for om in _random_weights(rng, cfg.weights):
        for k in _k_values(cfg, geom.n, 0, geom.n + 1):
            for scale in ("LC", "S"):
                rep = T.sl2_relations(geom, om, k, trials=1, points=cfg.points, scale=scale,
                                      seed=int(rng.integers(1 << 30)))
                for key, v in rep.items():
                    out[key] = max(out.get(key, 0.0), v)
    # {I, I*} = -f sigma
    ctx = geom.at(geom.sample_points(rng, cfg.points), 1)
    worst = 0.0
    for k in _k_values(cfg, geom.n, 0, geom.n):
        S = ctx.scale("S")
        F = T.TractorFormField.random(rng, geom.n, k, _random_weights(rng, 1)[0]).evaluate(S)
        a = T.Istar_op(T.I_op(F))
        if k >= 1:
            a = a + T.I_op(T.Istar_op(F))
        b = F.scaled(-S.f * S.sigma).with_weight(a.omega)
        worst = max(worst, _rel(a - b.truncate(a.order), F.max_abs()))
    out["I_Istar"] = worst
    return out


def suite_weitzenbock(geom, rng, cfg) -> dict:
    ctx = geom.at(geom.sample_points(rng, cfg.points), 2)
    n, worst = geom.n, 0.0
    for om in _random_weights(rng, cfg.weights):
        for k in _k_values(cfg, n, 0, n + 1):
            for sc in (ctx.lc, ctx.scale("S")):
                F = T.TractorFormField.random(rng, n, k, om).evaluate(sc)
                worst = max(worst, _rel(T.anticommutator_DDstar(F) + T.tractor_laplacian(F), F.max_abs()))
    scalars = 0.0
    for _ in range(100):
        om = complex(rng.normal(0, 2), rng.normal(0, 2))
        k = int(rng.integers(1, n + 1))
        rep = T.order_zero_bookkeeping(om, k, n)
        scalars = max(scalars, abs(rep["top_corrected"]), abs(rep["bottom"]))
    return {"anticommutator_plus_laplacian": worst, "order_zero_corrected": scalars}


def suite_commutator(geom, rng, cfg) -> dict:
    ctx = geom.at(geom.sample_points(rng, cfg.points), 2)
    worst = 0.0
    flat = isinstance(geom, G.MinkowskiCone)
    for om in _random_weights(rng, cfg.weights):
        for k in _k_values(cfg, geom.n, 0, geom.n + 1):
            for sc in (ctx.lc, ctx.scale("S")):
                F = T.TractorFormField.random(rng, geom.n, k, om).evaluate(sc)
                c = T.commutator_x_laplacian(F)
                if flat:
                    worst = max(worst, _rel(c, F.max_abs()))
                else:
                    worst = max(worst, _rel(c - T.commutator_x_laplacian_closed(F), F.max_abs()))
    return {"x_laplacian_vanishes" if flat else "x_laplacian": worst}


def suite_appendix(geom, rng, cfg) -> dict:
    pts = geom.sample_points(rng, cfg.points)
    rho = pts[:, 0]
    out = {}
    if isinstance(geom, G.DeSitter):
        d = geom.d
        out["box_rho"] = float(np.abs(G.box_rho(geom, pts).value - 2 * rho * (d - 2 + 2 * rho * (3 - d))).max())
    else:
        n = geom.n
        out["box_rho"] = float(np.abs(G.box_rho(geom, pts).value + (n - 3) * rho ** 3).max())
        out["grad_rho_squared"] = float(np.abs(G.grad_rho_squared(geom, pts).value - rho ** 4).max())
    for hatted in (False, True):
        diff = G.connection_forms(geom, pts, "S" if hatted else "LC") - G.appendix_connection_forms(geom, pts, hatted)
        out["connection_forms_" + ("S" if hatted else "LC")] = float(np.abs(diff).max())
    return out


def suite_proca(geom, rng, cfg) -> dict:
    n = geom.n
    out = {"gauge_slot": 0.0, "proca_slot": 0.0, "potential": 0.0}
    for om in _random_weights(rng, cfg.weights):
        for k in range(1, min(n, 3) + 1):
            phi = WeightedFormField.random(rng, n, k, 0)
            rep = T.proca_system_check(geom, phi, om, geom.sample_points(rng, max(2, cfg.points // 2)))
            out["gauge_slot"] = max(out["gauge_slot"], rep.gauge_slot_residual)
            out["proca_slot"] = max(out["proca_slot"], rep.proca_slot_residual)
            ctx = geom.at(geom.sample_points(rng, max(2, cfg.points // 2)), 3)
            F = T.D(T.TractorFormField.random(rng, n, k - 1, om).evaluate(ctx.lc))
            A = T.potential_recover(F)
            DA = T.D(A)
            out["potential"] = max(out["potential"], _rel(DA - F.truncate(DA.order), F.max_abs()))
    return out


def suite_beth(geom, rng, cfg) -> dict:
    out = {"beth": 0.0, "xi_squared": 0.0, "divergence": 0.0}
    for _ in range(cfg.weights):
        m = float(rng.uniform(0, 2))
        rep = T.beth_minkowski(geom, jc.random_field(rng, geom.n), m, geom.sample_points(rng, cfg.points))
        out["beth"] = max(out["beth"], rep.residual)
        out["xi_squared"] = max(out["xi_squared"], rep.xi_squared_residual)
        out["divergence"] = max(out["divergence"], rep.divergence_residual)
    return out


SUITES = {
    "de_sitter": {"dd": suite_dd, "naturality": suite_naturality, "hodge": suite_hodge, "sl2": suite_sl2,
                  "weitzenbock": suite_weitzenbock, "commutator": suite_commutator,
                  "appendix": suite_appendix, "proca": suite_proca},
    "minkowski_cone": {"commutator": suite_commutator, "appendix": suite_appendix, "beth": suite_beth},
}

_TOL_KEY = {"double_star": "hodge_sign", "x_laplacian_vanishes": "commutator_flat",
            "connection_forms_LC": "connection_forms", "connection_forms_S": "connection_forms",
            "grad_rho_squared": "appendix", "box_rho": "appendix", "potential": "potential",
            "order_zero_corrected": "weitzenbock"}


def _k_values(cfg: RunConfig, n: int, lo: int, hi: int):
    ks = range(lo, hi + 1) if cfg.k_range is None else range(cfg.k_range[0], cfg.k_range[1] + 1)
    return [k for k in ks if lo <= k <= hi]


def _make_geometry(cfg: RunConfig):
    if cfg.model == "de_sitter":
        return G.DeSitter(cfg.d)
    if cfg.model == "minkowski_cone":
        return G.MinkowskiCone(cfg.d + 1)
    raise UsageError(f"unknown model {cfg.model!r}")


def cmd_verify(cfg: RunConfig) -> int:
    geom = _make_geometry(cfg)
    available = SUITES[cfg.model]
    if cfg.suite == "all":
        names = list(available)
    elif cfg.suite in available:
        names = [cfg.suite]
    else:
        raise UsageError(f"suite {cfg.suite!r} is not available on {cfg.model}; "
                         f"choose from {', '.join(available)}")
    rng = np.random.default_rng(cfg.seed)
    results, rows, ok = {}, [], True
    for name in names:
        t0 = time.perf_counter()
        values = available[name](geom, rng, cfg)
        entry = {}
        for key, v in values.items():
            tol = cfg.tolerances.get(_TOL_KEY.get(key, name), cfg.tolerances.get(name, 1e-8))
            passed = bool(v <= tol)
            ok &= passed
            entry[key] = {"residual": v, "tolerance": tol, "pass": passed}
            rows.append((name, key, float(v), float(tol), "PASS" if passed else "FAIL"))
        results[name] = entry
        if cfg.timestamp:
            entry["seconds"] = time.perf_counter() - t0
    report = {"command": "verify", "model": cfg.model, "d": cfg.d, "seed": cfg.seed, "suites": results, "pass": ok}
    _emit(cfg, report, ("suite", "identity", "residual", "tolerance", "status"), rows)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# frobenius

def _parse_nu(text: str, h0: complex):
    t = text.strip().replace(" ", "")
    if t in ("h0-1", "second"):
        return h0 - 1
    if t == "1-h0":
        return 1 - h0
    try:
        return complex(t)
    except ValueError as exc:
        raise UsageError(f"cannot parse --nu {text!r}") from exc


def cmd_frobenius(cfg: RunConfig) -> int:
    x = cfg.extra
    N = x["N"]
    if x.get("formal"):
        if x.get("h0") is None:
            raise UsageError("--formal needs --h0")
        h0 = complex(x["h0"])
        try:
            series = bs.formal_operator_coeffs(h0, N, _parse_nu(x.get("nu") or "0", h0))
        except bs.ResonanceError:
            raise
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        summary = {"termwise_max": max((abs(k * (k - h0 + 1) * series.coeffs[k] + series.coeffs[k - 1])
                                        for k in range(1, N + 1)), default=0.0)}
    else:
        if x.get("m") is None:
            raise UsageError("--m is required unless --formal is given")
        d, l = cfg.d, x.get("l", 0)
        omega = bs.mass_to_weights(d, x["m"])[x.get("root", 0)]
        h0 = bs.h0_of(omega, d)
        nu = _parse_nu(x.get("nu") or "0", h0)
        try:
            series = bs.frobenius_desitter(d, omega, l * (l + d - 1), nu, N,
                                           recurrence=x.get("recurrence", "derived"))
        except bs.ResonanceError:
            raise
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        probes = (1e-3, 1e-4)
        slope = bs.residual_slope(series, probes)
        summary = {"probes": list(probes), "residual_slope": slope, "expected_slope": float(np.real(nu)) + N}
    report = {"command": "frobenius", **series.record(), "residuals": summary}
    _emit(cfg, report, ("k", "re_alpha", "im_alpha"), series.csv_rows())
    if cfg.plot:
        plt = _figure()
        fig, ax = plt.subplots(figsize=(5, 3.5))
        mags = [abs(c) for c in series.coeffs]
        ax.semilogy(range(len(mags)), [m if m > 0 else np.nan for m in mags], "o-")
        ax.set_xlabel("k")
        ax.set_ylabel("|alpha_k|")
        ax.set_title(f"{series.source}, nu={complex(series.nu):.4g}")
        fig.tight_layout()
        fig.savefig(_plot_path(cfg, "frobenius"), dpi=120)
        plt.close(fig)
    return EXIT_OK


# ---------------------------------------------------------------------------
# asymptotics

def cmd_asymptotics(cfg: RunConfig) -> int:
    x = cfg.extra
    d, m, l = cfg.d, x["m"], x.get("l", 0)
    lam = l * (l + d - 1)
    if x.get("reconstruct"):
        rep = bs.complex_branch_check(d, m, lam, window=(x["rho_end"], 0.3))
        tol = cfg.tolerances.get("reconstruct", 1e-6)
        ok = rep.max_relative_error <= tol
        report = {"command": "asymptotics", "mode": "reconstruct", "d": d, "m": m, "lambda": lam,
                  "omega": rep.omega, "h0": rep.h0, "amplitudes": list(rep.amplitudes),
                  "window": list(rep.window), "residuals": {"max_relative_error": rep.max_relative_error,
                                                            "tolerance": tol}, "pass": ok}
        rows = [("max_relative_error", rep.max_relative_error, tol)]
        _emit(cfg, report, ("quantity", "value", "tolerance"), rows)
        curve_omega = rep.omega
        rho_start, rho_end = 0.3, x["rho_end"]
        fit = None
    else:
        try:
            fit = bs.integrate_and_fit(d, m, lam, rho_start=x["rho_start"], rho_end=x["rho_end"],
                                       weight_index=x.get("root", 0))
        except ValueError as exc:
            raise UsageError(f"{exc} (use --reconstruct on the complex branch)") from exc
        rel = [abs(a - b) / max(abs(b), 1e-12) for a, b in zip(fit.exponents, sorted(fit.expected, key=lambda z: z.real))]
        tol = cfg.tolerances.get("exponents", 1e-2)
        ok = all(r <= tol or abs(a - b) <= tol for r, a, b in zip(rel, fit.exponents, sorted(fit.expected, key=lambda z: z.real)))
        report = {"command": "asymptotics", "mode": "fit", "d": d, "m": m, "lambda": lam, **fit.record(),
                  "residuals": {"fit": fit.residual, "relative_exponent_error": rel, "tolerance": tol}, "pass": ok}
        rows = [(f"e{i}", e, complex(t).real, a.real, a.imag) for i, (e, t, a)
                in enumerate(zip(fit.exponents, sorted(fit.expected, key=lambda z: z.real), fit.amplitudes))]
        _emit(cfg, report, ("exponent", "fitted", "expected", "re_amplitude", "im_amplitude"), rows)
        curve_omega = bs.mass_to_weights(d, m)[x.get("root", 0)]
        rho_start, rho_end = x["rho_start"], x["rho_end"]
    if x.get("curve_csv") or cfg.plot:
        sol = bs.integrate_radial(d, curve_omega, lam, rho_start, rho_end, (1.0, 0.3))
        rho = np.geomspace(rho_end, rho_start, 200)
        phi = sol.sol(rho)[0]
        if x.get("curve_csv"):
            Path(x["curve_csv"]).write_text(_csv_text(("rho", "re_phi", "im_phi"),
                                                      [(float(r), float(p.real), float(p.imag)) for r, p in zip(rho, phi)]))
        if cfg.plot:
            plt = _figure()
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.loglog(rho, np.abs(phi), label="|phi| (integrated)")
            if fit is not None:
                tilde = np.abs(rho ** (-curve_omega.real / 2) * phi)
                ax.loglog(rho, tilde, label="|rho^(-omega/2) phi|")
            ax.set_xlabel("rho")
            ax.legend()
            fig.tight_layout()
            fig.savefig(_plot_path(cfg, "asymptotics"), dpi=120)
            plt.close(fig)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# proca

def cmd_proca(cfg: RunConfig) -> int:
    x = cfg.extra
    n = x["n"]
    geom = G.DeSitter(n - 1)
    rng = np.random.default_rng(cfg.seed)
    ks = x.get("k") or list(range(1, n + 1))
    omegas = x.get("omega") or [0.0]
    rows, table = [], []
    tol = cfg.tolerances.get("proca", 1e-7)
    ok = True
    for k in ks:
        for om in omegas:
            m2 = T.proca_mass_squared(om, k, n)
            row = {"n": n, "k": k, "omega": om, "m2": m2.real if isinstance(m2, complex) else m2,
                   "excluded": False, "gauge_residual": None, "proca_residual": None}
            try:
                phi = WeightedFormField.random(rng, n, k, 0)
                rep = T.proca_system_check(geom, phi, om, geom.sample_points(rng, cfg.points))
                row["gauge_residual"] = rep.gauge_slot_residual
                row["proca_residual"] = rep.proca_slot_residual
                ok &= rep.gauge_slot_residual <= tol and rep.proca_slot_residual <= tol
            except T.ExcludedWeightError as exc:
                row["excluded"] = str(exc)
            table.append(row)
            rows.append((n, k, float(om), float(np.real(m2)), row["gauge_residual"] if row["gauge_residual"] is not None else "",
                         row["proca_residual"] if row["proca_residual"] is not None else "", bool(row["excluded"])))
    report = {"command": "proca", "seed": cfg.seed, "rows": table, "tolerance": tol, "pass": ok}
    _emit(cfg, report, ("n", "k", "omega", "m2", "gauge_residual", "proca_residual", "excluded"), rows)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the flags (flags take precedence)")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--no-timestamp", action="store_true", help="omit wall-clock fields")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--points", type=int, default=8)
    common.add_argument("--plot", action="store_true", help="also render a PNG next to the report")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="override a tolerance")

    p = argparse.ArgumentParser(prog="artifact", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run identity suites")
    v.add_argument("--model", choices=("de_sitter", "minkowski_cone"), default="de_sitter")
    v.add_argument("--d", type=int, default=3)
    v.add_argument("--suite", default="all")
    v.add_argument("--k-range", type=int, nargs=2, metavar=("KMIN", "KMAX"))
    v.add_argument("--weights", type=int, default=2, help="random complex weights per suite")

    f = sub.add_parser("frobenius", parents=[common], help="Frobenius coefficient table")
    f.add_argument("--d", type=int, default=3)
    f.add_argument("--m", type=float)
    f.add_argument("--l", type=int, default=0)
    f.add_argument("--nu", default="0", help="0, h0-1 (1-h0 with --formal), or a complex number")
    f.add_argument("--N", type=int, default=8)
    f.add_argument("--root", type=int, choices=(0, 1), default=0, help="which mass root to use as omega")
    f.add_argument("--recurrence", choices=("derived", "printed"), default="derived")
    f.add_argument("--formal", action="store_true", help="formal solution operator coefficients")
    f.add_argument("--h0", type=complex)

    a = sub.add_parser("asymptotics", parents=[common], help="integrate and fit boundary exponents")
    a.add_argument("--d", type=int, default=3)
    a.add_argument("--m", type=float, required=True)
    a.add_argument("--l", type=int, default=0)
    a.add_argument("--root", type=int, choices=(0, 1), default=0)
    a.add_argument("--rho-start", type=float, default=0.25)
    a.add_argument("--rho-end", type=float, default=1e-3)
    a.add_argument("--reconstruct", action="store_true", help="Frobenius reconstruction (any branch)")
    a.add_argument("--curve-csv", help="write (rho, phi) samples here")

    r = sub.add_parser("proca", parents=[common], help="Proca mass and gauge table")
    r.add_argument("--n", type=int, default=4)
    r.add_argument("--k", type=int, nargs="+")
    r.add_argument("--omega", type=float, nargs="+")
    return p


_EXTRA = {"frobenius": ("m", "l", "nu", "N", "root", "recurrence", "formal", "h0"),
          "asymptotics": ("m", "l", "root", "rho_start", "rho_end", "reconstruct", "curve_csv"),
          "proca": ("n", "k", "omega"), "verify": ()}


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    bad = set(doc) - known - {"command", "tolerances"}
    if bad:
        raise UsageError(f"unknown config keys: {', '.join(sorted(bad))}")
    sub.set_defaults(**{k: v for k, v in doc.items() if k in known})
    args = parser.parse_args(argv)
    if "tolerances" in doc:
        args.tol = [f"{k}={v}" for k, v in doc["tolerances"].items()] + list(args.tol)
    return args


def _config_from_args(args) -> RunConfig:
    tols = dict(DEFAULT_TOLERANCES)
    for item in args.tol:
        name, _, value = item.partition("=")
        try:
            tols[name] = float(value)
        except ValueError as exc:
            raise UsageError(f"bad tolerance {item!r}") from exc
    cfg = RunConfig(command=args.command, seed=args.seed, points=args.points, tolerances=tols, out=args.out,
                    format=args.format, timestamp=not args.no_timestamp, plot=args.plot)
    for key in ("model", "d", "suite", "k_range", "weights"):
        if hasattr(args, key):
            setattr(cfg, key, getattr(args, key))
    cfg.extra = {k: getattr(args, k) for k in _EXTRA[args.command]}
    return cfg


COMMANDS = {"verify": cmd_verify, "frobenius": cmd_frobenius, "asymptotics": cmd_asymptotics, "proca": cmd_proca}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        cfg = _config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"artifact: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except bs.ResonanceError as exc:
        print(f"artifact: resonance at k={exc.k}", file=sys.stderr)
        return EXIT_RESONANCE
    except (bs.IntegrationError, bs.FitError, np.linalg.LinAlgError) as exc:
        print(f"artifact: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (T.TractorError, G.GeometryError) as exc:
        print(f"artifact: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
