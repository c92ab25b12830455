"""Command-line driver: every command writes CSV/JSON/SVG artifacts and a manifest.

Exit status is 0 when every check in the manifest passed, 1 when a check
failed or a numerical step raised, and 2 for invalid configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import traceback
from pathlib import Path
from typing import Any, Callable

OUT_ENV = "MEANFIELD_OUT"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
COMMANDS = ("solve", "continue", "energy", "mt-check", "testfn-sweep", "blowup", "quantize", "degree", "minmax", "green-check")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meanfield", description="Mean field equation experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV}/<command>-<hash>)")
    p.add_argument("--seed", type=int, help="seed for every random draw")
    p.add_argument("--threads", type=int, help="BLAS thread count")
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE", help="override a config field, e.g. domain.h=0.0078125")
    g = p.add_argument_group("shortcuts")
    g.add_argument("--domain", help="domain kind")
    g.add_argument("--h", type=float, help="grid spacing")
    g.add_argument("--measure", help="dirac | uniform | JSON measure section")
    g.add_argument("--lambda", dest="lam", type=float, help="lambda in units of pi")
    g.add_argument("--lambda-range", nargs=2, type=float, help="lambda range in units of pi")
    g.add_argument("--tol", type=float, help="Newton tolerance")
    g.add_argument("--k", type=int, help="number of concentration points")
    g.add_argument("--branch", help="run directory or manifest of an earlier continue/quantize run")
    g.add_argument("--rho", type=float, help="cluster radius for peak masses")
    g.add_argument("--threshold", type=float, help="peak threshold as a fraction of the maximum")
    g.add_argument("--regime", choices=("auto", "nondeg", "deg"), help="rescaling regime")
    return p


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    ov: dict[str, Any] = {}
    for item in args.set:
        key, _, raw = item.partition("=")
        try:
            ov[key] = json.loads(raw)
        except json.JSONDecodeError:
            ov[key] = raw
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.domain:
        ov["domain.kind"] = args.domain
    if args.h:
        ov["domain.h"] = args.h
    if args.measure:
        m = args.measure
        ov["measure"] = json.loads(m) if m.lstrip().startswith("{") else {"kind": m}
    if args.lam is not None:
        ov["sweep.lam"] = args.lam
    if args.lambda_range:
        ov["sweep.lam_range"] = list(args.lambda_range)
    if args.tol:
        ov["solver.tol"] = args.tol
    if args.k:
        ov["sweep.k"] = args.k
    if args.branch:
        ov["analysis.branch"] = args.branch
    if args.rho:
        ov["analysis.rho"] = args.rho
    if args.threshold:
        ov["analysis.threshold"] = args.threshold
    if args.regime:
        ov["analysis.regime"] = args.regime
    return ov


# -- commands -----------------------------------------------------------------
# Each takes (cfg, out_dir, manifest) and fills in artifacts, checks and results.


def _cmd_solve(cfg, out, man):
    from . import io, solver

    dom = cfg.domain.build()
    meas = cfg.measure.build()
    res = solver._reach(cfg.lam, meas, dom, cfg.solver.build())
    if res is None:
        raise RuntimeError(f"no converged solution at lambda = {cfg.lam}")
    man.add(out, io.write_field_csv(res.u, out / "u.csv"), *io.write_field_binary(res.u, out / "u.bin"))
    man.results["solution"] = res.summary()
    man.check("converged", res.converged, residual=res.residual, tol=res.tol_effective)
    man.check("invariants", not res.invariant_violations(meas), violations=res.invariant_violations(meas))


def _branch(cfg, dom, meas, amplitude: bool):
    from . import solver

    a, b = cfg.sweep.lam_range
    br = solver.continue_lambda(a * math.pi, b * math.pi, meas, dom, cfg.solver.build())
    end = cfg.sweep.u_max_end
    # a branch that stalls at a fold, or reaches lambda_end below the fold,
    # is followed further by prescribing the peak value
    if amplitude and end is not None and br.entries and br.flag in (None, "nonconvergence") and br.entries[-1].u_max < end:
        ext = solver.continue_amplitude(br.entries[-1], end, meas, cfg.solver.build())
        br.entries += ext.entries[1:]
        br.flag = ext.flag
        br.last_good_lambda = ext.last_good_lambda
    return br


def _write_branch(br, out, man, fields: bool = True):
    from . import io, svg

    rows = [
        (i, e.lam, e.lam / math.pi, e.residual, e.u_max, e.nu_total, e.log_I, e.iterations, int(e.converged))
        for i, e in enumerate(br.entries)
    ]
    man.add(out, io.write_csv(out / "branch.csv", ["entry", "lambda", "lambda_over_pi", "residual", "u_max", "nu_total", "log_I", "iterations", "converged"], rows))
    if fields:
        (out / "fields").mkdir(exist_ok=True)
        for i, e in enumerate(br.entries):
            man.add(out, io.write_field_csv(e.u, out / "fields" / f"entry_{i:03d}.csv"))
    man.add(out, svg.line_plot(out / "branch.svg", [("u_max", [e.lam / math.pi for e in br.entries], [e.u_max for e in br.entries])], "lambda / pi", "max u", "solution branch"))
    man.results["branch"] = {"flag": br.flag, "entries": len(br.entries), "last_good_lambda": br.last_good_lambda}


def _cmd_continue(cfg, out, man):
    dom, meas = cfg.domain.build(), cfg.measure.build()
    br = _branch(cfg, dom, meas, amplitude=False)
    _write_branch(br, out, man)
    man.check("nonempty", len(br.entries) > 0)
    man.check("all_converged", all(e.converged for e in br.entries))


def _cmd_energy(cfg, out, man):
    from . import energy, io
    from .energy import BarycenterConfig

    dom, meas = cfg.domain.build(), cfg.measure.build()
    curve = cfg.domain.curve(dom)
    sw = cfg.sweep
    k = len(sw.thetas)
    wts = tuple(sw.weights) if sw.weights else tuple([1.0 / k] * k)
    r = (sw.r_values or [0.9])[0]
    prof = BarycenterConfig(tuple(sw.thetas), wts, r, sw.alpha_tilde).profile(curve, dom.area)
    E, L = energy.dirichlet_energy(prof), energy.log_integral(prof, meas)
    J = 0.5 * E - cfg.lam * L
    man.results["energy"] = {"r": r, "dirichlet_energy": E, "log_integral": L, "J": J, "lambda": cfg.lam}
    man.add(out, io.write_csv(out / "energy.csv", ["r", "dirichlet_energy", "log_integral", "J"], [(r, E, L, J)]))
    man.check("finite", all(math.isfinite(v) for v in (E, L, J)))


def _cmd_mt_check(cfg, out, man):
    import numpy as np

    from . import energy, io, svg

    dom, meas = cfg.domain.build(), cfg.measure.build()
    # C is calibrated on a held-out corpus, then tested on a fresh one
    calib_ss, test_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    calib = energy.random_smooth_fields(dom, cfg.sweep.n_fields, np.random.default_rng(calib_ss))
    logC = energy.calibrate_mt_constant(calib, meas, cfg.analysis.mt_margin)
    gaps = [energy.mt_gap(u, meas, logC) for u in energy.random_smooth_fields(dom, cfg.sweep.n_fields, np.random.default_rng(test_ss))]
    man.add(out, io.write_csv(out / "corpus.csv", ["index", "mt_gap"], enumerate(gaps)))
    man.check("mt_gap_nonnegative", min(gaps) >= 0, min_gap=min(gaps), log_C=logC)
    center = (0.0, 0.0) if dom.kind in ("disk",) else tuple(dom.points[np.argmax(dom.distance_to_boundary(dom.points))])
    r0 = 0.5 * float(dom.distance_to_boundary(np.array([center]))[0])
    lams = [l * math.pi for l in cfg.sweep.lams]
    fam = energy.bubble_family_slopes(center, r0, dom.area, lams, cfg.sweep.eps_values, meas)
    rows, series = [], []
    for lam in lams:
        d = fam["lambdas"][lam]
        rows += [(lam, e, x, j) for e, x, j in zip(cfg.sweep.eps_values, fam["log_inv_eps2"], d["J"])]
        series.append((f"lambda = {lam / math.pi:g} pi", fam["log_inv_eps2"], d["J"]))
        pred = 8 * math.pi - lam
        ok = abs(d["fit"].slope / pred - 1) <= 0.10
        man.check(f"bubble_slope_{lam / math.pi:g}pi", ok, slope=d["fit"].slope, predicted=pred)
        if lam < 8 * math.pi:
            man.check(f"bounded_below_{lam / math.pi:g}pi", min(d["J"]) > -1e3, floor=min(d["J"]))
        else:
            man.check(f"unbounded_below_{lam / math.pi:g}pi", d["J"][-1] < d["J"][0] and d["fit"].slope < 0, last=d["J"][-1])
    man.add(out, io.write_csv(out / "bubble_family.csv", ["lambda", "eps", "log_inv_eps2", "J"], rows))
    man.add(out, svg.line_plot(out / "bubble_family.svg", series, "log 1/eps^2", "J", "bubble family"))


def _cmd_testfn_sweep(cfg, out, man):
    from . import energy, io, svg

    dom, meas = cfg.domain.build(), cfg.measure.build()
    curve = cfg.domain.curve(dom)
    sw, an = cfg.sweep, cfg.analysis
    rep = energy.jlambda_asymptotics(
        curve, dom.area, cfg.lam, meas, sw.thetas, sw.weights, sw.alpha_tilde, sw.r_values, an.energy_tol, an.log_tol, an.j_tol
    )
    keys = ["r", "L", "energy", "log_integral", "upper_log_integral", "J"]
    man.add(out, io.write_csv(out / "sweep.csv", keys, [[row[k] for k in keys] for row in rep.rows]))
    man.add(out, io.write_json(rep.as_dict(), out / "fits.json"))
    L = [row["L"] for row in rep.rows]
    man.add(out, svg.line_plot(out / "sweep.svg", [("energy", L, [r["energy"] for r in rep.rows]), ("J", L, [r["J"] for r in rep.rows])], "log 1/(1-r)", "value", "test-function sweep"))
    for name, ok in rep.checks.items():
        man.check(name, ok)
    man.results["slopes"] = {"energy": rep.energy.slope, "log_integral": rep.log_integral.slope, "J": rep.j.slope}


def _load_branch(path: str):
    """Rebuild a branch from an earlier run directory with per-entry fields."""
    from . import io, solver
    from .config import RunConfig

    p = Path(path)
    d = p.parent if p.is_file() else p
    man = json.loads((d / "manifest.json").read_text())
    cfg = RunConfig.model_validate(man["config"])
    dom, meas = cfg.domain.build(), cfg.measure.build()
    lams = [float(r["lambda"]) for r in io.read_csv(d / "branch.csv")]
    br = solver.ContinuationBranch(measure=meas, flag=man["results"].get("branch", {}).get("flag"))
    for i, lam in enumerate(lams):
        u = io.read_field_csv(dom, d / "fields" / f"entry_{i:03d}.csv")
        br.entries.append(solver.result_from_field(u, lam, meas))
    br.last_good_lambda = lams[-1] if lams else None
    return cfg, dom, meas, br


def _cmd_blowup(cfg, out, man):
    from . import blowup, io

    an = cfg.analysis
    if an.branch:
        _, dom, meas, br = _load_branch(an.branch)
    else:
        dom, meas = cfg.domain.build(), cfg.measure.build()
        br = _branch(cfg, dom, meas, amplitude=True)
        _write_branch(br, out, man, fields=False)
    last = br.entries[-1]
    rep = blowup.analyze_entry(last, meas, an.rho, an.threshold, an.regime)
    man.add(out, io.write_json(rep.as_dict(), out / "blowup.json"), io.write_field_csv(last.u, out / "u_end.csv"))
    if rep.profiles:
        for i, prof in enumerate(rep.profiles):
            pts = prof.points()
            man.add(out, io.write_csv(out / f"rescaled_peak{i}.csv", ["y1", "y2", "w"], zip(pts[:, 0], pts[:, 1], prof.values.ravel())))
    fit = rep.fits[0] if rep.fits else None
    man.results["blowup"] = {"peaks": len(rep.peaks), "masses": [p.mass for p in rep.peaks], "regime": rep.regime}
    man.check("peaks_found", len(rep.peaks) >= 1, peaks=len(rep.peaks))
    man.check("bubble_fit", fit is not None and fit.rms <= 0.05, rms=None if fit is None else fit.rms)


def _cmd_quantize(cfg, out, man):
    from . import blowup, io, svg

    dom, meas = cfg.domain.build(), cfg.measure.build()
    br = _branch(cfg, dom, meas, amplitude=True)
    _write_branch(br, out, man, fields=False)
    an = cfg.analysis
    q = blowup.quantization_check(br, meas, an.rho, an.threshold, an.n_tail, variable=an.variable, tolerance=an.tolerance)
    rows = [(r["lambda"], r["u_max"], r["scale2"], r["masses"][0] if r["masses"] else math.nan, r["residual_mass"]) for r in q.entries]
    man.add(out, io.write_csv(out / "masses.csv", ["lambda", "u_max", "scale2", "peak_mass", "residual_mass"], rows))
    man.add(out, io.write_json(q.as_dict(), out / "quantization.json"))
    man.add(out, svg.line_plot(out / "masses.svg", [("peak mass / 8 pi", [r[2] for r in rows], [r[3] / (8 * math.pi) for r in rows])], "bubble scale^2", "mass / 8 pi", "local mass"))
    man.results["quantization"] = {"verdict": q.verdict, "extrapolated_masses": q.extrapolated_masses, "alpha_share_end": q.alpha_share_end}
    man.check("quantized", q.passed, masses=q.extrapolated_masses, target=8 * math.pi)


def _cmd_degree(cfg, out, man):
    import numpy as np

    from . import io, topology

    k = cfg.sweep.k
    rng = np.random.default_rng(cfg.seed)
    res = topology.brouwer_degree(k, cfg.analysis.n_values, rng=rng)
    man.add(out, io.write_json(res.as_dict(), out / "degree.json"))
    man.add(out, io.write_csv(out / "census.csv", ["value_index", "degree", "roots"], [(i, d, len(r)) for i, (d, r) in enumerate(zip(res.degrees, res.roots))]))
    man.results["degree"] = res.degree
    man.check("stable", res.stable, degrees=res.degrees)
    man.check("nonzero", res.degree not in (None, 0), degree=res.degree)


def _cmd_minmax(cfg, out, man):
    from . import io, svg, topology

    dom, meas = cfg.domain.build(), cfg.measure.build()
    curve = cfg.domain.curve(dom)
    sw, an = cfg.sweep, cfg.analysis
    pts = topology.sample_ball(sw.k, sw.n_radial, sw.n_angular, sw.boundary)
    rep = topology.minmax_upper_bound(sw.k, cfg.lam, curve, dom, meas, sw.alpha_tilde, pts, sw.boundary)
    header = [f"z{i}_{p}" for i in range(1, sw.k + 1) for p in ("re", "im")] + ["norm", "J"]
    rows = [[c for zz in r["z"] for c in zz] + [r["norm"], r["J"]] for r in rep.samples]
    man.add(out, io.write_csv(out / "samples.csv", header, rows))
    summary = {k: v for k, v in rep.as_dict().items() if k != "samples"}
    man.add(out, io.write_json(summary, out / "minmax.json"))
    man.add(out, svg.line_plot(out / "minmax.svg", [("J", [r["norm"] for r in rep.samples], [r["J"] for r in rep.samples])], "|z|", "J", "min-max family"))
    man.results["minmax"] = summary
    man.check("boundary_margin", rep.margin >= an.min_margin, margin=rep.margin, required=an.min_margin)
    man.check("moment_map", rep.moment_error <= an.max_moment_error, error=rep.moment_error)


def _cmd_green_check(cfg, out, man):
    import numpy as np

    from . import domain as D
    from . import io

    dom = cfg.domain.build()
    rows = []
    for y in cfg.sweep.green_points:
        G = D.green_function(dom, y)
        i, j = dom.nearest_node(y)
        ys = (float(dom.xs[j]), float(dom.ys[i]))
        H = D.regular_part(dom, ys, ys, G)
        exact = math.nan
        if dom.kind == "disk":
            c = dom.params.get("center", (0.0, 0.0))
            R = dom.params.get("radius", 1.0)
            r2 = ((ys[0] - c[0]) ** 2 + (ys[1] - c[1]) ** 2) / R**2
            exact = math.log(R * (1 - r2)) / (2 * math.pi)
        rows.append((ys[0], ys[1], H, exact, abs(H - exact) if math.isfinite(exact) else math.nan, float(G.values.min())))
    man.add(out, io.write_csv(out / "green.csv", ["x", "y", "H_diag", "H_exact", "error", "G_min"], rows))
    man.check("green_positive", all(r[5] >= -1e-12 for r in rows))
    errs = [r[4] for r in rows if math.isfinite(r[4])]
    if errs:
        man.check("robin_function", max(errs) <= 50 * dom.h**2, max_error=max(errs))
    ys = np.array(cfg.sweep.green_points[:2])
    if len(ys) == 2:
        a, b = ys
        Ga, Gb = D.green_function(dom, a), D.green_function(dom, b)
        ia, ib = dom.index[dom.nearest_node(b)], dom.index[dom.nearest_node(a)]
        man.check("symmetry", abs(Ga.values[ia] - Gb.values[ib]) <= 1e-8 * max(1.0, abs(Ga.values[ia])), difference=abs(Ga.values[ia] - Gb.values[ib]))


HANDLERS: dict[str, Callable] = {
    "solve": _cmd_solve,
    "continue": _cmd_continue,
    "energy": _cmd_energy,
    "mt-check": _cmd_mt_check,
    "testfn-sweep": _cmd_testfn_sweep,
    "blowup": _cmd_blowup,
    "quantize": _cmd_quantize,
    "degree": _cmd_degree,
    "minmax": _cmd_minmax,
    "green-check": _cmd_green_check,
}


def run(command: str, cfg, out: Path):
    """Execute ``command`` and write its manifest; returns the manifest."""
    from . import io, kernels

    out.mkdir(parents=True, exist_ok=True)
    man = io.RunManifest(command=command, config=cfg.model_dump(mode="json"), seed=cfg.seed, backend=kernels.BACKEND, started=io.now())
    try:
        HANDLERS[command](cfg, out, man)
    except Exception as exc:  # numerical failures are recorded, not raised
        man.error = f"{type(exc).__name__}: {exc}"
        man.results["traceback"] = traceback.format_exc().splitlines()[-5:]
    man.finished = io.now()
    man.write(out)
    return man


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.threads:
        for var in THREAD_VARS:
            os.environ[var] = str(args.threads)
    from pydantic import ValidationError

    from .config import format_errors, load_config

    try:
        cfg = load_config(args.config, _overrides(args))
    except ValidationError as exc:
        for line in format_errors(exc):
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        out = Path(args.out)
    else:
        digest = hashlib.sha256(json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()).hexdigest()[:12]
        out = Path(os.environ.get(OUT_ENV, "runs")) / f"{args.command}-{digest}"
    man = run(args.command, cfg, out)
    status = "passed" if man.passed else "failed"
    print(f"{args.command}: {status} ({out / 'manifest.json'})")
    for name, c in man.checks.items():
        print(f"  {'ok  ' if c['passed'] else 'FAIL'} {name}")
    if man.error:
        print(f"  error: {man.error}", file=sys.stderr)
    return 0 if man.passed else 1


if __name__ == "__main__":
    sys.exit(main())
