"""
Command line:  htype-dls <command> [options]

Every command prints one JSON document on stdout

    {"schema_version", "command", "inputs", "outputs", "manifest"}

with numeric outputs as {"value": x, "error": e}. Logs go to stderr.
"""
import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time

import numpy as np

from src import config, db
from src.anisotropic import (
    AnisoPoint, AnisoSpec, aniso_distance, aniso_kernel, aniso_phase_derivative, aniso_psi,
    aniso_y, contour_shift_check, expansion_check, ray_points,
)
from src.certificates import (
    MEASURES, be_lower_bound, log_form_constant, dls_verify, eta_certificate, gaussian_like_constants,
    herbst_chain, sobolev_const, sobolev_exponent, standard_family, translated_family,
)
from src.errors import HTypeError
from src.geometry import RadialProfile, sr_distance, spec_for
from src.heatkernel import METHODS, DerivOrder, kernel_deriv
from src.potential import boundedness_probe, min_w, w_components
from src.sampler import PathConfig, empirical_fernique, estimate_k1, simulate

log = logging.getLogger(__name__)

EXIT_OK, EXIT_DOMAIN, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


def num(value, error=0.0):
    return {"value": _clean(value), "error": _clean(error)}


def _clean(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _pairs(text):
    """'1:2,2:1' -> ((1.0, 2), (2.0, 1))"""
    out = []
    for item in text.split(","):
        alpha, mult = item.split(":")
        out.append((float(alpha), int(mult)))
    return tuple(out)


def _spec(args):
    return spec_for(args.n, args.m)


def canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    log.info("wrote %d rows to %s", len(rows), path)


#  COMMANDS
#  each returns (outputs, table, exit_code); table is (header, rows) or None

def cmd_kernel(args):
    spec = _spec(args)
    ev = kernel_deriv(RadialProfile(args.R, args.z), DerivOrder(args.k1, args.k2), spec,
                      t=args.t, method=args.method, tol=args.tol_quad)
    out = {
        "p": num(ev.value, ev.abs_error),
        "log_abs": num(ev.log_abs, ev.rel_error),
        "sign": ev.sign,
        "method": ev.method,
    }
    return out, None, EXIT_OK


def cmd_distance(args):
    d = sr_distance(RadialProfile(args.R, args.z))
    return {"distance": num(d, args.tol_root * max(1.0, d))}, None, EXIT_OK


def cmd_potential(args):
    spec = _spec(args)
    if args.probe:
        rep = boundedness_probe(args.C, spec, omega=args.omega, R_range=(args.R_min, args.R_max),
                                points=args.points, tol=args.tol_quad, workers=args.workers)
        out = {
            "coefficient": num(rep.coefficient, rep.stderr),
            "intercept": num(rep.intercept),
            "monotone_decreasing": bool(rep.monotone_decreasing),
            "verdict": rep.verdict,
        }
        rows = list(zip(rep.R.tolist(), rep.distance.tolist(), rep.W.tolist()))
        return out, (["R", "distance", "W"], rows), EXIT_OK

    t = args.t
    comp = w_components(RadialProfile(args.R, args.z).scaled(t), spec, tol=args.tol_quad)
    C_t = args.C / t
    W = comp.w(C_t) - (spec.n + spec.m) * math.log(t)
    err = comp.rel_error * (abs(C_t * comp.A) + abs(comp.xi))
    out = {"W": num(W, err), "A": num(comp.A), "xi": num(comp.xi), "method": comp.method}
    return out, None, EXIT_OK


def _min_w_outputs(res):
    return {
        "min_w": num(res.min_value, abs(res.grid_min - res.min_value)),
        "argmin_R": num(res.argmin.R),
        "argmin_zeta": num(res.argmin.zeta),
        "tail_margin": num(res.tail_margin),
        "refine_failures": res.refine_failures,
        "box": [_clean(b) for b in res.box],
        "certified": bool(res.certified),
    }


def cmd_min_w(args):
    spec = _spec(args)
    res = min_w(args.theta, spec, nodes=(args.grid, args.grid), workers=args.workers, tol=args.tol_quad)
    table = None
    if res.grid is not None:
        W = res.grid.w(args.theta)
        rows = [(float(r), float(s), float(W[i, j]))
                for i, r in enumerate(res.grid.R_grid) for j, s in enumerate(res.grid.zeta_grid)]
        table = (["R", "zeta", "W"], rows)
    return _min_w_outputs(res), table, EXIT_OK if res.certified else EXIT_NUMERIC


def cmd_eta(args):
    spec = _spec(args)
    cert = eta_certificate(args.theta, spec, nodes=(args.grid, args.grid), workers=args.workers,
                           tol=args.tol_quad)
    mres = cert.min_w
    err = abs(mres.grid_min - mres.min_value)
    out = {
        "theta": num(args.theta),
        "n": cert.n,
        "m": cert.m,
        "c_nm": num(cert.c_nm),
        "min_w": num(mres.min_value, err),
        "eta": num(cert.eta, err),
        "certified": bool(cert.certified),
    }
    if args.store:
        conn = db.init_db(args.store)
        db.insert_certificate(conn, cert)
        conn.close()
    return out, None, EXIT_OK if cert.certified else EXIT_NUMERIC


def cmd_constants(args):
    spec = _spec(args)
    K, c, c_err = gaussian_like_constants(spec)
    out = {
        "c_nm": num(sobolev_const(spec.n, spec.m)),
        "sobolev_exponent": num(sobolev_exponent(spec.n, spec.m)),
        "k_nm": num(K),
        "gaussian_mass": num(c, c_err),
        "be_lower_bound": num(be_lower_bound(spec.n)),
        "log_form_constant": num(log_form_constant(args.tau, spec.n, spec.m)),
        "tau": num(args.tau),
    }
    return out, None, EXIT_OK


def cmd_herbst(args):
    K1, K1_err = args.k1, 0.0
    if args.k1_mc:
        spec = _spec(args)
        batch = simulate(spec, PathConfig(t=args.t, steps=args.steps, paths=args.paths, seed=args.seed),
                         workers=args.workers)
        K1, K1_err = estimate_k1(batch, spec)
    rows, tails = [], []
    bound = None
    for r in args.radii:
        ev = herbst_chain(args.eta, args.theta, args.t, K1, r)
        bound = ev.bound
        rows.append((r, ev.value, ev.form, ev.lam_star))
        tails.append({"r": num(r), "bound": num(ev.value), "form": ev.form, "lambda": num(ev.lam_star),
                      "flagged": bool(ev.flagged)})
    out = {
        "K1": num(K1, K1_err),
        "B": num(bound.B, K1_err),
        "tail_threshold": num(bound.tail_threshold, K1_err),
        "fernique_alpha_max": num(bound.fernique_alpha_max),
        "tails": tails,
    }
    return out, (["r", "bound", "form", "lambda"], rows), EXIT_OK


def cmd_verify(args):
    spec = _spec(args)
    if args.family == "standard":
        family = standard_family(spec)
    else:
        family = translated_family(spec, args.distances, kind=args.family)
    rows = dls_verify(args.theta, args.eta, args.t, family, spec, measure=args.measure, tol=args.tol_margin,
                      use_db=True)
    margins = [{"label": r.label, "margin": num(r.margin, args.tol_margin), "entropy": num(r.entropy),
                "dirichlet": num(r.dirichlet)} for r in rows]
    worst = min(r.margin for r in rows)
    out = {"margins": margins, "min_margin": num(worst, args.tol_margin), "passed": bool(worst >= -args.tol_margin)}
    table = (["label", "entropy", "dirichlet", "mass", "margin"],
             [(r.label, r.entropy, r.dirichlet, r.mass, r.margin) for r in rows])
    return out, table, EXIT_OK if out["passed"] else EXIT_VERIFY


def cmd_sample(args):
    spec = _spec(args)
    cfg = PathConfig(t=args.t, steps=args.steps, paths=args.paths, seed=args.seed)
    batch = simulate(spec, cfg, workers=args.workers)
    fern = empirical_fernique(batch, spec, alpha=args.alpha, radii=args.radii)
    K1, K1_err = estimate_k1(batch, spec)
    x2 = np.sum(batch.points.x ** 2, axis=-1)
    out = {
        "fernique": num(fern.estimate, fern.std_error),
        "heavy_tail": fern.heavy_tail,
        "K1": num(K1, K1_err),
        "mean_abs_x_sq": num(float(np.mean(x2)), float(np.std(x2, ddof=1) / math.sqrt(x2.size))),
        "tails": [{"r": num(r), "frequency": num(f, se)} for r, f, se in fern.tails],
    }
    return out, (["r", "frequency", "std_error"], fern.tails), EXIT_OK


def cmd_aniso(args):
    spec = AnisoSpec.from_pairs(args.pairs)
    if args.expansion:
        rep = expansion_check(ray_points(spec, args.R_values, args.omega), spec, tol=args.tol_quad)
        out = {
            "bound": num(rep.bound),
            "ratios": [num(r) for r in rep.ratio.tolist()],
            "positive": bool(np.all(rep.ratio > 0)),
        }
        rows = list(zip(rep.R.tolist(), rep.ratio.tolist(), rep.scaled_error.tolist()))
        return out, (["R", "ratio", "scaled_error"], rows), EXIT_OK

    pt = AnisoPoint(args.norms, args.z)
    ev = aniso_kernel(pt, spec, t=args.t, tol=args.tol_quad)
    out = {"p": num(ev.value, ev.abs_error), "log_abs": num(ev.log_abs, ev.rel_error)}
    if pt.block_norms[-1] > 0.0:
        y = aniso_y(pt, spec, tol=args.tol_root)
        out.update({
            "y": num(y, args.tol_root),
            "distance": num(aniso_distance(pt, spec), args.tol_root),
            "psi": num(aniso_psi(pt, spec, y=y)),
            "psi_prime0": num(abs(aniso_phase_derivative(pt, spec, y=y))),
        })
        if args.shift is not None:
            out["contour_residual"] = num(contour_shift_check(pt, spec, args.shift * y, tol=args.tol_quad))
    return out, None, EXIT_OK


#  PARSER

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=config.WORKERS)
    common.add_argument("--tol-quad", type=float, default=config.TOL_QUAD)
    common.add_argument("--tol-root", type=float, default=config.TOL_ROOT)
    common.add_argument("--grid", type=int, default=config.GRID)
    common.add_argument("--csv", metavar="PATH")
    common.add_argument("--store", metavar="PATH", help="sqlite file recording the run")
    common.add_argument("--timing", action="store_true")
    common.add_argument("-v", "--verbose", action="count", default=0)

    group = argparse.ArgumentParser(add_help=False)
    group.add_argument("--n", type=int, default=1)
    group.add_argument("--m", type=int, default=1)

    parser = argparse.ArgumentParser(prog="htype-dls", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=config.VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, *parents):
        p = sub.add_parser(name, parents=[common, *parents])
        p.set_defaults(func=func)
        return p

    p = add("kernel", cmd_kernel, group)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--z", type=float, default=0.0, help="|z|")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--k1", type=int, default=0)
    p.add_argument("--k2", type=int, default=0)
    p.add_argument("--method", choices=METHODS, default="auto")

    p = add("distance", cmd_distance, group)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--z", type=float, default=0.0)

    p = add("potential", cmd_potential, group)
    p.add_argument("--C", type=float, required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--R", type=float, default=0.0)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--probe", action="store_true", help="fit W along the ray zeta = omega R")
    p.add_argument("--omega", type=float, default=0.0)
    p.add_argument("--R-min", type=float, default=25.0)
    p.add_argument("--R-max", type=float, default=400.0)
    p.add_argument("--points", type=int, default=12)

    p = add("min-w", cmd_min_w, group)
    p.add_argument("--theta", type=float, required=True)

    p = add("eta", cmd_eta, group)
    p.add_argument("--theta", type=float, required=True)

    p = add("constants", cmd_constants, group)
    p.add_argument("--tau", type=float, default=2.0)

    p = add("herbst", cmd_herbst, group)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--k1", type=float, default=0.0)
    p.add_argument("--k1-mc", action="store_true", help="estimate K(1) by Monte Carlo")
    p.add_argument("--radii", type=_floats, default=(4.0, 5.0, 6.0))
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--steps", type=int, default=config.STEPS)
    p.add_argument("--seed", type=int, default=config.SEED)

    p = add("verify", cmd_verify, group)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--measure", choices=MEASURES, default="heat")
    p.add_argument("--family", choices=("standard", "translated-bump", "ground-state"), default="standard")
    p.add_argument("--distances", type=_floats, default=(0.0, 2.0, 4.0, 6.0))
    p.add_argument("--tol-margin", type=float, default=1e-6)

    p = add("sample", cmd_sample, group)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--steps", type=int, default=config.STEPS)
    p.add_argument("--seed", type=int, default=config.SEED)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--radii", type=_floats, default=(4.0, 5.0, 6.0))

    p = add("aniso", cmd_aniso)
    p.add_argument("--pairs", type=_pairs, required=True, help="alpha:multiplicity,...")
    p.add_argument("--norms", type=_floats, default=None, help="|P_j x|,...")
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--shift", type=float, default=None, help="contour shift as a fraction of y")
    p.add_argument("--expansion", action="store_true")
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--R-values", type=_floats, default=(25.0, 50.0, 100.0, 200.0))
    return parser


def setup_logging(verbose):
    level = {0: config.LOG_LEVEL, 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def _parameters(args):
    skip = {"func", "verbose", "csv", "store", "timing"}
    return {k: _clean(list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items()) if k not in skip}


def document(args, outputs, elapsed=None):
    params = _parameters(args)
    manifest = {
        "command": args.command,
        "parameters": params,
        "version": config.VERSION,
        "seed": getattr(args, "seed", config.SEED),
        "tolerances": {"quad": args.tol_quad, "root": args.tol_root, "grid": args.grid},
        "result_digest": hashlib.sha256(canonical(outputs).encode("utf-8")).hexdigest(),
    }
    if elapsed is not None:
        manifest["wall_clock_s"] = elapsed
    return {
        "schema_version": config.SCHEMA_VERSION,
        "command": args.command,
        "inputs": params,
        "outputs": outputs,
        "manifest": manifest,
    }


def run(argv=None):
    """Parse, execute and print; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    if args.command == "aniso" and args.norms is None and not args.expansion:
        parser.error("aniso needs --norms or --expansion")

    start = time.time()
    try:
        outputs, table, code = args.func(args)
    except HTypeError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    elapsed = time.time() - start if args.timing else None

    doc = document(args, outputs, elapsed)
    print(json.dumps(doc, sort_keys=True, indent=2))
    if args.csv:
        if table is None:
            log.warning("%s has no table output; --csv ignored", args.command)
        else:
            write_csv(args.csv, *table)
    if args.store:
        conn = db.init_db(args.store)
        db.insert_run(conn, args.command, doc["manifest"], doc["manifest"]["result_digest"])
        conn.close()
    if code == EXIT_NUMERIC:
        log.warning("result is not certified")
    elif code == EXIT_VERIFY:
        log.warning("verification failed")
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
