"""
Acceptance evaluation:
  load cases  ->  run each check  ->  compare against expected  ->  summary

Each case in eval/acceptance.json is {name, check, params, expected, tol}; a check
returns the measured quantity and the case passes when |measured - expected| <= tol.
"""
import json
import math
import os
import time

import numpy as np

from src.anisotropic import AnisoPoint, AnisoSpec, aniso_kernel, aniso_y, contour_shift_check
from src.certificates import be_lower_bound, gaussian_like_constants
from src.config import EVAL_DIR
from src.geometry import Point, RadialProfile, distance, heisenberg, horizontal_grad_sq, spec_for
from src.heatkernel import kernel, ratio
from src.potential import PotentialParams, w_potential
from src.specialfn import bessel_combination, bessel_i

CASES_PATH = os.path.join(EVAL_DIR, "acceptance.json")


def check_kernel_origin(n=1, m=1):
    return kernel(RadialProfile(0.0, 0.0), 1.0, spec_for(n, m)).value


def check_kernel_scaling(n, m, R, zeta, t):
    """Relative gap between p_t and t^{-(n+m)} p_1(R/t, zeta/t) taken through different routes."""
    spec = spec_for(n, m)
    direct = kernel(RadialProfile(R, zeta), t, spec, method="reduced-1d")
    other = "shifted-1d" if m % 2 else "reduced-1d"
    scaled = kernel(RadialProfile(R / t, zeta / t), 1.0, spec, method=other)
    return abs(ratio(direct, scaled) * t ** (n + m) - 1.0)


def check_bessel_combination(n, kappa):
    exact = bessel_i(n - 1, kappa) ** 2 - bessel_i(n, kappa) ** 2
    return abs(bessel_combination(n, kappa) - exact) / abs(exact)


def check_constants_k11():
    K, _, _ = gaussian_like_constants(heisenberg(1))
    return K


def check_be_lower_bound(n):
    return be_lower_bound(n)


def check_eikonal(x, z):
    """max over the points of | |grad(-d^2/2)|^2 - d^2 |."""
    spec = heisenberg(len(x[0]) // 2)
    g = Point(np.asarray(x, dtype=float), np.asarray(z, dtype=float))

    def f(h):
        return -0.5 * distance(spec, h) ** 2

    lhs = horizontal_grad_sq(spec, f, g, step=1e-3, richardson=True)
    return float(np.max(np.abs(lhs - distance(spec, g) ** 2)))


def check_aniso_isotropic(n, norm, z):
    """Relative gap between the block kernel with one unit weight and the H^n kernel."""
    iso = kernel(RadialProfile(0.25 * norm * norm, abs(z)), 1.0, heisenberg(n))
    an = aniso_kernel(AnisoPoint((norm,), z), AnisoSpec((1.0,), (n,)))
    return abs(math.exp(an.log_abs - iso.log_abs) - 1.0)


def check_contour_shift(pairs, norms, z, fraction):
    spec = AnisoSpec.from_pairs(pairs)
    pt = AnisoPoint(tuple(norms), z)
    return contour_shift_check(pt, spec, fraction * aniso_y(pt, spec))


def check_potential_affinity(n, m, R, zeta, C1, C2):
    """|W(mid C) - (W(C1) + W(C2)) / 2|, zero for a potential affine in C."""
    spec = spec_for(n, m)
    prof = RadialProfile(R, zeta)
    w1 = w_potential(prof, PotentialParams(C1), spec)
    w2 = w_potential(prof, PotentialParams(C2), spec)
    wm = w_potential(prof, PotentialParams(0.5 * (C1 + C2)), spec)
    return abs(wm - 0.5 * (w1 + w2))


CHECKS = {
    "kernel_origin": check_kernel_origin,
    "kernel_scaling": check_kernel_scaling,
    "bessel_combination": check_bessel_combination,
    "constants_k11": check_constants_k11,
    "be_lower_bound": check_be_lower_bound,
    "eikonal": check_eikonal,
    "aniso_isotropic": check_aniso_isotropic,
    "contour_shift": check_contour_shift,
    "potential_affinity": check_potential_affinity,
}


def run_case(case):
    if case["check"] not in CHECKS:
        raise KeyError(f"unknown check: {case['check']}")
    measured = CHECKS[case["check"]](**case.get("params", {}))
    return float(measured)


def run_evaluation(cases_path=None):
    cases_path = cases_path or CASES_PATH
    with open(cases_path, "r", encoding="utf-8") as f:
        cases = json.load(f)

    results = []
    latencies = []

    for i, case in enumerate(cases):
        print(f"  C{i+1}/{len(cases)}: {case['name']}")

        t0 = time.time()
        try:
            measured = run_case(case)
            error = None
        except Exception as exc:
            measured, error = math.nan, f"{type(exc).__name__}: {exc}"
        elapsed = time.time() - t0
        latencies.append(elapsed)

        gap = abs(measured - case["expected"])
        passed = error is None and gap <= case["tol"]
        results.append({
            "name": case["name"],
            "check": case["check"],
            "measured": measured,
            "expected": case["expected"],
            "gap": gap,
            "passed": passed,
            "error": error,
            "latency": elapsed,
        })
        status = "ok" if passed else ("ERROR " + error if error else "FAIL")
        print(f"    measured={measured:.12g}  gap={gap:.2e}  {status}  time={elapsed:.2f}s")

    summary = {
        "n": len(results),
        "passed": sum(r["passed"] for r in results),
        "failed": sum(not r["passed"] for r in results),
        "p95_latency": float(np.percentile(latencies, 95)) if latencies else 0.0,
    }

    print("\n  --- acceptance ---")
    print(f"  passed:    {summary['passed']}/{summary['n']}")
    print(f"  p95 lat:   {summary['p95_latency']:.2f}s")

    return summary, results


if __name__ == "__main__":
    summary, _ = run_evaluation()
    raise SystemExit(0 if summary["failed"] == 0 else 4)
