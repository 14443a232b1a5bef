#!/usr/bin/env python3
"""Smoke test for the bigjump_py extension module.

Build and stage the module first (or use run_smoke.sh):

    cargo build -p bigjump-py --release
    cp target/release/libbigjump_py.so python/bigjump_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import bigjump_py as bj  # noqa: E402


def check(name, ok, detail=""):
    status = "ok" if ok else "FAIL"
    print(f"  {name:<42} {status} {detail}")
    if not ok:
        raise SystemExit(f"smoke test failed at: {name}")


def main():
    print("bigjump_py smoke test")

    d = bj.StepDistribution("pareto", {"alpha": 2.5, "x_min": 1.0})
    check("pareto tail closed form", abs(d.tail(2.0) - 2.0 ** -2.5) < 1e-12)
    check("window mass", abs(d.window_mass(2.0, 1.0) - (2.0 ** -2.5 - 3.0 ** -2.5)) < 1e-12)
    mu1, mu2 = d.truncated_moments(4.0)
    check("truncated moments", abs(mu1 - (5 / 3) * (1 - 4.0 ** -1.5)) < 1e-12 and abs(mu2 - 2.5) < 1e-12)

    s = d.standardize("full")
    check("standardized moments", abs(s.mean()) < 1e-9 and abs(s.variance() - 1) < 1e-9)

    xs = s.sample(42, 1000)
    ys = s.sample(42, 1000)
    check("sampling deterministic", xs == ys)

    rad = bj.StepDistribution.lattice([(-1.0, 0.5), (1.0, 0.5)])
    check("a_n Rademacher exact", bj.a_n(rad, 400) == 20.0)

    tilt = rad.tilt_truncate(2.0)
    check("tilt normalizer", abs(tilt.phi() - math.cosh(0.5)) < 1e-12)

    b = json.loads(bj.boundary(s, 100, "prop_8_1", {"t": 1.0, "tol_i": 0.05}))
    check("boundary golden J_100", abs(b["j_n"] - 21.460) / 21.460 < 1e-3, f"J_100 = {b['j_n']:.4f}")
    check("boundary additive", abs(b["x_n"] - b["i_n"] - b["j_n"]) < 1e-9)

    coin = bj.StepDistribution.lattice([(0.0, 0.5), (1.0, 0.5)])
    pmf = bj.discretize(coin, 1.0, 0.0, 1.0)
    ten = bj.nfold(pmf, 10)
    check("binomial mass", abs(ten.masses()[5] - 252 / 1024) < 1e-13)

    # exact oracle against the Monte Carlo estimators
    grid = bj.discretize(d, 0.01, 1.0, 4000.0)
    law = bj.nfold_split(grid, 20, 1.0, 4000.0)
    lo, hi, point = law.tail_prob(60.0)
    est, se = bj.big_jump_cmc(d, 20, 60.0, 200000, 7)
    check(
        "oracle vs conditional estimator",
        abs(est - point) < 3.29 * se,
        f"oracle {point:.5e}, mc {est:.5e} +- {se:.1e}",
    )

    # deep restricted tail far below FFT noise
    r = grid.restrict(10.0)
    lp = bj.log_tail_saddlepoint(r, 20, 150.0)
    check("saddlepoint deep tail", math.isfinite(lp) and -95 < lp < -70, f"log P = {lp:.2f}")

    csv, report = bj.run_experiment(
        """
        family.name = pareto
        family.alpha = 2.5
        family.x_min = 1
        family.standardize = full
        boundary.provenance = prop_8_1
        options.t = 1
        grid.n_values = 5,10
        grid.x_multiples = 1,2,5
        lattice.delta = 0.1
        lattice.lo = -10
        lattice.hi = 2000
        method = oracle
        """
    )
    rows = csv.strip().splitlines()
    check("experiment rows", len(rows) == 7, f"{len(rows) - 1} rows")
    parsed = json.loads(report)
    check("ratios near one", all(abs(r["ratio"] - 1) < 0.05 for r in parsed["rows"]))

    verdicts = bj.diagnose(d)
    check("diagnose verdicts", any("long-tailed" in v for v in verdicts))

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
