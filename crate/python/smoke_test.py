#!/usr/bin/env python3
"""Smoke test for the herdsim_py extension module.

Build the module first (see README), e.g.:

    cargo build --release -p herdsim-py
    cp target/release/libherdsim_py.so python/herdsim_py.so

then run:  python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import herdsim_py as hp


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    # ball sizes: closed form and explicit construction agree
    assert hp.ball_vertex_count(3, 2) == 10
    assert hp.ball_size_formula(3, 2) == 10
    assert hp.ball_vertex_count(3, 0) == 1

    # the (d=3, h=1) type space: two shapes, nine occupied classes, and the
    # transition graph is reducible (the path classes cannot regrow)
    shapes, classes, strongly_connected = hp.type_space(3, 1)
    assert (shapes, classes, strongly_connected) == (2, 9, False)
    shapes2, _, sc2 = hp.type_space(3, 2)
    assert shapes2 == 4 and sc2

    # zero birth rate: the growth exponent is exactly -1
    res = hp.pf(3, 1, 0.0, 1.0)
    approx(res["mu"], -1.0, 1e-8)
    assert res["dim"] == 9
    assert res["residual"] <= 1e-8

    # the truncated critical value sits above the branching bound 1/d
    lam_hat = hp.lambda_bar(3, 2, 1.0, 1e-3)
    assert lam_hat >= 1.0 / 3.0, lam_hat

    # subcritical herds die; deep supercritical herds survive often
    p_sub, _ = hp.herds_survival(3, 0.2, 1.0, 60.0, 400, seed=7)
    assert p_sub == 0.0, p_sub
    p_super, se = hp.herds_survival(3, 2.0, 1.0, 30.0, 400, seed=7, event_cap=3000)
    assert p_super - 3 * se > 0.5, (p_super, se)

    # marked-marginal extinction agrees with the direct tree contact process
    p_cp, se_cp = hp.tree_cp_extinction(3, 0.3, 5.0, 2000, seed=11)
    assert 0.8 < p_cp < 1.0

    # freezing statistics from one marked particle
    fs = hp.frozen_stats(3, 0.5, 1.0, 120.0, 400, seed=13)
    assert fs["k_lower_mean"] > 1.0, fs

    # leaf-touch probability vanishes without births
    p_leaf, _ = hp.leaf_touch_probability(3, 2, 0.0, 1.0, 4.0, 300)
    assert p_leaf == 0.0

    # joint-chain extinction at lambda = 0 is bounded by max of exponentials
    rec = hp.cp_extinction_run(50, 3, 0.0, 1.0, 1e9, seed=3)
    assert rec["outcome"] == "died" and rec["tau"] < 30.0

    # configuration-model self-loop mean is (d-1)/2 -> 1 for d = 3
    m1 = hp.mean_loop_count(500, 3, 1, 200, seed=5)
    assert abs(m1 - 1.0) < 0.35, m1

    print("herdsim_py smoke test: all checks passed")


if __name__ == "__main__":
    main()
