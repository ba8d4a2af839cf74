"""Python smoke test for the _mtebounds extension module."""

import math
import sys

import _mtebounds as mb


def approx(a, b, tol):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    approx(mb.std_normal_cdf(0.0), 0.5, 0.0)
    approx(mb.std_normal_quantile(0.975), 1.959964, 1e-5)
    approx(mb.gaussian_copula(0.5, 0.3, 0.0), 0.15, 1e-12)
    approx(mb.gaussian_copula(0.5, 0.5, 0.5), 1.0 / 3.0, 1e-7)

    approx(mb.true_mte(0.5), 2.0, 0.0)
    approx(mb.true_liv_rho0(0.5, 0.3), 5.0, 1e-9)
    approx(mb.observed_pscore(0.5, alpha=0.1, rho=0.0), 0.5, 1e-12)
    approx(mb.observed_pscore(0.05, alpha=0.2, mechanism="threshold-low"), 0.15, 1e-12)
    approx(mb.mte_upper_limit_oracle(0.5, 0.1, 0.0), 2.5, 1e-9)

    iv = mb.pointwise_pscore_bounds(0.6, 0.2)
    approx(iv.lo, 0.4, 1e-12)
    approx(iv.hi, 0.8, 1e-12)
    assert iv.contains(0.55)

    cf = mb.closed_form_mte_bounds(0.5, 0.1, 0.0, 1e-5)
    assert cf.lo == 0.0
    approx(cf.hi, 2.5, 1e-3)

    draw = mb.sample_dgp(n=20000, seed=42, alpha=0.3, rho=0.0)
    eps_rate = sum(draw["eps"]) / len(draw["eps"])
    approx(eps_rate, 0.3, 0.02)
    for d, dstar, eps in zip(draw["d"][:100], draw["dstar"][:100], draw["eps"][:100]):
        assert d == dstar * (1 - eps) + (1 - dstar) * eps

    table = mb.cell_stats(draw["y"], draw["d"], draw["z"], z_cells=20, y_bins=25)
    assert len(table) == 20
    bounds = mb.mte_bounds_at(0.5, table, alpha_bar=0.4, fd_step=0.25)
    assert bounds.lo == 0.0 and bounds.hi > 0.0

    feasible = mb.alpha_identified_set([0.31, 0.5, 0.69], alpha_bar=0.139, grid_size=15)
    assert len(feasible) == 15
    approx(mb.true_pscore_from_alpha(0.38, 0.3), 0.2, 1e-12)

    liv = lambda q: mb.true_liv_rho0(q, 0.3) if 0.3 < q < 0.7 else math.nan
    approx(mb.mte_symmetric(0.5, 0.3, liv), 2.0, 1e-9)

    xs = [i / 499 for i in range(500)]
    ys = [3.0 * x + 1.0 for x in xs]
    deriv = mb.local_poly_deriv(xs, ys, [0.25, 0.5, 0.75], degree=2, h=0.2)
    for v in deriv:
        approx(v, 3.0, 1e-8)

    coef = mb.fit_logit([[1.0] for _ in range(1000)], [1] * 300 + [0] * 700)
    approx(coef[0], math.log(0.3 / 0.7), 1e-8)

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
