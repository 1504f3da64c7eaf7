"""Sufficient clusters and excess-loss bounds on a concrete population.

Shows how the sufficient cluster shrinks as the target precision tightens,
and evaluates the three step-size-regime bounds at a few horizons.
Run with: python demos/03_theory_objects.py
"""

import numpy as np

from collabsgd import Criterion, sample_complexity, sufficient_cluster, table1_bound
from collabsgd.objectives import heterogeneity_bounds, shifted_optima_quadratics
from collabsgd.streams import RngStream


def main():
    objs = shifted_optima_quadratics(10, 2, v=0.3,
                                     stream=RngStream(1, purpose="demo"))
    hm = heterogeneity_bounds(objs)
    crit = Criterion("binary", lam=0.5)
    sigmas = np.ones(10)

    print("sufficient cluster of client 0 (10 clients, optima spread v=0.3):")
    for eps in (10.0, 1.0, 0.3, 0.1, 0.01):
        rep = sufficient_cluster(0, eps, hm, mu=2.0, sigmas=sigmas, crit=crit)
        suf = ("inf" if np.isinf(rep.sigma_suf_sq)
               else f"{rep.sigma_suf_sq:.3f}")
        print(f"  eps = {eps:6g}: size = {rep.size:2d}, sigma_suf^2 = {suf}")

    print("\nexcess-loss bounds (beta=2, mu=2, eps0=5, sigma_suf^2=0.2):")
    for T in (10, 100, 1000):
        const = table1_bound("constant", 2.0, 2.0, 5.0, 0.2, T, 0.25)
        decr = table1_bound("decreasing", 2.0, 2.0, 5.0, 0.2, T, 2.0)
        print(f"  T = {T:5d}: constant {const.bound_at_T:9.3e}, "
              f"decreasing {decr.bound_at_T:9.3e}")

    n = sample_complexity(1e-3, beta=2.0, mu=2.0, sigma_suf_sq=0.2, C=2.0)
    print(f"\niterations to reach 1e-3 with the decreasing schedule: {n}")


if __name__ == "__main__":
    main()
