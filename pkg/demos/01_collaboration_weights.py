"""How the collaboration weights react to gradient similarity and noise.

Builds a handful of ratio/noise configurations and prints the resulting
weights, the effective variance, and the realized step-size ratio for both
criteria.  Run with: python demos/01_collaboration_weights.py
"""

import numpy as np

from collabsgd import Criterion, compute_weights

SCENARIOS = [
    ("twin clients, equal noise", np.array([1.0, 1.0]), np.array([1.0, 1.0])),
    ("one mediocre peer", np.array([1.0, 0.5]), np.array([1.0, 1.0])),
    ("good peer, noisy focal", np.array([1.0, 0.9]), np.array([3.0, 1.0])),
    ("crowd of so-so peers", np.r_[1.0, np.full(9, 0.4)], np.ones(10)),
]


def describe(name, ratios, sigmas, crit):
    st = compute_weights(ratios, sigmas, crit)
    label = crit.kind if crit.kind == "continuous" else f"binary(lam={crit.lam})"
    print(f"  {label:18s} alpha = {np.round(st.alpha, 3)}")
    print(f"  {'':18s} sigma_eff^2 = {st.sigma_eff_sq:.4f}, "
          f"step ratio = {st.step_ratio:.3f}, active = {st.active_set.size}")


def main():
    for name, ratios, sigmas in SCENARIOS:
        print(f"\n{name}: r = {np.round(ratios, 2)}, sigma = {sigmas}")
        describe(name, ratios, sigmas, Criterion("continuous"))
        describe(name, ratios, sigmas, Criterion("binary", lam=0.5))
    print("\nNotes: weights scale with phi(r)/sigma^2; a noisier focal client "
          "leans harder on clean peers; the binary rule drops peers below "
          "lambda entirely.")


if __name__ == "__main__":
    main()
