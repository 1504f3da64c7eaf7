"""Computable theory objects: sufficient clusters and variances, excess-loss
bound evaluators for the three step-size regimes, sample complexity, the
non-convex rate bound, descent-bound evaluation, and nesting checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collaboration import Criterion
from .objectives import HeterogeneityMatrix

__all__ = [
    "SufficientClusterReport",
    "BoundEvaluation",
    "sufficient_cluster",
    "table1_bound",
    "sample_complexity",
    "descent_bound_rhs",
    "nesting_check",
    "runtime_inclusion_check",
    "nonconvex_rate_bound",
]


@dataclass(frozen=True)
class SufficientClusterReport:
    """The fixed set of clients whose collaboration suffices at precision eps,
    and the resulting variance.  sigma_suf_sq is +inf when the set is empty."""

    focal: int
    epsilon: float
    members: frozenset[int]
    sigma_suf_sq: float

    @property
    def size(self) -> int:
        return len(self.members)


def _cluster_thresholds(
    focal: int,
    eps: float,
    hm: HeterogeneityMatrix,
    mu: float,
    threshold_exponent: int,
) -> np.ndarray:
    """(1 - b^e / (2 mu eps) - c)_+ for every peer of the focal client.

    The additive term uses b**threshold_exponent; the default exponent 2 is
    the one the nesting argument requires (exponent 1 matches a looser
    written form and is kept as an option).
    """
    if threshold_exponent not in (1, 2):
        raise ValueError("threshold_exponent must be 1 or 2")
    b = hm.b[focal] ** threshold_exponent
    return np.clip(1.0 - b / (2.0 * mu * eps) - hm.c[focal], 0.0, None)


def sufficient_cluster(
    focal: int,
    eps: float,
    hm: HeterogeneityMatrix,
    mu: float,
    sigmas: np.ndarray,
    crit: Criterion,
    threshold_exponent: int = 2,
) -> SufficientClusterReport:
    """Members are peers k with psi((1 - b_ik^2/(2 mu eps) - c_ik)_+) > 0;
    the sufficient variance is the effective variance over those thresholds.

    The focal client always qualifies (b_ii = c_ii = 0).  Members shrink and
    sigma_suf_sq grows as eps decreases.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if mu <= 0:
        raise ValueError("mu must be positive")
    sigmas = np.asarray(sigmas, dtype=float)
    if (sigmas <= 0).any():
        raise ValueError("all sigmas must be positive")
    x = _cluster_thresholds(focal, eps, hm, mu, threshold_exponent)
    psi = crit.psi(x)
    members = frozenset(int(k) for k in np.flatnonzero(psi > 0))
    total = float(psi @ sigmas**-2.0)
    sigma_suf_sq = math.inf if total == 0.0 else 1.0 / total
    return SufficientClusterReport(
        focal=focal, epsilon=eps, members=members, sigma_suf_sq=sigma_suf_sq
    )


@dataclass(frozen=True)
class BoundEvaluation:
    regime: str
    bound_at_T: float
    inputs: dict


def table1_bound(
    regime: str,
    beta: float,
    mu: float,
    eps0: float,
    sigma_suf_sq: float,
    T: int,
    eta_or_C: float | None = None,
) -> BoundEvaluation:
    """Excess-loss upper bound after T steps for the three step-size regimes.

    constant (eta = eta_or_C <= 1/mu):
        (1 - eta mu)^T eps0 + (eta beta / (2 mu)) sigma_suf_sq (1 - (1 - eta mu)^T)
        The trailing factor is the exact geometric sum; dropping it gives the
        looser plateau-only form.
    horizon_dependent (eta_or_C unused):
        (beta sigma_suf_sq / (2 mu^2 T)) (ln(2 T mu^2 eps0 / sigma_suf_sq) + 1)
    decreasing (eta_t = C/(mu t), C = eta_or_C > 1):
        max(beta sigma_suf_sq C^2 / (2 mu^2 (C - 1)), eps0) / T
    """
    if beta <= 0 or mu <= 0 or eps0 < 0 or sigma_suf_sq < 0:
        raise ValueError("need beta, mu > 0 and eps0, sigma_suf_sq >= 0")
    inputs = dict(beta=beta, mu=mu, eps0=eps0, sigma_suf_sq=sigma_suf_sq,
                  T=T, eta_or_C=eta_or_C)
    if regime == "constant":
        eta = eta_or_C
        if eta is None or eta <= 0:
            raise ValueError("constant regime needs a positive step size eta")
        if eta > 1.0 / mu + 1e-15:
            raise ValueError("constant regime requires eta <= 1/mu")
        decay = (1.0 - eta * mu) ** T
        bound = decay * eps0 + (eta * beta / (2.0 * mu)) * sigma_suf_sq * (1.0 - decay)
    elif regime == "horizon_dependent":
        if T < 1:
            raise ValueError("horizon-dependent regime requires T >= 1")
        log_arg = 2.0 * T * mu**2 * eps0 / sigma_suf_sq
        if log_arg <= 1.0:
            raise ValueError(
                "horizon-dependent regime requires 2 T mu^2 eps0 / sigma_suf_sq > 1"
            )
        bound = (beta * sigma_suf_sq / (2.0 * mu**2 * T)) * (math.log(log_arg) + 1.0)
    elif regime == "decreasing":
        C = eta_or_C
        if C is None or C <= 1.0:
            raise ValueError("decreasing regime requires C > 1")
        if T < 1:
            raise ValueError("decreasing regime requires T >= 1")
        bound = max(beta * sigma_suf_sq * C**2 / (2.0 * mu**2 * (C - 1.0)), eps0) / T
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return BoundEvaluation(regime=regime, bound_at_T=float(bound), inputs=inputs)


def sample_complexity(
    eps: float, beta: float, mu: float, sigma_suf_sq: float, C: float
) -> int:
    """Iterations to reach precision eps with the decreasing schedule C/(mu t):

        ceil(beta * sigma_suf_sq * C^2/(C-1) / (2 mu^2 eps)).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if C <= 1.0:
        raise ValueError("C must exceed 1")
    calC = C**2 / (C - 1.0)
    return math.ceil(beta * sigma_suf_sq * calC / (2.0 * mu**2 * eps))


def descent_bound_rhs(
    eta: float,
    alpha: np.ndarray,
    grad_diffs_sq: np.ndarray,
    grad_i_sq: float,
    sigmas: np.ndarray,
    beta: float,
) -> float:
    """Right-hand side of the one-step descent bound:

        (eta/2) sum_k alpha_k (||grad_k - grad_i||^2 - ||grad_i||^2)
        + eta beta sum_k sigma_k^2 alpha_k^2

    with all gradients taken at the pre-step iterate.  Requires the step
    condition eta < 1 / (beta sum_k alpha_k).
    """
    alpha = np.asarray(alpha, dtype=float)
    grad_diffs_sq = np.asarray(grad_diffs_sq, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if eta >= 1.0 / (beta * alpha.sum()):
        raise ValueError("step size violates eta < 1 / (beta * sum(alpha))")
    descent = 0.5 * eta * float(alpha @ (grad_diffs_sq - grad_i_sq))
    noise = eta * beta * float((alpha**2) @ (sigmas**2))
    return descent + noise


def nonconvex_rate_bound(
    eps0: float, beta: float, sigma_suf_sq: float, T: int
) -> float:
    """Bound on the running average of squared gradient norms:
    2 sqrt(2 eps0 beta sigma_suf_sq / T)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    return 2.0 * math.sqrt(2.0 * eps0 * beta * sigma_suf_sq / T)


def nesting_check(
    focal: int,
    eps_grid: np.ndarray,
    hm: HeterogeneityMatrix,
    mu: float,
    sigmas: np.ndarray,
    crit: Criterion,
    threshold_exponent: int = 2,
) -> bool:
    """True iff sufficient clusters are nested (smaller eps => subset) and
    sigma_suf_sq is non-increasing in eps along the given grid.

    Raises AssertionError naming the first violated inclusion.
    """
    eps_grid = np.sort(np.asarray(eps_grid, dtype=float))
    if (eps_grid <= 0).any():
        raise ValueError("eps grid must be strictly positive")
    prev = None
    for eps in eps_grid:  # increasing eps: clusters grow, variance shrinks
        rep = sufficient_cluster(focal, eps, hm, mu, sigmas, crit,
                                 threshold_exponent)
        if prev is not None:
            if not prev.members <= rep.members:
                raise AssertionError(
                    f"cluster at eps={prev.epsilon:g} not contained in "
                    f"cluster at eps={rep.epsilon:g}"
                )
            if rep.sigma_suf_sq > prev.sigma_suf_sq * (1 + 1e-12):
                raise AssertionError(
                    f"sigma_suf_sq increased from eps={prev.epsilon:g} "
                    f"to eps={rep.epsilon:g}"
                )
        prev = rep
    return True


def runtime_inclusion_check(
    focal: int,
    excess_losses: np.ndarray,
    active_sets: list[set[int]],
    hm: HeterogeneityMatrix,
    mu: float,
    sigmas: np.ndarray,
    crit: Criterion,
    threshold_exponent: int = 2,
) -> bool:
    """Trajectory mode: assert that the sufficient cluster at the realized
    excess loss is contained in the realized active set at every step."""
    for t, (eps_t, active) in enumerate(zip(excess_losses, active_sets)):
        if eps_t <= 0:
            continue  # at the optimum the sufficient cluster is undefined
        rep = sufficient_cluster(focal, float(eps_t), hm, mu, sigmas, crit,
                                 threshold_exponent)
        if not rep.members <= set(active):
            raise AssertionError(
                f"step {t}: sufficient cluster {sorted(rep.members)} not "
                f"contained in active set {sorted(active)}"
            )
    return True
