"""Collaboration weights: criterion functions, similarity ratios, and the
stochastic ratio estimator.

The weight of peer k in client i's update is phi(r_ik) * sigma_eff^2 / sigma_k^2
where r_ik is the clipped gradient-similarity ratio and sigma_eff^2 is the
effective variance 1 / sum_k psi(r_ik) / sigma_k^2 with psi(x) = x * phi(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .streams import RngStream

__all__ = [
    "Criterion",
    "NoAdmissibleCollaborator",
    "CollaborationState",
    "similarity_ratio",
    "exact_ratios",
    "compute_weights",
    "estimate_ratios",
    "step_size_ratio_bounds",
]


class NoAdmissibleCollaborator(ValueError):
    """Raised when every psi(r_ik) is zero and no weight can be formed."""


@dataclass(frozen=True)
class Criterion:
    """Non-decreasing criterion on [0, 1] with phi(0) = 0 and phi(x) <= x.

    binary:     phi(x) = lam * 1{x >= lam}  (hard thresholding, lam in (0, 1])
    continuous: phi(x) = x                  (soft thresholding)
    """

    kind: str = "continuous"
    lam: float = 0.5

    def __post_init__(self):
        if self.kind not in ("binary", "continuous"):
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.kind == "binary" and not (0.0 < self.lam <= 1.0):
            raise ValueError("lambda must be in (0, 1]")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "binary":
            return np.where(x >= self.lam, self.lam, 0.0)
        return x

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        return x * self.phi(x)


def similarity_ratio(grad_i: np.ndarray, grad_k: np.ndarray) -> float:
    """Clipped ratio (1 - ||g_k - g_i||^2 / ||g_i||^2)_+ in [0, 1].

    Convention at a stationary point (||g_i|| = 0): the ratio is 1 if g_k is
    also zero and 0 otherwise, since collaboration there brings only bias.
    """
    grad_i = np.asarray(grad_i, dtype=float)
    grad_k = np.asarray(grad_k, dtype=float)
    gi_sq = float(grad_i @ grad_i)
    diff_sq = float(np.sum((grad_k - grad_i) ** 2))
    if gi_sq == 0.0:
        return 1.0 if diff_sq == 0.0 else 0.0
    return float(np.clip(1.0 - diff_sq / gi_sq, 0.0, 1.0))


def exact_ratios(grads: np.ndarray, focal: int) -> np.ndarray:
    """Similarity ratios of every client against the focal one.

    grads has shape (N, d): each client's exact gradient at the focal
    client's parameters.
    """
    grads = np.asarray(grads, dtype=float)
    gi = grads[focal]
    gi_sq = float(gi @ gi)
    if gi_sq == 0.0:
        r = np.zeros(grads.shape[0])
        r[focal] = 1.0
        return r
    diff_sq = np.sum((grads - gi[None, :]) ** 2, axis=1)
    return np.clip(1.0 - diff_sq / gi_sq, 0.0, 1.0)


@dataclass(frozen=True)
class CollaborationState:
    """Weights and variance summaries for one focal client at one step."""

    alpha: np.ndarray
    sigma_eff_sq: float   # 1 / sum_k psi(r_ik) / sigma_k^2
    sigma_phi_sq: float   # 1 / sum_k phi(r_ik) / sigma_k^2
    active_set: np.ndarray  # indices with alpha > 0

    @property
    def weight_sum(self) -> float:
        return float(self.alpha.sum())

    @property
    def step_ratio(self) -> float:
        """(sigma_phi / sigma_eff)^2, the realized step-size ratio in (0, 1]."""
        return self.sigma_phi_sq / self.sigma_eff_sq


def compute_weights(
    ratios: np.ndarray, sigmas: np.ndarray, crit: Criterion
) -> CollaborationState:
    """Collaboration weights alpha_k = phi(r_k) * sigma_eff^2 / sigma_k^2."""
    ratios = np.asarray(ratios, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if ratios.shape != sigmas.shape:
        raise ValueError("ratios and sigmas must have the same length")
    if (sigmas <= 0).any():
        raise ValueError("all sigmas must be positive")
    if (ratios < -1e-12).any() or (ratios > 1 + 1e-12).any():
        raise ValueError("ratios must lie in [0, 1]")
    inv_var = sigmas**-2.0
    psi_sum = float(crit.psi(ratios) @ inv_var)
    if psi_sum == 0.0:
        raise NoAdmissibleCollaborator("all psi(r_ik) are zero")
    sigma_eff_sq = 1.0 / psi_sum
    sigma_phi_sq = 1.0 / float(crit.phi(ratios) @ inv_var)
    alpha = crit.phi(ratios) * sigma_eff_sq * inv_var
    return CollaborationState(
        alpha=alpha,
        sigma_eff_sq=sigma_eff_sq,
        sigma_phi_sq=sigma_phi_sq,
        active_set=np.flatnonzero(alpha > 0),
    )


def estimate_ratios(
    population,
    focal: int,
    theta: np.ndarray,
    b_alpha: int,
    stream: RngStream,
    flags: dict | None = None,
) -> np.ndarray:
    """Stochastic similarity-ratio estimator.

    Draws b_alpha independent stochastic gradients per client at the focal
    parameters, averages them, and forms

        Z_k = ||mean_j (g_focal^j - g_k^j)||^2,   Z = ||mean_j g_focal^j||^2,
        r_hat_k = (1 - Z_k / Z)_+ clipped to [0, 1].

    The focal draws are shared across peers, so r_hat of the focal client is
    exactly 1.  These draws must be (and are) independent of the gradients
    later used in the optimizer step.  If Z = 0 every ratio is set to 0
    except the focal one.
    """
    if b_alpha < 1:
        raise ValueError("b_alpha must be >= 1")
    g = population.stochastic_gradients(theta, stream, draws=b_alpha)
    g_mean = g.mean(axis=0)  # (N, d)
    z_focal = float(g_mean[focal] @ g_mean[focal])
    if z_focal == 0.0:
        if flags is not None:
            flags["zero_gradient_estimates"] = flags.get("zero_gradient_estimates", 0) + 1
        r = np.zeros(population.n_clients)
        r[focal] = 1.0
        return r
    z_pair = np.sum((g_mean - g_mean[focal][None, :]) ** 2, axis=1)
    return np.clip(1.0 - z_pair / z_focal, 0.0, 1.0)


def step_size_ratio_bounds(
    state: CollaborationState, crit: Criterion, sigmas: np.ndarray, focal: int
) -> tuple[float, float]:
    """Analytic bounds on the realized ratio (sigma_phi / sigma_eff)^2.

    Binary criterion: the ratio is at least lambda.  Continuous criterion:
    at least sigma_focal^-2 / sum_k sigma_k^-2.  The upper bound is always 1.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    if crit.kind == "binary":
        lower = crit.lam
    else:
        inv_var = sigmas**-2.0
        lower = float(inv_var[focal] / inv_var.sum())
    return lower, 1.0
