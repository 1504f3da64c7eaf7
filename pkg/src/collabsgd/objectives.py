"""Client objective functions: quadratics and online least-squares regression.

Each objective exposes the exact gradient, a stochastic gradient oracle, and
the constants (smoothness, strong convexity, noise level) consumed by the
theory module.  Vectorized "population" wrappers evaluate all clients at once
for the training loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .streams import RngStream, psd_factor, sample_orthogonal_matrix

__all__ = [
    "QuadraticObjective",
    "LsrObjective",
    "ObjectiveConstants",
    "HeterogeneityMatrix",
    "constants",
    "heterogeneity_bounds",
    "validate_heterogeneity",
    "HeterogeneityReport",
    "QuadraticPopulation",
    "LsrPopulation",
    "make_population",
    "two_cluster_lsr",
    "shifted_optima_quadratics",
]


@dataclass(frozen=True)
class QuadraticObjective:
    """Loss R(theta) = (theta + xi)^T A (theta + xi) with additive gradient noise.

    A must be symmetric PSD; the minimizer is -xi when A is PD and the minimum
    value is 0.  The stochastic oracle adds isotropic Gaussian noise whose
    total variance (trace of the covariance) equals noise_sigma**2.
    """

    A: np.ndarray
    xi: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if A.shape != (xi.size, xi.size):
            raise ValueError("A and xi dimensions do not match")
        if not np.allclose(A, A.T, atol=1e-10):
            raise ValueError("A must be symmetric")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self) -> int:
        return self.xi.size

    @property
    def minimizer(self) -> np.ndarray:
        return -self.xi

    def loss(self, theta: np.ndarray) -> float:
        z = np.asarray(theta) + self.xi
        return float(z @ self.A @ z)

    def exact_gradient(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError("theta dimension mismatch")
        return 2.0 * self.A @ (theta + self.xi)

    def stochastic_gradient(self, theta: np.ndarray, stream: RngStream) -> np.ndarray:
        g = self.exact_gradient(theta)
        if self.noise_sigma == 0.0:
            return g
        # covariance (sigma^2/d) I so the trace equals sigma^2
        noise = stream.standard_normal(self.dim) * (self.noise_sigma / np.sqrt(self.dim))
        return g + noise


@dataclass(frozen=True)
class LsrObjective:
    """Online least-squares regression with feature-sampling noise only.

    Streams (x, y) pairs with x ~ N(0, H) and y = <x, theta_star>; the
    expected loss is R(theta) = (theta - theta_star)^T H (theta - theta_star)
    up to the factor absorbed by the squared-loss convention below.  Labels
    are noiseless, so a client at theta_star sees exactly zero gradients.
    """

    H: np.ndarray
    theta_star: np.ndarray
    batch_size: int = 1

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        ts = np.asarray(self.theta_star, dtype=float)
        if H.shape != (ts.size, ts.size):
            raise ValueError("H and theta_star dimensions do not match")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "theta_star", ts)
        object.__setattr__(self, "_chol", psd_factor(H))

    @property
    def dim(self) -> int:
        return self.theta_star.size

    @property
    def minimizer(self) -> np.ndarray:
        return self.theta_star

    def loss(self, theta: np.ndarray) -> float:
        """Expected squared loss under the true feature distribution."""
        z = np.asarray(theta) - self.theta_star
        return float(z @ self.H @ z)

    def exact_gradient(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError("theta dimension mismatch")
        return 2.0 * self.H @ (theta - self.theta_star)

    def stochastic_gradient(self, theta: np.ndarray, stream: RngStream) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError("theta dimension mismatch")
        X = stream.standard_normal((self.batch_size, self.dim)) @ self._chol.T
        resid = X @ (theta - self.theta_star)
        return (2.0 / self.batch_size) * X.T @ resid


@dataclass(frozen=True)
class ObjectiveConstants:
    """Smoothness beta, strong-convexity/PL constant mu, and noise bound sigma."""

    beta: float
    mu: float
    sigma: float

    def __post_init__(self):
        if self.beta <= 0 or self.mu < 0 or self.sigma < 0:
            raise ValueError("need beta > 0, mu >= 0, sigma >= 0")
        if self.mu > self.beta + 1e-12:
            raise ValueError("mu cannot exceed beta")


def constants(
    obj: QuadraticObjective | LsrObjective,
    stream: RngStream | None = None,
    probe_draws: int = 10_000,
    theta0: np.ndarray | None = None,
) -> ObjectiveConstants:
    """Extract (beta, mu, sigma) from an objective.

    beta and mu come from the extreme eigenvalues of the curvature matrix.
    sigma is the declared noise scale for quadratics; for LSR it is estimated
    empirically as the 99th percentile of ||g - grad R|| over probe draws at
    theta0 (default: the origin), since no closed form is available.
    """
    if isinstance(obj, QuadraticObjective):
        w = np.linalg.eigvalsh(obj.A)
        return ObjectiveConstants(beta=2.0 * w[-1], mu=2.0 * max(w[0], 0.0),
                                  sigma=obj.noise_sigma)
    w = np.linalg.eigvalsh(obj.H)
    if stream is None:
        stream = RngStream(0, purpose="sigma-probe")
    theta0 = np.zeros(obj.dim) if theta0 is None else np.asarray(theta0, dtype=float)
    exact = obj.exact_gradient(theta0)
    devs = np.empty(probe_draws)
    for j in range(probe_draws):
        devs[j] = np.linalg.norm(obj.stochastic_gradient(theta0, stream) - exact)
    return ObjectiveConstants(beta=2.0 * w[-1], mu=2.0 * max(w[0], 0.0),
                              sigma=float(np.percentile(devs, 99)))


@dataclass(frozen=True)
class HeterogeneityMatrix:
    """Pairwise dissimilarity constants: additive b and multiplicative c."""

    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if b.shape != c.shape or b.ndim != 2 or b.shape[0] != b.shape[1]:
            raise ValueError("b and c must be square matrices of the same size")
        if (b < 0).any() or (c < 0).any():
            raise ValueError("b and c must be nonnegative")
        if np.diag(b).any() or np.diag(c).any():
            raise ValueError("diagonal of b and c must be zero")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def n_clients(self) -> int:
        return self.b.shape[0]


def heterogeneity_bounds(objs: list[QuadraticObjective]) -> HeterogeneityMatrix:
    """Closed-form (b, c) for quadratics:

    b_ik = 2 sqrt(2) ||A_k (xi_i - xi_k)||_2 and c_ik = 2 ||I - A_k A_i^{-1}||_2^2
    (spectral norm), with zero diagonal.  All A_i must be invertible.

    Derivation: grad R_k = A_k A_i^{-1} grad R_i + 2 A_k (xi_k - xi_i), so by
    Young's inequality ||grad R_i - grad R_k||^2 <= 2 ||I - A_k A_i^{-1}||^2
    ||grad R_i||^2 + 8 ||A_k (xi_i - xi_k)||^2.  (The factor 2 on the additive
    term comes from the gradient 2 A (theta + xi) of the un-halved quadratic.)
    """
    n = len(objs)
    d = objs[0].dim
    b = np.zeros((n, n))
    c = np.zeros((n, n))
    inverses = []
    for o in objs:
        if o.dim != d:
            raise ValueError("all objectives must share the same dimension")
        try:
            inverses.append(np.linalg.inv(o.A))
        except np.linalg.LinAlgError as e:
            raise ValueError("singular curvature matrix A") from e
    eye = np.eye(d)
    for i in range(n):
        for k in range(n):
            if i == k:
                continue
            b[i, k] = 2.0 * np.sqrt(2.0) * np.linalg.norm(
                objs[k].A @ (objs[i].xi - objs[k].xi)
            )
            spec = np.linalg.norm(eye - objs[k].A @ inverses[i], ord=2)
            c[i, k] = 2.0 * spec**2
    return HeterogeneityMatrix(b=b, c=c)


@dataclass(frozen=True)
class HeterogeneityReport:
    max_violation: float
    worst_pair: tuple[int, int]
    worst_theta: np.ndarray

    @property
    def ok(self) -> bool:
        return self.max_violation <= 1e-9


def validate_heterogeneity(
    objs: list[QuadraticObjective | LsrObjective],
    hm: HeterogeneityMatrix,
    probes: int,
    stream: RngStream | None = None,
    scale: float = 5.0,
) -> HeterogeneityReport:
    """Probe random thetas and check the pairwise dissimilarity inequality

        ||grad R_i - grad R_k||^2 <= b_ik^2 + c_ik ||grad R_i||^2

    for every ordered pair.  Returns the worst signed violation (<= 0 means
    the inequality holds everywhere on the probe set).
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if stream is None:
        stream = RngStream(0, purpose="het-probe")
    n = len(objs)
    d = objs[0].dim
    worst = -np.inf
    worst_pair = (0, 0)
    worst_theta = np.zeros(d)
    for _ in range(probes):
        theta = scale * stream.standard_normal(d)
        grads = [o.exact_gradient(theta) for o in objs]
        for i in range(n):
            gi_sq = float(grads[i] @ grads[i])
            for k in range(n):
                if i == k:
                    continue
                lhs = float(np.sum((grads[i] - grads[k]) ** 2))
                slack = lhs - hm.b[i, k] ** 2 - hm.c[i, k] * gi_sq
                if slack > worst:
                    worst, worst_pair, worst_theta = slack, (i, k), theta
    return HeterogeneityReport(max_violation=worst, worst_pair=worst_pair,
                               worst_theta=worst_theta)


# ---------------------------------------------------------------------------
# Vectorized populations
# ---------------------------------------------------------------------------


class QuadraticPopulation:
    """Stacked quadratic objectives evaluated jointly across clients."""

    def __init__(self, objs: list[QuadraticObjective]):
        self.objectives = list(objs)
        self.n_clients = len(objs)
        self.dim = objs[0].dim
        self.A = np.stack([o.A for o in objs])
        self.xi = np.stack([o.xi for o in objs])
        self.noise_sigma = np.array([o.noise_sigma for o in objs])

    def losses(self, thetas: np.ndarray) -> np.ndarray:
        """Per-client loss; thetas has shape (N, d) (one iterate per client)."""
        z = thetas + self.xi
        return np.einsum("nd,ndk,nk->n", z, self.A, z)

    def exact_gradients(self, theta: np.ndarray) -> np.ndarray:
        """All clients' exact gradients at one shared point; shape (N, d)."""
        z = theta[None, :] + self.xi
        return 2.0 * np.einsum("ndk,nk->nd", self.A, z)

    def stochastic_gradients(self, theta: np.ndarray, stream: RngStream,
                             draws: int = 1) -> np.ndarray:
        """draws independent gradients per client at theta; shape (draws, N, d)."""
        g = self.exact_gradients(theta)[None]
        noise = stream.standard_normal((draws, self.n_clients, self.dim))
        noise *= (self.noise_sigma / np.sqrt(self.dim))[None, :, None]
        return g + noise

    def stochastic_gradients_each(self, thetas: np.ndarray,
                                  stream: RngStream) -> np.ndarray:
        """Each client's gradient at its own iterate; thetas (N, d) -> (N, d)."""
        z = thetas + self.xi
        g = 2.0 * np.einsum("ndk,nk->nd", self.A, z)
        noise = stream.standard_normal((self.n_clients, self.dim))
        noise *= (self.noise_sigma / np.sqrt(self.dim))[:, None]
        return g + noise


class LsrPopulation:
    """Stacked online least-squares objectives evaluated jointly across clients."""

    def __init__(self, objs: list[LsrObjective]):
        self.objectives = list(objs)
        self.n_clients = len(objs)
        self.dim = objs[0].dim
        self.batch_size = objs[0].batch_size
        if any(o.batch_size != self.batch_size for o in objs):
            raise ValueError("all clients must share the same batch size")
        self.H = np.stack([o.H for o in objs])
        self.chol = np.stack([o._chol for o in objs])
        self.theta_star = np.stack([o.theta_star for o in objs])

    def losses(self, thetas: np.ndarray) -> np.ndarray:
        z = thetas - self.theta_star
        return np.einsum("nd,ndk,nk->n", z, self.H, z)

    def exact_gradients(self, theta: np.ndarray) -> np.ndarray:
        z = theta[None, :] - self.theta_star
        return 2.0 * np.einsum("ndk,nk->nd", self.H, z)

    def stochastic_gradients(self, theta: np.ndarray, stream: RngStream,
                             draws: int = 1) -> np.ndarray:
        n, d, b = self.n_clients, self.dim, self.batch_size
        Z = stream.standard_normal((draws, n, b, d))
        X = np.einsum("jnbd,nkd->jnbk", Z, self.chol)
        resid = np.einsum("jnbd,d->jnb", X, theta) - np.einsum(
            "jnbd,nd->jnb", X, self.theta_star
        )
        return (2.0 / b) * np.einsum("jnbd,jnb->jnd", X, resid)

    def stochastic_gradients_each(self, thetas: np.ndarray,
                                  stream: RngStream) -> np.ndarray:
        """Each client's gradient at its own iterate; thetas (N, d) -> (N, d)."""
        n, d, b = self.n_clients, self.dim, self.batch_size
        Z = stream.standard_normal((n, b, d))
        X = np.einsum("nbd,nkd->nbk", Z, self.chol)
        resid = np.einsum("nbd,nd->nb", X, thetas - self.theta_star)
        return (2.0 / b) * np.einsum("nbd,nb->nd", X, resid)


def make_population(objs):
    if all(isinstance(o, QuadraticObjective) for o in objs):
        return QuadraticPopulation(objs)
    if all(isinstance(o, LsrObjective) for o in objs):
        return LsrPopulation(objs)
    raise TypeError("objectives must be all quadratic or all least-squares")


# ---------------------------------------------------------------------------
# Synthetic builders
# ---------------------------------------------------------------------------


def two_cluster_lsr(
    n_clients: int,
    d: int,
    batch_size: int,
    stream: RngStream,
    spectrum: np.ndarray | None = None,
    optima_scale: float = 1.0,
) -> tuple[list[LsrObjective], list[int]]:
    """Two-cluster least-squares population: even-index clients share one
    ground-truth model, odd-index clients the other.  Feature covariances are
    H_i = P_i^T diag(spectrum) P_i with P_i Haar-orthogonal (spectrum defaults
    to all ones, which makes H_i the identity).

    Returns the objectives and the cluster label of each client.
    """
    spectrum = np.ones(d) if spectrum is None else np.asarray(spectrum, dtype=float)
    anchors = [optima_scale * stream.standard_normal(d) for _ in range(2)]
    objs = []
    labels = []
    for i in range(n_clients):
        P = sample_orthogonal_matrix(stream, d)
        H = P.T @ np.diag(spectrum) @ P
        H = (H + H.T) / 2.0
        objs.append(LsrObjective(H=H, theta_star=anchors[i % 2], batch_size=batch_size))
        labels.append(i % 2)
    return objs, labels


def shifted_optima_quadratics(
    n_clients: int,
    d: int,
    v: float,
    stream: RngStream,
    noise_sigma: float = 1.0,
) -> list[QuadraticObjective]:
    """Clients with identity curvature and optima theta_star + xi_i where
    xi_i ~ N(0, v^2 I); v controls the heterogeneity level."""
    anchor = stream.standard_normal(d)
    objs = []
    for _ in range(n_clients):
        opt = anchor + v * stream.standard_normal(d)
        objs.append(QuadraticObjective(A=np.eye(d), xi=-opt, noise_sigma=noise_sigma))
    return objs
