"""Seedable, splittable random streams and shared sampling primitives.

Every random draw in the library flows through an :class:`RngStream`, derived
from a single master seed plus a (client, purpose) identity.  Two streams with
the same identity produce bit-identical sequences regardless of thread
scheduling; distinct identities give statistically independent Philox streams.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = [
    "RngStream",
    "sample_gaussian_vector",
    "sample_orthogonal_matrix",
    "psd_factor",
]

_EIG_TOL = 1e-9


def _purpose_code(purpose: str) -> int:
    # stable across runs and interpreters (hash() is salted, crc32 is not)
    return zlib.crc32(purpose.encode("utf-8"))


class RngStream:
    """A counter-based PRNG stream identified by (seed, client, purpose).

    The underlying generator is Philox keyed on a SeedSequence spawned from
    the master seed, so per-client streams need no coordination.  A stream is
    single-owner: do not share one instance between concurrent tasks.
    """

    def __init__(self, seed: int, client: int = 0, purpose: str = "main"):
        self.seed = int(seed)
        self.client = int(client)
        self.purpose = purpose
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.client, _purpose_code(purpose))
        )
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, client: int | None = None, purpose: str | None = None) -> "RngStream":
        """Derive an independent stream for another (client, purpose) pair."""
        return RngStream(
            self.seed,
            self.client if client is None else client,
            self.purpose if purpose is None else purpose,
        )

    def standard_normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, client={self.client}, purpose={self.purpose!r})"


def psd_factor(covariance: np.ndarray) -> np.ndarray:
    """Return L with L @ L.T == covariance for a symmetric PSD matrix.

    Fast path is a Cholesky factorization; semi-definite inputs (e.g. the
    all-zero matrix) fall back to a symmetric eigendecomposition so that a
    zero covariance yields an exactly zero factor.
    """
    covariance = np.asarray(covariance, dtype=float)
    if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
        raise ValueError(f"covariance must be square, got shape {covariance.shape}")
    if not np.allclose(covariance, covariance.T, atol=1e-10):
        raise ValueError("covariance must be symmetric")
    try:
        return np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(covariance)
        scale = max(abs(w[-1]), 1.0)
        if w[0] < -_EIG_TOL * scale:
            raise ValueError(f"covariance is not PSD (min eigenvalue {w[0]:.3e})")
        return v * np.sqrt(np.clip(w, 0.0, None))


def sample_gaussian_vector(
    stream: RngStream, mean: np.ndarray, covariance: np.ndarray
) -> np.ndarray:
    """Draw mean + L z with z standard normal and L a PSD factor of covariance."""
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 1:
        raise ValueError("mean must be a vector")
    if covariance is not None and np.asarray(covariance).shape != (mean.size, mean.size):
        raise ValueError("mean/covariance dimension mismatch")
    L = psd_factor(covariance)
    z = stream.standard_normal(mean.size)
    return mean + L @ z


def sample_orthogonal_matrix(stream: RngStream, d: int) -> np.ndarray:
    """Draw a Haar-distributed d x d orthogonal matrix.

    QR of a standard Gaussian matrix, with the diagonal of R sign-corrected
    so the distribution is uniform over the orthogonal group.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    z = stream.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    # sign correction: make diag(r) positive
    q = q * np.sign(np.diag(r))
    return q
