"""Diagonal Gaussian and Dirac distributions over real weight vectors.

These two families carry every distribution in the package: priors and
posteriors over model weights, meta-level distributions over prior
parameters, and the degenerate point masses used when a construction pins
a prior exactly. Variances are stored in log space so that gradient-based
optimization of them is unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiagonalGaussian:
    """N(mean, diag(exp(log_var))) over vectors of dimension d >= 1."""

    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        log_var = np.asarray(self.log_var, dtype=np.float64)
        if mean.ndim != 1 or log_var.ndim != 1:
            raise ValueError("mean and log_var must be 1-d vectors")
        if mean.shape != log_var.shape:
            raise ValueError(
                f"dimension mismatch: mean has {mean.shape[0]}, "
                f"log_var has {log_var.shape[0]}"
            )
        if mean.shape[0] < 1:
            raise ValueError("dimension must be >= 1")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(log_var)):
            raise ValueError("mean and log_var entries must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_var", log_var)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def var(self) -> np.ndarray:
        return np.exp(self.log_var)

    @property
    def std(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var)


def isotropic(mean: np.ndarray, variance: float) -> DiagonalGaussian:
    """Convenience constructor for N(mean, variance * I)."""
    mean = np.asarray(mean, dtype=np.float64)
    if variance <= 0.0:
        raise ValueError("variance must be positive")
    return DiagonalGaussian(mean, np.full(mean.shape, np.log(variance)))


@dataclass(frozen=True)
class DiracDistribution:
    """Point mass at a fixed vector."""

    point: np.ndarray

    def __post_init__(self):
        point = np.asarray(self.point, dtype=np.float64)
        if point.ndim != 1 or point.shape[0] < 1:
            raise ValueError("point must be a vector of dimension >= 1")
        object.__setattr__(self, "point", point)

    @property
    def dim(self) -> int:
        return self.point.shape[0]


def kl_diag_gaussian(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    """Exact KL(q || p) between diagonal Gaussians.

    Per coordinate the closed form is
    (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2 + log(sp / sq),
    summed over coordinates. Nonnegative, and exactly zero when the
    parameter vectors coincide.
    """
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: {q.dim} vs {p.dim}")
    dlv = q.log_var - p.log_var
    delta = q.mean - p.mean
    terms = np.exp(dlv) + delta * delta * np.exp(-p.log_var) - 1.0 - dlv
    return float(0.5 * np.sum(terms))


def kl_dirac(q: DiracDistribution, p: DiracDistribution) -> float:
    """KL between point masses: zero when they coincide, undefined otherwise.

    A mismatched pair has infinite divergence and is never a meaningful
    input here, so it raises instead of returning inf.
    """
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: {q.dim} vs {p.dim}")
    if not np.array_equal(q.point, p.point):
        raise ValueError("KL between distinct point masses is undefined (infinite)")
    return 0.0


def sample(dist: DiagonalGaussian, rng: np.random.Generator) -> np.ndarray:
    """Draw one vector as mean + std * eps with eps standard normal.

    The reparametrized form is deliberate: callers that need pathwise
    gradients reuse the same eps convention on the tape.
    """
    eps = rng.standard_normal(dist.dim)
    return dist.mean + dist.std * eps


def expected_kl_under_gaussian_mean(
    q: DiagonalGaussian, hyper: DiagonalGaussian, prior_var: float
) -> float:
    """E over mu_P ~ hyper of KL(q || N(mu_P, prior_var * I)), in closed form.

    Averaging the quadratic (mq - mu_P)^2 term over the Gaussian hyper
    distribution adds its per-coordinate variance, so the expectation equals

        KL(q || N(mean(hyper), prior_var * I)) + sum_i var(hyper)_i / (2 prior_var).

    Parameters
    ----------
    q : posterior over weights
    hyper : distribution over the prior mean mu_P
    prior_var : shared per-coordinate variance of the prior family
    """
    if q.dim != hyper.dim:
        raise ValueError(f"dimension mismatch: {q.dim} vs {hyper.dim}")
    if prior_var <= 0.0:
        raise ValueError("prior_var must be positive")
    center = isotropic(hyper.mean, prior_var)
    return kl_diag_gaussian(q, center) + float(np.sum(hyper.var)) / (2.0 * prior_var)
