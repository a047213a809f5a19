"""Analytic score priors with closed-form noised marginals.

These are verification instruments: their noised log-densities are exact, so
the Langevin sampler can be checked against conjugate posteriors.  All priors
operate on flat complex vectors; the 2-D toy identifies a point (u, v) with
the single complex number u + iv, and small images are flattened.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ._kernels import gmm_logpdf_batch, gmm_score_batch
from .domain import NoiseSchedule

__all__ = [
    "ScorePrior",
    "GaussianPrior",
    "GmmPrior",
    "gmm_exact_posterior",
    "load_gmm_config",
]


@runtime_checkable
class ScorePrior(Protocol):
    """Evaluatable score field s(x, i) of the noise-perturbed prior."""

    supports_exact_posterior: bool

    def score(self, x: np.ndarray, i: int, schedule: NoiseSchedule) -> np.ndarray: ...


@dataclass(frozen=True)
class GaussianPrior:
    """CN(mean, variance I); variance may be a scalar or a per-entry array.

    A per-entry variance lets tests pin some pixels tightly while leaving
    others nearly unconstrained (the unfolding-ambiguity construction).
    """

    mean: np.ndarray
    variance: object  # float or ndarray broadcastable to mean

    supports_exact_posterior = True

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.complex128))
        v = np.asarray(self.variance, dtype=np.float64)
        if np.any(v <= 0):
            raise ValueError("variance must be positive")
        object.__setattr__(self, "variance", v if v.ndim else float(v))

    def score(self, x, i, schedule):
        """Score of the noised marginal CN(mean, (variance + sigma_i^2) I)."""
        sig2 = schedule.sigma(i) ** 2
        return (self.mean - x) / (np.asarray(self.variance) + sig2)

    def noised_log_density(self, x, i, schedule):
        sig2 = schedule.sigma(i) ** 2
        c = np.asarray(self.variance) + sig2
        diff = x - self.mean
        quad = (diff.real**2 + diff.imag**2) / c
        return -np.sum(quad + np.log(np.pi * c) * np.ones_like(quad), axis=-1)


@dataclass(frozen=True)
class GmmPrior:
    """Mixture sum_k w_k CN(mu_k, v_k I) on flat complex vectors."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d) complex
    variances: np.ndarray  # (K,)

    supports_exact_posterior = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.complex128))
        v = np.asarray(self.variances, dtype=np.float64)
        if np.any(w <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1")
        if np.any(v <= 0):
            raise ValueError("component variances must be positive")
        if not (w.size == mu.shape[0] == v.size):
            raise ValueError("inconsistent component counts")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", v)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _noised(self, i, schedule):
        sig2 = schedule.sigma(i) ** 2
        return self.variances + sig2

    def score(self, x, i, schedule):
        x = np.asarray(x, dtype=np.complex128)
        flat = np.atleast_2d(x.reshape(-1, self.dim) if x.ndim else x.reshape(1, 1))
        out = gmm_score_batch(
            np.ascontiguousarray(flat), np.log(self.weights), self.means, self._noised(i, schedule)
        )
        return out.reshape(x.shape)

    def noised_log_density(self, x, i, schedule):
        x = np.asarray(x, dtype=np.complex128)
        flat = x.reshape(-1, self.dim)
        out = gmm_logpdf_batch(
            np.ascontiguousarray(flat), np.log(self.weights), self.means, self._noised(i, schedule)
        )
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else out[0]


def gmm_exact_posterior(prior: GmmPrior, op, y, noise_var: float) -> GmmPrior:
    """Closed-form posterior of a GMM prior under y = A x + CN(0, noise_var I).

    Each component gets a conjugate Gaussian update and a reweighting by its
    evidence CN(y; A mu_k, A Sigma_k A^H + noise_var I).  The result is
    returned as a GmmPrior, which requires the per-component posterior
    covariance to be isotropic; this holds whenever A^H A is a multiple of
    the identity (all operators used by the toy problems).
    """
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    a = op.as_matrix() if hasattr(op, "as_matrix") else np.asarray(op, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    m, d = a.shape
    if d != prior.dim:
        raise ValueError("operator dimension does not match prior")
    gram = np.conj(a.T) @ a
    alpha = gram[0, 0].real
    if not np.allclose(gram, alpha * np.eye(d), atol=1e-10 * max(alpha, 1.0)):
        raise ValueError("A^H A is not a scalar multiple of identity; posterior is not isotropic")

    new_means = np.empty_like(prior.means)
    new_vars = np.empty_like(prior.variances)
    log_w = np.log(prior.weights)
    at_y = np.conj(a.T) @ y
    for k in range(prior.n_components):
        vk = prior.variances[k]
        prec = 1.0 / vk + alpha / noise_var
        if not np.isfinite(prec) or prec <= 0:
            raise np.linalg.LinAlgError("singular normal equations in conjugate update")
        new_vars[k] = 1.0 / prec
        new_means[k] = (prior.means[k] / vk + at_y / noise_var) / prec
        # evidence of component k: CN(y; A mu_k, vk A A^H + noise_var I)
        resid = y - a @ prior.means[k]
        cov = vk * (a @ np.conj(a.T)) + noise_var * np.eye(m)
        sign, logdet = np.linalg.slogdet(np.pi * cov)
        quad = np.real(np.conj(resid) @ np.linalg.solve(cov, resid))
        log_w[k] += -logdet - quad

    log_w -= log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    return GmmPrior(w, new_means, new_vars)


def load_gmm_config(section) -> GmmPrior:
    """Build a GmmPrior from a flat config mapping.

    Expected keys: weights (comma-separated), variances (comma-separated),
    and mean_k entries "re,im[,re,im...]" for k = 1..K.
    """
    weights = np.array([float(t) for t in section["weights"].split(",")])
    variances = np.array([float(t) for t in section["variances"].split(",")])
    means = []
    for k in range(1, weights.size + 1):
        vals = [float(t) for t in section[f"mean_{k}"].split(",")]
        if len(vals) % 2 != 0:
            raise ValueError(f"mean_{k} must list re,im pairs")
        re = np.array(vals[0::2])
        im = np.array(vals[1::2])
        means.append(re + 1j * im)
    return GmmPrior(weights, np.stack(means), variances)
