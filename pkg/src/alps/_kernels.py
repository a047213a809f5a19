"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The Gaussian-mixture score evaluation dominates the runtime of the analytic
toy runs (tens of thousands of chains times hundreds of annealing steps), so
it is compiled with numba @njit.  Set the environment variable ALPS_NO_NUMBA=1
to force the numpy implementation; benchmarks/bench_kernels.py compares both.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("ALPS_NO_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def _gmm_score_numpy(x, log_weights, means, variances):
    """Score of sum_k w_k CN(mu_k, c_k I) at points x.

    x: (n, d) complex; means: (K, d) complex; variances: (K,) total complex
    variance per entry.  Responsibilities are computed in log space with
    max-subtraction so that nearly degenerate mixtures do not underflow.
    """
    n, d = x.shape
    diff = means[None, :, :] - x[:, None, :]  # (n, K, d)
    sq = np.sum(diff.real**2 + diff.imag**2, axis=2)  # (n, K)
    logp = log_weights[None, :] - d * np.log(np.pi * variances)[None, :] - sq / variances[None, :]
    m = logp.max(axis=1, keepdims=True)
    resp = np.exp(logp - m)
    resp /= resp.sum(axis=1, keepdims=True)
    score = np.einsum("nk,nkd->nd", resp / variances[None, :], diff)
    return score


def _gmm_logpdf_numpy(x, log_weights, means, variances):
    n, d = x.shape
    diff = means[None, :, :] - x[:, None, :]
    sq = np.sum(diff.real**2 + diff.imag**2, axis=2)
    logp = log_weights[None, :] - d * np.log(np.pi * variances)[None, :] - sq / variances[None, :]
    m = logp.max(axis=1)
    return m + np.log(np.sum(np.exp(logp - m[:, None]), axis=1))


if USE_NUMBA:

    @njit(cache=True)
    def _gmm_score_njit(x, log_weights, means, variances):  # pragma: no cover - compiled
        n, d = x.shape
        K = means.shape[0]
        score = np.empty((n, d), dtype=np.complex128)
        logp = np.empty(K)
        for p in range(n):
            for k in range(K):
                sq = 0.0
                for j in range(d):
                    dr = means[k, j].real - x[p, j].real
                    di = means[k, j].imag - x[p, j].imag
                    sq += dr * dr + di * di
                logp[k] = log_weights[k] - d * np.log(np.pi * variances[k]) - sq / variances[k]
            m = logp[0]
            for k in range(1, K):
                if logp[k] > m:
                    m = logp[k]
            tot = 0.0
            for k in range(K):
                logp[k] = np.exp(logp[k] - m)
                tot += logp[k]
            for j in range(d):
                acc = 0.0 + 0.0j
                for k in range(K):
                    acc += (logp[k] / tot / variances[k]) * (means[k, j] - x[p, j])
                score[p, j] = acc
        return score

    @njit(cache=True)
    def _gmm_logpdf_njit(x, log_weights, means, variances):  # pragma: no cover - compiled
        n, d = x.shape
        K = means.shape[0]
        out = np.empty(n)
        logp = np.empty(K)
        for p in range(n):
            for k in range(K):
                sq = 0.0
                for j in range(d):
                    dr = means[k, j].real - x[p, j].real
                    di = means[k, j].imag - x[p, j].imag
                    sq += dr * dr + di * di
                logp[k] = log_weights[k] - d * np.log(np.pi * variances[k]) - sq / variances[k]
            m = logp[0]
            for k in range(1, K):
                if logp[k] > m:
                    m = logp[k]
            tot = 0.0
            for k in range(K):
                tot += np.exp(logp[k] - m)
            out[p] = m + np.log(tot)
        return out

    gmm_score_batch = _gmm_score_njit
    gmm_logpdf_batch = _gmm_logpdf_njit
else:
    gmm_score_batch = _gmm_score_numpy
    gmm_logpdf_batch = _gmm_logpdf_numpy
