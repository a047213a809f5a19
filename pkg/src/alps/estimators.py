"""Turn retained posterior samples into MMSE images, uncertainty maps and metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

__all__ = [
    "SampleSet",
    "UncertaintyMap",
    "mmse",
    "variance_map",
    "psnr",
    "ssim",
    "kl_gaussians",
    "forward_posterior_params",
]


@dataclass(frozen=True)
class SampleSet:
    """Samples from the final annealing scale, stacked on axis 0."""

    samples: np.ndarray  # (count, *event_shape) complex
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        if s.ndim < 1 or s.shape[0] < 1:
            raise ValueError("need at least one sample")
        object.__setattr__(self, "samples", s)

    @property
    def count(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class UncertaintyMap:
    """Pixelwise magnitude mean, sample variance and 95% CI half-width."""

    mean_magnitude: np.ndarray
    variance: np.ndarray  # unbiased variance of magnitudes
    ci_half_width: np.ndarray  # 1.96 * sqrt(variance / count)
    complex_variance: np.ndarray  # E|x - mean|^2 in complex space
    count: int


def mmse(sample_set: SampleSet) -> np.ndarray:
    """Elementwise complex mean of the samples (posterior-mean estimate)."""
    return sample_set.samples.mean(axis=0)


def variance_map(sample_set: SampleSet) -> UncertaintyMap:
    """Pixelwise uncertainty of the sample set (needs at least two samples)."""
    n = sample_set.count
    if n < 2:
        raise ValueError("variance map needs at least two samples")
    mags = np.abs(sample_set.samples)
    var = mags.var(axis=0, ddof=1)
    mean_c = sample_set.samples.mean(axis=0)
    cvar = np.mean(np.abs(sample_set.samples - mean_c) ** 2, axis=0) * n / (n - 1)
    return UncertaintyMap(
        mean_magnitude=mags.mean(axis=0),
        variance=var,
        ci_half_width=1.96 * np.sqrt(var / n),
        complex_variance=cvar,
        count=n,
    )


def _normalized_magnitudes(x, ref):
    x = np.abs(np.asarray(x, dtype=np.complex128))
    ref = np.abs(np.asarray(ref, dtype=np.complex128))
    if x.shape != ref.shape:
        raise ValueError("shape mismatch")
    nx, nr = np.linalg.norm(x), np.linalg.norm(ref)
    if nx > 0:
        x = x / nx
    if nr > 0:
        ref = ref / nr
    return x, ref


def psnr(x, ref, data_range: float | None = None) -> float:
    """10 log10(range^2 / MSE) on l2-normalized magnitudes.

    data_range=None uses the per-slice maximum of the normalized reference;
    a float fixes the range.  Identical inputs yield +inf.
    """
    xm, rm = _normalized_magnitudes(x, ref)
    mse = np.mean((xm - rm) ** 2)
    if mse == 0:
        return math.inf
    rng = float(rm.max()) if data_range is None else float(data_range)
    return 10.0 * math.log10(rng * rng / mse)


def ssim(x, ref, data_range: float | None = None, window: int = 7) -> float:
    """Mean local SSIM with a uniform window, K1 = 0.01, K2 = 0.03.

    Window statistics use a ``window x window`` moving average; the mean is
    taken over the interior where the window fits entirely.
    """
    xm, rm = _normalized_magnitudes(x, ref)
    if min(xm.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} SSIM window")
    rng = float(rm.max()) if data_range is None else float(data_range)
    c1 = (0.01 * rng) ** 2
    c2 = (0.03 * rng) ** 2
    mu_x = uniform_filter(xm, window)
    mu_r = uniform_filter(rm, window)
    xx = uniform_filter(xm * xm, window) - mu_x * mu_x
    rr = uniform_filter(rm * rm, window) - mu_r * mu_r
    xr = uniform_filter(xm * rm, window) - mu_x * mu_r
    ssim_map = ((2 * mu_x * mu_r + c1) * (2 * xr + c2)) / (
        (mu_x**2 + mu_r**2 + c1) * (xx + rr + c2)
    )
    half = window // 2
    interior = ssim_map[half:-half or None, half:-half or None]
    return float(interior.mean())


def kl_gaussians(mu1, sigma1: float, mu2, sigma2: float, n_complex: int) -> float:
    """KL( CN(mu1, sigma1^2 I) || CN(mu2, sigma2^2 I) ) over n_complex entries.

    Closed form: n_complex * (2 log(sigma2/sigma1) + sigma1^2/sigma2^2 - 1)
                 + ||mu1 - mu2||^2 / sigma2^2.
    """
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError("sigmas must be positive")
    mu1 = np.asarray(mu1, dtype=np.complex128)
    mu2 = np.asarray(mu2, dtype=np.complex128)
    if mu1.size != n_complex or mu2.size != n_complex:
        raise ValueError("mean length must equal n_complex")
    ratio = sigma1 * sigma1 / (sigma2 * sigma2)
    shift = float(np.sum(np.abs(mu1 - mu2) ** 2)) / (sigma2 * sigma2)
    return n_complex * (2.0 * math.log(sigma2 / sigma1) + ratio - 1.0) + shift


def forward_posterior_params(schedule, i: int, x_i, x_0):
    """Mean and variance of the single-step forward posterior q(x_{i-1}|x_i, x_0).

    mean = (sigma_{i-1}^2/sigma_i^2) x_i + (1 - sigma_{i-1}^2/sigma_i^2) x_0,
    variance = tau_i^2.
    """
    if not 1 <= i <= schedule.n_scales:
        raise IndexError(f"step index {i} outside [1, {schedule.n_scales}]")
    w = schedule.sigma(i - 1) ** 2 / schedule.sigma(i) ** 2
    mean = w * np.asarray(x_i) + (1.0 - w) * np.asarray(x_0)
    return mean, schedule.tau_sq(i)
