"""Independent brute-force references for the acceptance tests.

None of these share numerical kernels with the modules they check: the DFT is
a direct summation, densities are evaluated through caller-supplied
callables, and the KL estimate is plain Monte Carlo.  Inputs are restricted
to desk-scale sizes and refused loudly beyond that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GridDensity", "grid_posterior_2d", "naive_dft", "mc_kl"]


@dataclass(frozen=True)
class GridDensity:
    """Normalized density tabulated on a regular 2-D grid."""

    xs: np.ndarray  # (nx,) cell centers
    ys: np.ndarray  # (ny,)
    density: np.ndarray  # (nx, ny), sums to 1/cell_area
    cell_area: float

    def __post_init__(self):
        total = float(self.density.sum() * self.cell_area)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"density not normalized (integral {total})")

    def cell_probabilities(self) -> np.ndarray:
        return self.density * self.cell_area

    def moments(self):
        """Mean vector and per-axis variances under the grid density."""
        p = self.cell_probabilities()
        mx = float(np.sum(p * self.xs[:, None]))
        my = float(np.sum(p * self.ys[None, :]))
        vx = float(np.sum(p * (self.xs[:, None] - mx) ** 2))
        vy = float(np.sum(p * (self.ys[None, :] - my) ** 2))
        return np.array([mx, my]), np.array([vx, vy])


def grid_posterior_2d(log_prior_fn, log_likelihood_fn, xs, ys) -> GridDensity:
    """Pointwise product of prior and likelihood, normalized numerically.

    log_prior_fn / log_likelihood_fn take arrays (nx, ny, 2) of grid points.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size > 1024 or ys.size > 1024:
        raise ValueError("grid too large for the desk-scale oracle")
    pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    logp = np.asarray(log_prior_fn(pts)) + np.asarray(log_likelihood_fn(pts))
    logp -= logp.max()
    dens = np.exp(logp)
    cell = float((xs[1] - xs[0]) * (ys[1] - ys[0]))
    total = dens.sum() * cell
    if total == 0:
        raise ValueError("prior x likelihood product vanishes on the whole grid")
    return GridDensity(xs, ys, dens / total, cell)


def naive_dft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Direct-summation unitary 2-D DFT; O(n^4), images up to 16x16 only."""
    x = np.asarray(x, dtype=np.complex128)
    h, w = x.shape
    if h > 16 or w > 16:
        raise ValueError("naive_dft refuses images larger than 16x16")
    sign = 1.0 if inverse else -1.0
    out = np.zeros((h, w), dtype=np.complex128)
    for ku in range(h):
        for kv in range(w):
            acc = 0.0 + 0.0j
            for u in range(h):
                for v in range(w):
                    phase = sign * 2.0 * np.pi * (ku * u / h + kv * v / w)
                    acc += x[u, v] * np.exp(1j * phase)
            out[ku, kv] = acc
    return out / np.sqrt(h * w)


def mc_kl(sampler_fn, log_p_fn, log_q_fn, n_draws: int):
    """Monte Carlo estimate of KL(p||q) = E_p[log p - log q] with its stderr."""
    if n_draws < 10_000:
        raise ValueError("use at least 1e4 draws for a meaningful estimate")
    x = sampler_fn(n_draws)
    diffs = np.asarray(log_p_fn(x)) - np.asarray(log_q_fn(x))
    est = float(diffs.mean())
    stderr = float(diffs.std(ddof=1) / np.sqrt(n_draws))
    return est, stderr
