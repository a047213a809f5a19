"""Measurement model A = P F S: masks, coil maps, forward/adjoint, likelihood gradient.

The 2-D Fourier transform is unitary (norm="ortho" in both directions), so the
adjoint of A is exactly S^H F^{-1} P^H with no hidden scale factors.  All
operators broadcast over leading batch axes: an input of shape
(..., h, w) yields k-space samples of shape (..., coils, n_acquired).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import draw_cn

__all__ = [
    "SamplingMask",
    "CoilMaps",
    "KSpaceData",
    "ForwardOperator",
    "ScaledIdentityOperator",
    "DenseOperator",
    "make_mask",
    "make_coil_maps",
    "likelihood_gradient",
    "simulate_measurement",
]


@dataclass(frozen=True)
class SamplingMask:
    """Boolean acquisition grid over k-space."""

    grid: np.ndarray  # (h, w) bool

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=bool)
        if g.ndim != 2:
            raise ValueError("mask grid must be 2-D")
        if not g.any():
            raise ValueError("mask must acquire at least one location")
        object.__setattr__(self, "grid", g)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def n_acquired(self) -> int:
        return int(self.grid.sum())

    @property
    def acquired_fraction(self) -> float:
        return self.grid.sum() / self.grid.size

    @property
    def locations(self) -> np.ndarray:
        """Flat indices of acquired k-space points (duplicate-free, sorted)."""
        return np.flatnonzero(self.grid.ravel())


@dataclass(frozen=True)
class CoilMaps:
    """Per-coil complex sensitivity maps, normalized so sum_c |S_c|^2 = 1."""

    maps: np.ndarray  # (coils, h, w) complex

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.complex128)
        if m.ndim != 3:
            raise ValueError("coil maps must have shape (coils, h, w)")
        sos = np.sum(np.abs(m) ** 2, axis=0)
        if not np.allclose(sos, 1.0, atol=1e-6):
            raise ValueError("coil maps must have unit sum-of-squares at every pixel")
        object.__setattr__(self, "maps", m)

    @property
    def n_coils(self) -> int:
        return self.maps.shape[0]

    @property
    def image_shape(self):
        return self.maps.shape[1:]


@dataclass(frozen=True)
class KSpaceData:
    """Acquired complex samples, one row per coil, columns follow mask.locations."""

    samples: np.ndarray  # (..., coils, n_acquired) complex
    locations: np.ndarray  # flat indices into the k-space grid
    grid_shape: tuple

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.complex128)
        loc = np.asarray(self.locations, dtype=np.intp)
        if s.shape[-1] != loc.size:
            raise ValueError("sample count does not match number of acquired locations")
        if np.unique(loc).size != loc.size:
            raise ValueError("acquired locations must be duplicate-free")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "locations", loc)

    @property
    def n_coils(self) -> int:
        return self.samples.shape[-2]


class ForwardOperator:
    """A = P F S with unitary F.  Immutable; apply/adjoint are pure."""

    def __init__(self, mask: SamplingMask, coils: CoilMaps):
        if mask.shape != coils.image_shape:
            raise ValueError("mask and coil maps disagree on image shape")
        self.mask = mask
        self.coils = coils
        self.image_shape = coils.image_shape

    def _check_image(self, x):
        if x.shape[-2:] != self.image_shape:
            raise ValueError(
                f"image shape {x.shape[-2:]} does not match operator {self.image_shape}"
            )

    def apply(self, x: np.ndarray) -> KSpaceData:
        """P F S x for each coil; x may carry leading batch axes."""
        x = np.asarray(x, dtype=np.complex128)
        self._check_image(x)
        coil_images = x[..., None, :, :] * self.coils.maps
        k = np.fft.fft2(coil_images, norm="ortho", axes=(-2, -1))
        h, w = self.image_shape
        flat = k.reshape(*k.shape[:-2], h * w)
        samples = flat[..., self.mask.locations]
        return KSpaceData(samples, self.mask.locations, self.image_shape)

    def adjoint(self, y) -> np.ndarray:
        """sum_c conj(S_c) F^{-1} P^H y_c; P^H zero-fills unacquired points."""
        samples = y.samples if isinstance(y, KSpaceData) else np.asarray(y)
        samples = np.asarray(samples, dtype=np.complex128)
        if samples.shape[-2] != self.coils.n_coils:
            raise ValueError("coil count mismatch")
        if samples.shape[-1] != self.mask.n_acquired:
            raise ValueError("sample count does not match mask")
        h, w = self.image_shape
        flat = np.zeros(samples.shape[:-1] + (h * w,), dtype=np.complex128)
        flat[..., self.mask.locations] = samples
        k = flat.reshape(*flat.shape[:-1], h, w)
        coil_images = np.fft.ifft2(k, norm="ortho", axes=(-2, -1))
        return np.sum(np.conj(self.coils.maps) * coil_images, axis=-3)

    def gram(self, x: np.ndarray) -> np.ndarray:
        """A^H A x."""
        return self.adjoint(self.apply(x))


class ScaledIdentityOperator:
    """y = alpha * x on flat complex vectors; used by the scalar/toy problems."""

    def __init__(self, dim: int, alpha: complex = 1.0):
        self.dim = int(dim)
        self.alpha = complex(alpha)

    def apply(self, x):
        return self.alpha * np.asarray(x, dtype=np.complex128)

    def adjoint(self, y):
        return np.conj(self.alpha) * np.asarray(y, dtype=np.complex128)

    def gram(self, x):
        return (abs(self.alpha) ** 2) * np.asarray(x, dtype=np.complex128)

    def as_matrix(self):
        return self.alpha * np.eye(self.dim, dtype=np.complex128)


class DenseOperator:
    """Explicit complex matrix acting on flat vectors (last axis)."""

    def __init__(self, matrix: np.ndarray):
        a = np.asarray(matrix, dtype=np.complex128)
        if a.ndim != 2:
            raise ValueError("operator matrix must be 2-D")
        self.matrix = a

    def apply(self, x):
        return np.asarray(x, dtype=np.complex128) @ self.matrix.T

    def adjoint(self, y):
        return np.asarray(y, dtype=np.complex128) @ np.conj(self.matrix)

    def gram(self, x):
        return self.adjoint(self.apply(x))

    def as_matrix(self):
        return self.matrix


def likelihood_gradient(op, x, y, sigma_eta_sq: float):
    """Gradient of log p(y|x) = -||y - A x||^2 / sigma_eta^2 with respect to x.

    Uses the Wirtinger convention (half d/dRe + i half d/dIm), under which the
    gradient is -(A^H A x - A^H y) / sigma_eta^2.
    """
    if not sigma_eta_sq > 0:
        raise ValueError("sigma_eta_sq must be positive")
    return -(op.gram(x) - op.adjoint(y)) / sigma_eta_sq


def simulate_measurement(op, x, noise_sd: float, rng) -> KSpaceData:
    """A x plus CN(0, noise_sd^2) per complex sample; noise_sd = 0 is exact."""
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    clean = op.apply(x)
    if isinstance(clean, KSpaceData):
        samples = clean.samples
        if noise_sd > 0:
            samples = samples + draw_cn(rng, samples.shape, noise_sd**2)
        return KSpaceData(samples, clean.locations, clean.grid_shape)
    if noise_sd > 0:
        clean = clean + draw_cn(rng, clean.shape, noise_sd**2)
    return clean


# ---------------------------------------------------------------------------
# Mask and coil-map construction
# ---------------------------------------------------------------------------


def make_mask(kind: str, shape, **params) -> SamplingMask:
    """Build an undersampling mask.

    kinds:
      skip-odd-even        keep every second phase-encode line (rows 0, 2, ...)
      uniform-random       each line kept independently with probability p
      variable-density-random
                           fully-sampled center block plus random outer points
                           with radially decaying density hitting an exact
                           target fraction
    """
    h, w = shape
    if kind == "skip-odd-even":
        grid = np.zeros((h, w), dtype=bool)
        grid[0::2, :] = True
        return SamplingMask(grid)

    if kind == "uniform-random":
        p = float(params.get("p", 0.5))
        if not 0 < p <= 1:
            raise ValueError("p must lie in (0, 1]")
        rng = np.random.default_rng(params.get("seed", 0))
        lines = rng.random(h) < p
        if p == 1.0:
            lines[:] = True
        if not lines.any():
            lines[rng.integers(h)] = True
        grid = np.zeros((h, w), dtype=bool)
        grid[lines, :] = True
        return SamplingMask(grid)

    if kind == "variable-density-random":
        frac = float(params.get("fraction", 0.2))
        center = int(params.get("center", 20))
        exponent = float(params.get("exponent", 2.0))
        seed = params.get("seed", 0)
        if not 0 < frac <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if center > min(h, w):
            raise ValueError("center block larger than grid")
        grid = np.zeros((h, w), dtype=bool)
        r0, c0 = (h - center) // 2, (w - center) // 2
        grid[r0 : r0 + center, c0 : c0 + center] = True
        target = int(round(frac * h * w))
        n_center = int(grid.sum())
        n_outer = max(target - n_center, 0)
        if n_outer > 0:
            rows, cols = np.mgrid[0:h, 0:w]
            rad = np.hypot((rows - h / 2) / (h / 2), (cols - w / 2) / (w / 2))
            weights = (1.0 + rad) ** (-exponent)
            weights[grid] = 0.0
            outer = np.flatnonzero(~grid.ravel())
            wts = weights.ravel()[outer]
            wts = wts / wts.sum()
            rng = np.random.default_rng(seed)
            chosen = rng.choice(outer, size=min(n_outer, outer.size), replace=False, p=wts)
            grid.ravel()[chosen] = True
        return SamplingMask(grid)

    raise ValueError(f"unknown mask kind: {kind}")


def make_coil_maps(n_coils: int, shape, phase_ramp: float = 0.5) -> CoilMaps:
    """Synthetic smooth coil sensitivities.

    Raised-cosine magnitude lobes centered at equispaced boundary points with a
    gentle per-coil linear phase, normalized to unit sum-of-squares per pixel.
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    h, w = shape
    rows, cols = np.mgrid[0:h, 0:w]
    ry = (rows - (h - 1) / 2) / max(h / 2, 1)
    rx = (cols - (w - 1) / 2) / max(w / 2, 1)
    maps = np.empty((n_coils, h, w), dtype=np.complex128)
    for c in range(n_coils):
        theta = 2 * np.pi * c / n_coils
        cy, cx = np.sin(theta), np.cos(theta)
        d = np.hypot(ry - cy, rx - cx)
        mag = 0.1 + 0.5 * (1 + np.cos(np.pi * np.clip(d / 2.5, 0, 1)))
        phase = phase_ramp * (cy * ry + cx * rx)
        maps[c] = mag * np.exp(1j * phase)
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    maps = maps / sos
    return CoilMaps(maps)
