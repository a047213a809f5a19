"""Annealed Langevin MCMC over the posterior-modified reverse process.

The update at target scale i (using the step variance tau_{i+1}^2 and the
score conditioned on i) is

    x <- x + (gamma / (2 tau_{i+1}^2)) (sigma_{i+1}^2 - sigma_i^2) s(x, i)
           - (gamma / (2 sigma_eta^2)) (A^H A x - A^H y) + sqrt(gamma) z

with gamma = 2 tau_{i+1}^2, sigma_eta^2 = tau_{i+1}^p / lambda (p = 1 or 2,
config-selected) and z ~ CN(0, I), or z = 0 in deterministic (MAP) mode.
Chains are vectorized over a leading axis; each chain owns an independent
RNG stream keyed by (seed, phase, chain_id) so results do not depend on
scheduling.  Within the batched runners every chain draws its noise in
per-scale blocks of K steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import NoiseSchedule, SamplerConfig, chain_rng, draw_cn
from .forward_model import KSpaceData

__all__ = [
    "DivergenceError",
    "ChainState",
    "PosteriorRun",
    "SamplingResult",
    "langevin_step",
    "run_posterior_sampling",
    "run_with_burn_in",
    "run_map",
]

_NORM_GUARD = 1e6

# rng stream phases; split chains must never collide with pre-split ones
PHASE_CHAINS = 0
PHASE_BURN_IN = 1
PHASE_SPLIT = 2


class DivergenceError(RuntimeError):
    """Raised when a chain's norm explodes (mis-tuned lambda, usually)."""

    def __init__(self, scale: int, step: int, norm: float):
        super().__init__(
            f"chain diverged at scale {scale}, step {step} (|x| = {norm:.3e})"
        )
        self.scale = scale
        self.step = step


@dataclass
class ChainState:
    """One chain's current sample, target scale index and step counter."""

    x: np.ndarray
    i: int
    k: int = 0
    chain_id: int = 0
    rng: Optional[np.random.Generator] = None
    trace: list = field(default_factory=list)


@dataclass
class PosteriorRun:
    """Shared inputs of a posterior-sampling run.

    ``operator``/``y`` may both be None for a prior-only annealed run.
    ``reference`` (magnitude ground truth) enables PSNR/SSIM trace columns.
    """

    config: SamplerConfig
    schedule: NoiseSchedule
    prior: object
    operator: object = None
    y: object = None
    event_shape: tuple = ()
    reference: Optional[np.ndarray] = None

    def __post_init__(self):
        self.config.validate_against(self.schedule)
        if (self.operator is None) != (self.y is None):
            raise ValueError("operator and y must be provided together")
        if not self.event_shape:
            raise ValueError("event_shape must be set")
        self._adjoint_y = None
        if self.operator is not None:
            raw = self.y.samples if isinstance(self.y, KSpaceData) else self.y
            self._adjoint_y = self.operator.adjoint(raw if not isinstance(self.y, KSpaceData) else self.y)

    def adjoint_y(self):
        return self._adjoint_y


def _step_coefficients(run: PosteriorRun, i: int):
    """(score coefficient, likelihood coefficient, gamma) at target scale i."""
    sched = run.schedule
    tau_sq = sched.tau_sq(i + 1)
    gamma = 2.0 * tau_sq
    coef_score = sched.sigma(i + 1) ** 2 - sched.sigma(i) ** 2
    coef_like = 0.0
    if run.operator is not None:
        tau = np.sqrt(tau_sq)
        sigma_eta_sq = tau ** run.config.likelihood_variance_power / run.config.lam
        coef_like = gamma / (2.0 * sigma_eta_sq)
    return coef_score, coef_like, gamma


def _update(x, i, run: PosteriorRun, z):
    """Core batched Langevin update; z is CN(0, I)-shaped like x (or 0)."""
    coef_score, coef_like, gamma = _step_coefficients(run, i)
    step = coef_score * run.prior.score(x, i, run.schedule)
    if coef_like != 0.0:
        step = step + coef_like * (run.adjoint_y() - run.operator.gram(x))
    x_new = x + step + np.sqrt(gamma) * z
    norm = np.max(np.sqrt(np.sum(np.abs(x_new) ** 2, axis=tuple(range(1, x_new.ndim)))))
    if not np.isfinite(norm) or norm > _NORM_GUARD:
        raise DivergenceError(i, -1, float(norm))
    return x_new, step


def langevin_step(state: ChainState, run: PosteriorRun) -> ChainState:
    """Single-chain step at target scale state.i; draws its own noise."""
    if not 1 <= state.i + 1 <= run.schedule.n_scales:
        raise IndexError(f"target scale {state.i} has no step variance tau_{state.i + 1}")
    if run.config.deterministic:
        z = 0.0
    else:
        z = draw_cn(state.rng, state.x.shape)
    x_batched = state.x[None, ...]
    z_batched = z[None, ...] if isinstance(z, np.ndarray) else z
    try:
        x_new, _ = _update(x_batched, state.i, run, z_batched)
    except DivergenceError as err:
        raise DivergenceError(state.i, state.k, float("inf")) from err
    return replace(state, x=x_new[0], k=state.k + 1)


@dataclass
class SamplingResult:
    samples: np.ndarray  # (n_chains, *event_shape), final sample per chain
    retained: Optional[np.ndarray]  # (n_chains, n_retained, *event_shape)
    trace: list  # per-step dict rows (scale, step, update_norm[, psnr, ssim])
    wall_time: float


def _trace_row(i, k, step_arr, x, run):
    row = {
        "scale": i,
        "step": k,
        "update_norm": float(np.sqrt(np.mean(np.abs(step_arr) ** 2))),
    }
    if run.reference is not None:
        from .estimators import psnr, ssim

        mean_mag = np.abs(x).mean(axis=0)
        row["psnr"] = psnr(mean_mag, run.reference)
        row["ssim"] = ssim(mean_mag, run.reference)
    return row


def _anneal(x, run, rngs, scales, retain_final=0, trace=False, trace_rows=None):
    """Run K Langevin steps per scale over ``scales`` (descending targets)."""
    cfg = run.config
    deterministic = cfg.deterministic
    retained = []
    n_chains = x.shape[0]
    event = x.shape[1:]
    last_scale = scales[-1] if len(scales) else None
    for i in scales:
        if deterministic:
            z_block = None
        else:
            # one block draw per chain per scale keeps chains stream-independent
            z_block = np.empty((n_chains, cfg.k_steps) + event, dtype=np.complex128)
            for c, rng in enumerate(rngs):
                raw = rng.standard_normal((cfg.k_steps,) + event + (2,))
                z_block[c] = (raw[..., 0] + 1j * raw[..., 1]) / np.sqrt(2.0)
        for k in range(cfg.k_steps):
            z = 0.0 if deterministic else z_block[:, k]
            x, step_arr = _update(x, i, run, z)
            if trace:
                trace_rows.append(_trace_row(i, k, step_arr, x, run))
            if retain_final and i == last_scale and k >= cfg.k_steps - retain_final:
                retained.append(x.copy())
    return x, retained


def _initial_draw(rngs, event_shape):
    """x_{N_start} ~ CN(0, I), one draw per chain."""
    x = np.empty((len(rngs),) + event_shape, dtype=np.complex128)
    for c, rng in enumerate(rngs):
        x[c] = draw_cn(rng, event_shape)
    return x


def run_posterior_sampling(
    run: PosteriorRun,
    retain_final: int = 0,
    trace: bool = False,
    initial_x: Optional[np.ndarray] = None,
    rng_phase: int = PHASE_CHAINS,
) -> SamplingResult:
    """Anneal all chains from scale N_start-1 down to 1.

    ``retain_final`` additionally returns the last ``retain_final`` iterates
    of every chain at the final scale.
    """
    cfg = run.config
    t0 = time.perf_counter()
    rngs = [chain_rng(cfg.seed, c, rng_phase) for c in range(cfg.n_chains)]
    if initial_x is None:
        x = _initial_draw(rngs, run.event_shape)
    else:
        x = np.array(initial_x, dtype=np.complex128)
        if x.shape != (cfg.n_chains,) + run.event_shape:
            raise ValueError("initial_x has wrong shape")
    scales = list(range(cfg.n_start - 1, 0, -1))
    rows = []
    x, retained = _anneal(
        x, run, rngs, scales, retain_final=retain_final, trace=trace, trace_rows=rows
    )
    retained_arr = (
        np.stack(retained, axis=1) if retained else None
    )
    return SamplingResult(x, retained_arr, rows, time.perf_counter() - t0)


def run_with_burn_in(
    run: PosteriorRun,
    split_index: Optional[int] = None,
    retain_final: int = 0,
    trace: bool = False,
) -> SamplingResult:
    """One chain through the coarse scales, then fork into n_chains.

    The single burn-in chain covers target scales N_start-1 .. split_index+1;
    its state is then replicated into n_chains chains with fresh RNG streams
    which anneal the remaining scales split_index .. 1 independently.
    """
    cfg = run.config
    split = cfg.split_index if split_index is None else split_index
    if not 0 <= split < cfg.n_start:
        raise ValueError("split_index must lie in [0, n_start)")
    t0 = time.perf_counter()
    rows = []

    burn_rng = [chain_rng(cfg.seed, 0, PHASE_BURN_IN)]
    x = _initial_draw(burn_rng, run.event_shape)
    burn_scales = list(range(cfg.n_start - 1, split, -1))
    x, _ = _anneal(x, run, burn_rng, burn_scales, trace=trace, trace_rows=rows)

    x = np.repeat(x, cfg.n_chains, axis=0)
    rngs = [chain_rng(cfg.seed, c, PHASE_SPLIT) for c in range(cfg.n_chains)]
    tail_scales = list(range(split, 0, -1))
    x, retained = _anneal(
        x, run, rngs, tail_scales, retain_final=retain_final, trace=trace, trace_rows=rows
    )
    retained_arr = np.stack(retained, axis=1) if retained else None
    return SamplingResult(x, retained_arr, rows, time.perf_counter() - t0)


def run_map(run: PosteriorRun, extended_iters: int = 0):
    """Deterministic annealed descent to the posterior mode.

    Runs the schedule noise-free with a single chain, then ``extended_iters``
    additional noise-free steps at the final scale.  Returns the final x and
    the trace of update-step norms.
    """
    if not run.config.deterministic:
        raise ValueError("run_map requires config.deterministic")
    if extended_iters < 0:
        raise ValueError("extended_iters must be >= 0")
    cfg = run.config
    rngs = [chain_rng(cfg.seed, 0, PHASE_CHAINS)]
    x = _initial_draw(rngs, run.event_shape)
    norms = []
    scales = list(range(cfg.n_start - 1, 0, -1))
    for i in scales:
        for _ in range(cfg.k_steps):
            x, step_arr = _update(x, i, run, 0.0)
            norms.append(float(np.sqrt(np.sum(np.abs(step_arr) ** 2))))
    for _ in range(extended_iters):
        x, step_arr = _update(x, 1, run, 0.0)
        norms.append(float(np.sqrt(np.sum(np.abs(step_arr) ** 2))))
    return x[0], norms
