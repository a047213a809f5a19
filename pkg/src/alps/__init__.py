"""Annealed Langevin posterior sampling for linear-Gaussian image reconstruction.

Draws samples from p(x|y) for undersampled Fourier measurements by running
annealed Langevin MCMC over a diffusion prior, and turns the samples into
MMSE images, MAP estimates and pixelwise uncertainty maps.
"""

__version__ = "0.1.0"

from .domain import NoiseSchedule, SamplerConfig, chain_rng, draw_cn, geometric_schedule
from .estimators import (
    SampleSet,
    UncertaintyMap,
    forward_posterior_params,
    kl_gaussians,
    mmse,
    psnr,
    ssim,
    variance_map,
)
from .forward_model import (
    CoilMaps,
    ForwardOperator,
    KSpaceData,
    SamplingMask,
    ScaledIdentityOperator,
    likelihood_gradient,
    make_coil_maps,
    make_mask,
    simulate_measurement,
)
from .priors import GaussianPrior, GmmPrior, ScorePrior, gmm_exact_posterior
from .sampler import (
    ChainState,
    DivergenceError,
    PosteriorRun,
    langevin_step,
    run_map,
    run_posterior_sampling,
    run_with_burn_in,
)
from .training import ScoreNet, ScoreNetPrior, TrainConfig, dsm_loss, param_gradient_check, train
