"""Desk-scale experiment driver and command-line interface.

Subcommands:
  run <config>            run one experiment described by a flat INI config
  train <config>          train a toy score net and write a checkpoint
  phantom <kind> <size> <out>
                          write a synthetic complex phantom (.npy)
  metrics <a> <b>         print PSNR/SSIM between two array files

Array files are .npy (self-describing: magic, dtype, shape, little-endian
payload); magnitude images can additionally be exported as lossless 16-bit
grayscale PNG.  Exit codes: 0 success, 2 config error, 3 numeric divergence,
4 I/O failure.  The environment variable ALPS_OUTPUT_ROOT overrides the
output directory root.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .domain import NoiseSchedule, SamplerConfig, geometric_schedule
from .estimators import SampleSet, mmse, psnr, ssim, variance_map
from .forward_model import (
    ForwardOperator,
    ScaledIdentityOperator,
    make_coil_maps,
    make_mask,
    simulate_measurement,
)
from .priors import GaussianPrior, GmmPrior, gmm_exact_posterior, load_gmm_config
from .sampler import (
    DivergenceError,
    PosteriorRun,
    run_map,
    run_posterior_sampling,
    run_with_burn_in,
)
from .training import (
    ScoreNet,
    ScoreNetPrior,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Phantom and file helpers
# ---------------------------------------------------------------------------


def make_phantom(kind: str, size: int) -> np.ndarray:
    """Deterministic synthetic complex phantom, max magnitude exactly 1.

    "ellipses": composite of a few soft-edged ellipses with a smooth phase
    ramp.  "disc": a single centered disc (useful for the unfolding toys).
    """
    if size < 16:
        raise ConfigError("phantom size must be >= 16")
    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx - size / 2) / (size / 2)
    v = (yy - size / 2) / (size / 2)

    def ellipse(cx, cy, ax, ay, amp, tilt=0.0):
        ur = np.cos(tilt) * (u - cx) + np.sin(tilt) * (v - cy)
        vr = -np.sin(tilt) * (u - cx) + np.cos(tilt) * (v - cy)
        r = (ur / ax) ** 2 + (vr / ay) ** 2
        # clip the logit so exp never overflows far outside the ellipse
        return amp / (1.0 + np.exp(np.clip((r - 1.0) * 25.0, -50.0, 50.0)))

    if kind == "ellipses":
        mag = (
            ellipse(0, 0, 0.8, 0.65, 1.0)
            + ellipse(-0.25, -0.1, 0.25, 0.35, -0.45, 0.4)
            + ellipse(0.3, 0.05, 0.2, 0.3, -0.4, -0.3)
            + ellipse(0.0, 0.45, 0.25, 0.12, 0.35)
            + ellipse(0.0, -0.35, 0.1, 0.1, 0.5)
        )
    elif kind == "disc":
        mag = ellipse(0, -0.3, 0.45, 0.3, 1.0)
    else:
        raise ConfigError(f"unknown phantom kind: {kind}")
    mag = np.clip(mag, 0.0, None)
    phase = 0.6 * u + 0.4 * v + 0.3 * np.sin(2 * np.pi * u) * np.cos(np.pi * v)
    img = mag * np.exp(1j * phase)
    peak = np.abs(img).max()
    return img / peak


def save_array(path, arr):
    np.save(path, np.asarray(arr))


def load_array(path):
    return np.load(path)


def save_magnitude_png(path, magnitude):
    """Lossless 16-bit grayscale export of a nonnegative magnitude image."""
    from PIL import Image

    m = np.asarray(magnitude, dtype=np.float64)
    peak = m.max() if m.max() > 0 else 1.0
    scaled = np.round(m / peak * 65535.0).astype(np.uint16)
    Image.fromarray(scaled).save(path)


def save_ci_overlay_png(path, mean_magnitude, ci_half_width, percentile: float = 90.0):
    """8-bit overlay: grayscale mean with high-uncertainty pixels in red."""
    from PIL import Image

    m = np.asarray(mean_magnitude, dtype=np.float64)
    peak = m.max() if m.max() > 0 else 1.0
    gray = np.round(m / peak * 255.0).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1)
    thresh = np.percentile(ci_half_width, percentile)
    hot = ci_half_width > thresh
    rgb[hot] = [255, 32, 32]
    Image.fromarray(rgb, mode="RGB").save(path)


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return cp


def _schedule_from(cp) -> NoiseSchedule:
    s = cp["schedule"]
    return geometric_schedule(
        s.getfloat("sigma_min"), s.getfloat("sigma_max"), s.getint("n_scales")
    )


def _sampler_config_from(cp, schedule) -> SamplerConfig:
    s = cp["sampler"]
    cfg = SamplerConfig(
        k_steps=s.getint("k_steps"),
        lam=s.getfloat("lambda"),
        n_start=s.getint("n_start", schedule.n_scales),
        n_chains=s.getint("chains", 1),
        split_index=s.getint("split_index", 0),
        deterministic=s.getboolean("deterministic", False),
        seed=s.getint("seed", 0),
        likelihood_variance_power=s.getint("likelihood_variance_power", 1),
    )
    cfg.validate_against(schedule)
    return cfg


def _image_from(cp) -> np.ndarray:
    sec = cp["image"]
    source = sec.get("source", "phantom")
    if source == "phantom":
        return make_phantom(sec.get("kind", "ellipses"), sec.getint("size", 64))
    arr = load_array(source)
    if arr.ndim != 2:
        raise ConfigError("image file must hold a 2-D array")
    return np.asarray(arr, dtype=np.complex128)


def _prior_from(cp, schedule, image_shape):
    sec = cp["prior"]
    kind = sec.get("type", "gaussian")
    if kind == "gaussian":
        variance = sec.getfloat("variance", 1.0)
        mean_src = sec.get("mean", "zero")
        if mean_src == "zero":
            mean = np.zeros(image_shape, dtype=np.complex128)
        else:
            mean = np.asarray(load_array(mean_src), dtype=np.complex128)
        return GaussianPrior(mean, variance)
    if kind == "gmm":
        return load_gmm_config(sec)
    if kind == "checkpoint":
        net = load_checkpoint(sec.get("path"), schedule)
        return ScoreNetPrior(net)
    raise ConfigError(f"unknown prior type: {kind}")


def _output_dir(cp, config_path) -> Path:
    out = cp["experiment"].get("output", "out")
    root = os.environ.get("ALPS_OUTPUT_ROOT")
    base = Path(root) / out if root else Path(out)
    base.mkdir(parents=True, exist_ok=True)
    return base


def _write_manifest(outdir: Path, config_path, seed, artifacts):
    text = Path(config_path).read_bytes()
    manifest = {
        "config_sha256": hashlib.sha256(text).hexdigest(),
        "seed": int(seed),
        "alps_version": __version__,
        "numpy_version": np.__version__,
        "artifacts": sorted(artifacts),
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _write_metrics(outdir: Path, samples, mmse_img, reference):
    rows = []
    for j, s in enumerate(samples):
        rows.append((f"sample_{j}", psnr(np.abs(s), reference), ssim(np.abs(s), reference)))
    rows.append(("mmse", psnr(np.abs(mmse_img), reference), ssim(np.abs(mmse_img), reference)))
    with open(outdir / "metrics.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sample", "psnr_db", "ssim"])
        for name, p, s in rows:
            wr.writerow([name, f"{p:.6f}", f"{s:.6f}"])


def _write_trace(outdir: Path, trace_rows):
    if not trace_rows:
        return
    cols = list(trace_rows[0].keys())
    with open(outdir / "trace.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for row in trace_rows:
            wr.writerow([row[c] for c in cols])


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _imaging_experiment(cp, config_path, kind):
    schedule = _schedule_from(cp)
    config = _sampler_config_from(cp, schedule)
    outdir = _output_dir(cp, config_path)
    image = _image_from(cp)
    h, w = image.shape

    msec = cp["mask"]
    mask = make_mask(
        msec.get("kind", "variable-density-random"),
        (h, w),
        p=msec.getfloat("p", 0.5),
        fraction=msec.getfloat("fraction", 0.2),
        center=msec.getint("center", min(20, h)),
        exponent=msec.getfloat("exponent", 2.0),
        seed=msec.getint("seed", 0),
    )
    n_coils = cp["coils"].getint("count", 1) if cp.has_section("coils") else 1
    coils = make_coil_maps(n_coils, (h, w))
    op = ForwardOperator(mask, coils)
    noise_sd = cp["experiment"].getfloat("noise_sd", 0.0)
    rng = np.random.default_rng([config.seed, 999])
    y = simulate_measurement(op, image, noise_sd, rng)

    prior = _prior_from(cp, schedule, image.shape)
    run = PosteriorRun(
        config=config,
        schedule=schedule,
        prior=prior,
        operator=op,
        y=y,
        event_shape=image.shape,
        reference=np.abs(image),
    )

    artifacts = []
    if kind == "map":
        det_cfg = config if config.deterministic else None
        if det_cfg is None:
            raise ConfigError("map experiment requires sampler.deterministic = true")
        extended = cp["experiment"].getint("extended_iters", 200)
        x_map, norms = run_map(run, extended)
        save_array(outdir / "map.npy", x_map)
        artifacts.append("map.npy")
        with open(outdir / "trace.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["step", "update_norm"])
            for j, nval in enumerate(norms):
                wr.writerow([j, f"{nval:.9e}"])
        artifacts.append("trace.csv")
        _write_metrics(outdir, [x_map], x_map, np.abs(image))
        artifacts.append("metrics.csv")
    else:
        if kind == "burn-in" or config.split_index > 0:
            result = run_with_burn_in(run, trace=True)
        else:
            result = run_posterior_sampling(run, trace=True)
        sample_set = SampleSet(result.samples, seed=config.seed)
        x_mmse = mmse(sample_set)
        umap = variance_map(sample_set) if sample_set.count >= 2 else None
        save_array(outdir / "samples.npy", result.samples)
        save_array(outdir / "mmse.npy", x_mmse)
        artifacts += ["samples.npy", "mmse.npy"]
        save_magnitude_png(outdir / "mmse.png", np.abs(x_mmse))
        artifacts.append("mmse.png")
        if umap is not None:
            save_array(outdir / "variance.npy", umap.variance)
            artifacts.append("variance.npy")
            pct = cp["experiment"].getfloat("ci_percentile", 90.0)
            save_ci_overlay_png(
                outdir / "ci_overlay.png", umap.mean_magnitude, umap.ci_half_width, pct
            )
            artifacts.append("ci_overlay.png")
        _write_metrics(outdir, result.samples, x_mmse, np.abs(image))
        artifacts.append("metrics.csv")
        _write_trace(outdir, result.trace)
        if result.trace:
            artifacts.append("trace.csv")

    _write_manifest(outdir, config_path, config.seed, artifacts)
    return EXIT_OK


def _toy_gmm_experiment(cp, config_path):
    schedule = _schedule_from(cp)
    config = _sampler_config_from(cp, schedule)
    outdir = _output_dir(cp, config_path)
    prior = load_gmm_config(cp["prior"])
    if prior.dim != 1:
        raise ConfigError("toy-gmm experiment expects 2-D points (one complex entry)")
    obs = cp["observation"]
    y = np.array([complex(obs.getfloat("re"), obs.getfloat("im"))])
    noise_var = obs.getfloat("noise_var", 1.0)
    op = ScaledIdentityOperator(1)
    # lambda chosen so the final-step likelihood variance matches noise_var:
    # sigma_eta^2 = tau_2 / lambda = noise_var.
    run = PosteriorRun(
        config=config,
        schedule=schedule,
        prior=prior,
        operator=op,
        y=y,
        event_shape=(1,),
    )
    result = run_posterior_sampling(run)
    pts = np.column_stack([result.samples[:, 0].real, result.samples[:, 0].imag])
    save_array(outdir / "samples.npy", pts)

    posterior = gmm_exact_posterior(prior, op, y, noise_var)
    extent = cp["experiment"].getfloat("grid_extent", 2.0)
    n_cells = cp["experiment"].getint("grid_cells", 100)
    edges = np.linspace(-extent, extent, n_cells + 1)
    hist, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=[edges, edges])
    hist = hist / hist.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    z = (gx + 1j * gy).reshape(-1, 1)
    cell = (edges[1] - edges[0]) ** 2
    log_dens = posterior.noised_log_density(
        np.asarray(z), 0, schedule
    )  # index 0: sigma_0 = 0, the un-noised posterior
    dens = np.exp(log_dens).reshape(n_cells, n_cells)
    probs = dens * cell
    probs = probs / probs.sum()
    tv = 0.5 * float(np.abs(hist - probs).sum())

    with open(outdir / "summary.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["quantity", "value"])
        wr.writerow(["tv_distance", f"{tv:.6f}"])
        for k in range(prior.n_components):
            wr.writerow([f"prior_weight_{k}", f"{prior.weights[k]:.6f}"])
            wr.writerow([f"posterior_weight_{k}", f"{posterior.weights[k]:.6f}"])
    _write_manifest(outdir, config_path, config.seed, ["samples.npy", "summary.csv"])
    return EXIT_OK


def run_experiment(config_path) -> int:
    cp = _read_config(config_path)
    if not cp.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section")
    kind = cp["experiment"].get("kind")
    if kind == "toy-gmm":
        return _toy_gmm_experiment(cp, config_path)
    if kind in ("single-coil", "multi-coil", "burn-in", "map"):
        return _imaging_experiment(cp, config_path, kind)
    raise ConfigError(f"unknown experiment kind: {kind}")


def train_experiment(config_path) -> int:
    cp = _read_config(config_path)
    schedule = _schedule_from(cp)
    tsec = cp["training"]
    prior = load_gmm_config(cp["data"])
    rng = np.random.default_rng([tsec.getint("seed", 0), 7])
    n_points = tsec.getint("n_points", 10_000)
    comp = rng.choice(prior.n_components, size=n_points, p=prior.weights)
    raw = rng.standard_normal((n_points, prior.dim, 2))
    noise = (raw[..., 0] + 1j * raw[..., 1]) * np.sqrt(prior.variances[comp, None] / 2.0)
    data = prior.means[comp] + noise

    net = ScoreNet(
        input_dim=prior.dim,
        hidden=tsec.getint("hidden", 128),
        conditioning=tsec.get("conditioning", "fourier"),
        n_scales=schedule.n_scales,
        embed_size=tsec.getint("embed_size", 32),
        embed_std=tsec.getfloat("embed_std", 1.0),
        seed=tsec.getint("seed", 0),
    )
    tcfg = TrainConfig(
        epochs=tsec.getint("epochs", 100),
        batch_size=tsec.getint("batch_size", 128),
        learning_rate=tsec.getfloat("learning_rate", 1e-3),
        momentum=tsec.getfloat("momentum", 0.9),
        optimizer=tsec.get("optimizer", "sgd"),
        seed=tsec.getint("seed", 0),
    )
    trace = train(net, data, schedule, tcfg)
    outdir = _output_dir(cp, config_path)
    ckpt = outdir / "scorenet.ckpt"
    save_checkpoint(ckpt, net, schedule)
    with open(outdir / "loss_trace.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["epoch", "loss"])
        for e, loss in enumerate(trace):
            wr.writerow([e, f"{loss:.9e}"])
    _write_manifest(outdir, config_path, tcfg.seed, ["scorenet.ckpt", "loss_trace.csv"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="alps", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_train = sub.add_parser("train", help="train a toy score net")
    p_train.add_argument("config")
    p_ph = sub.add_parser("phantom", help="write a synthetic phantom")
    p_ph.add_argument("kind")
    p_ph.add_argument("size", type=int)
    p_ph.add_argument("out")
    p_me = sub.add_parser("metrics", help="PSNR/SSIM between two array files")
    p_me.add_argument("a")
    p_me.add_argument("b")
    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            return run_experiment(args.config)
        if args.command == "train":
            return train_experiment(args.config)
        if args.command == "phantom":
            save_array(args.out, make_phantom(args.kind, args.size))
            return EXIT_OK
        if args.command == "metrics":
            a = np.abs(load_array(args.a))
            b = np.abs(load_array(args.b))
            print(f"psnr_db={psnr(a, b):.6f}")
            print(f"ssim={ssim(a, b):.6f}")
            return EXIT_OK
    except (ConfigError, configparser.Error, KeyError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        print(f"numeric divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
