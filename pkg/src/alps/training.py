"""Noise-conditioned score network trained by denoising score matching.

The network is a small fully-connected stack on flattened complex inputs
(real and imaginary parts as separate channels).  Conditioning on the noise
index is either

* "fourier": a frozen random vector w; index i maps to
  concat(sin(2 pi i w), cos(2 pi i w)), projected into every hidden layer; or
* "discrete": learnable per-scale scale/shift tables applied to every hidden
  activation.

Gradients are computed analytically (hand-written backprop) so they can be
verified against central finite differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .domain import NoiseSchedule

__all__ = [
    "FourierConditioning",
    "DiscreteConditioning",
    "ScoreNet",
    "ScoreNetPrior",
    "TrainConfig",
    "dsm_loss",
    "dsm_draws",
    "train",
    "param_gradient_check",
    "save_checkpoint",
    "load_checkpoint",
    "TrainingDiverged",
]

_MAGIC = b"ALPSNET1"


class TrainingDiverged(RuntimeError):
    pass


class FourierConditioning:
    """Frozen random features of the noise index; embedding length 2m."""

    def __init__(self, embed_size: int = 32, std: float = 1.0, seed: int = 0):
        self.mode = "fourier"
        self.embed_size = int(embed_size)
        self.std = float(std)
        rng = np.random.default_rng([int(seed), 77])
        self.frozen = rng.normal(0.0, self.std, size=self.embed_size)

    @property
    def out_dim(self) -> int:
        return 2 * self.embed_size

    def embed(self, idx: np.ndarray) -> np.ndarray:
        """(B,) indices -> (B, 2m); bit-identical across calls."""
        arg = 2.0 * np.pi * np.asarray(idx, dtype=np.float64)[:, None] * self.frozen[None, :]
        return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


class DiscreteConditioning:
    """Learnable per-scale scale/shift tables, indexed by i in [1, N]."""

    def __init__(self, n_scales: int, width: int):
        self.mode = "discrete"
        self.n_scales = int(n_scales)
        self.width = int(width)

    def check_index(self, idx):
        idx = np.asarray(idx)
        if np.any(idx < 1) or np.any(idx > self.n_scales):
            raise IndexError("discrete conditioning index outside [1, N]")


class ScoreNet:
    """Fully-connected score net with three hidden layers and smooth activations."""

    def __init__(
        self,
        input_dim: int,
        hidden: int = 128,
        n_hidden: int = 3,
        conditioning="fourier",
        n_scales: int | None = None,
        embed_size: int = 32,
        embed_std: float = 1.0,
        activation: str = "tanh",
        seed: int = 0,
    ):
        if activation not in ("tanh", "linear"):
            raise ValueError("activation must be 'tanh' or 'linear'")
        self.input_dim = int(input_dim)  # complex entries; real feature dim is 2x
        self.hidden = int(hidden)
        self.n_hidden = int(n_hidden)
        self.activation = activation
        self.seed = int(seed)
        if isinstance(conditioning, str):
            if conditioning == "fourier":
                conditioning = FourierConditioning(embed_size, embed_std, seed)
            elif conditioning == "discrete":
                if n_scales is None:
                    raise ValueError("discrete conditioning needs n_scales")
                conditioning = DiscreteConditioning(n_scales, hidden)
            else:
                raise ValueError(f"unknown conditioning mode {conditioning!r}")
        self.conditioning = conditioning

        rng = np.random.default_rng([self.seed, 13])
        feat = 2 * self.input_dim
        dims = [feat] + [self.hidden] * self.n_hidden + [feat]
        self.weights = [
            rng.normal(0.0, 1.0 / np.sqrt(dims[l]), size=(dims[l], dims[l + 1]))
            for l in range(len(dims) - 1)
        ]
        self.biases = [np.zeros(dims[l + 1]) for l in range(len(dims) - 1)]
        if self.conditioning.mode == "fourier":
            e = self.conditioning.out_dim
            self.embed_proj = [
                rng.normal(0.0, 1.0 / np.sqrt(e), size=(e, self.hidden))
                for _ in range(self.n_hidden)
            ]
            self.phi = self.omega = None
        else:
            self.embed_proj = None
            self.phi = [np.ones((self.conditioning.n_scales + 1, self.hidden)) for _ in range(self.n_hidden)]
            self.omega = [np.zeros((self.conditioning.n_scales + 1, self.hidden)) for _ in range(self.n_hidden)]

    # -- parameter flattening ------------------------------------------------

    def param_arrays(self):
        arrs = list(self.weights) + list(self.biases)
        if self.embed_proj is not None:
            arrs += list(self.embed_proj)
        if self.phi is not None:
            arrs += list(self.phi) + list(self.omega)
        return arrs

    def get_params(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.param_arrays()])

    def set_params(self, flat: np.ndarray):
        pos = 0
        for a in self.param_arrays():
            a[...] = flat[pos : pos + a.size].reshape(a.shape)
            pos += a.size
        if pos != flat.size:
            raise ValueError("parameter vector length mismatch")

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.param_arrays())

    # -- forward / backward --------------------------------------------------

    def _act(self, a):
        return np.tanh(a) if self.activation == "tanh" else a

    def _act_grad(self, t):
        # derivative expressed through the activation value t = act(a)
        return (1.0 - t * t) if self.activation == "tanh" else np.ones_like(t)

    def _forward(self, feats, idx):
        """feats: (B, 2d) real; idx: (B,) noise indices.  Returns (out, cache)."""
        B = feats.shape[0]
        cache = {"h": [feats], "t": [], "emb": None, "idx": idx}
        if self.conditioning.mode == "fourier":
            emb = self.conditioning.embed(idx)
            cache["emb"] = emb
        else:
            self.conditioning.check_index(idx)
        h = feats
        for l in range(self.n_hidden):
            a = h @ self.weights[l] + self.biases[l]
            if self.conditioning.mode == "fourier":
                a = a + cache["emb"] @ self.embed_proj[l]
            t = self._act(a)
            cache["t"].append(t)
            if self.conditioning.mode == "discrete":
                h = self.phi[l][idx] * t + self.omega[l][idx]
            else:
                h = t
            cache["h"].append(h)
        out = h @ self.weights[-1] + self.biases[-1]
        return out, cache

    def forward(self, x: np.ndarray, idx) -> np.ndarray:
        """Score field at complex points x (B, d) for per-sample indices."""
        x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
        idx = np.broadcast_to(np.asarray(idx, dtype=np.intp), (x.shape[0],))
        feats = np.concatenate([x.real, x.imag], axis=1)
        out, _ = self._forward(feats, idx)
        d = self.input_dim
        return out[:, :d] + 1j * out[:, d:]

    def _backward(self, cache, grad_out):
        """Backprop of d loss / d out into parameter gradients."""
        gW = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        gE = [np.zeros_like(e) for e in self.embed_proj] if self.embed_proj is not None else None
        gPhi = [np.zeros_like(p) for p in self.phi] if self.phi is not None else None
        gOmega = [np.zeros_like(o) for o in self.omega] if self.omega is not None else None
        idx = cache["idx"]

        g = grad_out
        gW[-1] += cache["h"][-1].T @ g
        gb[-1] += g.sum(axis=0)
        g = g @ self.weights[-1].T
        for l in range(self.n_hidden - 1, -1, -1):
            t = cache["t"][l]
            if self.conditioning.mode == "discrete":
                np.add.at(gPhi[l], idx, g * t)
                np.add.at(gOmega[l], idx, g)
                g = g * self.phi[l][idx]
            ga = g * self._act_grad(t)
            gW[l] += cache["h"][l].T @ ga
            gb[l] += ga.sum(axis=0)
            if self.conditioning.mode == "fourier":
                gE[l] += cache["emb"].T @ ga
            g = ga @ self.weights[l].T
        grads = gW + gb
        if gE is not None:
            grads += gE
        if gPhi is not None:
            grads += gPhi + gOmega
        return np.concatenate([a.ravel() for a in grads])


class ScoreNetPrior:
    """Adapter exposing a trained net through the score-prior interface."""

    supports_exact_posterior = False

    def __init__(self, net: ScoreNet):
        self.net = net

    def score(self, x, i, schedule):
        x = np.asarray(x, dtype=np.complex128)
        flat = x.reshape(-1, self.net.input_dim)
        out = self.net.forward(flat, np.full(flat.shape[0], i, dtype=np.intp))
        return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# Denoising score matching
# ---------------------------------------------------------------------------


def dsm_draws(batch_size: int, schedule: NoiseSchedule, rng, dim: int):
    """Per-sample noise indices i ~ U{2..N} and perturbations z ~ CN(0, sigma_i^2)."""
    idx = rng.integers(2, schedule.n_scales + 1, size=batch_size)
    sig = schedule.sigmas[idx - 1]
    raw = rng.standard_normal((batch_size, dim, 2))
    z = (raw[..., 0] + 1j * raw[..., 1]) * (sig[:, None] / np.sqrt(2.0))
    return idx, z


def _loss_weights(schedule, idx):
    # sigma_{i-1}^2 / tau_i^2
    return np.array([schedule.sigma(int(i) - 1) ** 2 / schedule.tau_sq(int(i)) for i in idx])


def dsm_loss(net: ScoreNet, batch, schedule: NoiseSchedule, rng=None, draws=None,
             return_grads: bool = False):
    """Weighted denoising score-matching loss on a batch of clean samples.

    Per sample: (sigma_{i-1}^2 / tau_i^2) * || z / sigma_i^2 - s(x_0 + z, i) ||^2,
    averaged over the batch.  ``draws`` pins (idx, z) for deterministic
    re-evaluation (finite-difference checks).
    """
    x0 = np.atleast_2d(np.asarray(batch, dtype=np.complex128))
    if x0.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if draws is None:
        if rng is None:
            raise ValueError("need rng when draws are not supplied")
        idx, z = dsm_draws(x0.shape[0], schedule, rng, x0.shape[1])
    else:
        idx, z = draws
    sig_sq = schedule.sigmas[idx - 1] ** 2
    xi = x0 + z
    # the conditional score of x_i = x_0 + z given x_0 is -z / sigma_i^2
    target = -z / sig_sq[:, None]
    feats = np.concatenate([xi.real, xi.imag], axis=1)
    out, cache = net._forward(feats, np.asarray(idx, dtype=np.intp))
    tgt = np.concatenate([target.real, target.imag], axis=1)
    resid = tgt - out
    w = _loss_weights(schedule, idx)
    loss = float(np.mean(w * np.sum(resid**2, axis=1)))
    if not return_grads:
        return loss
    grad_out = (-2.0 * w[:, None] * resid) / x0.shape[0]
    return loss, net._backward(cache, grad_out)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    learning_rate: float
    momentum: float = 0.0
    optimizer: str = "sgd"  # "sgd" or "adam" (config extension)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid epoch/batch counts")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")


def train(net: ScoreNet, data, schedule: NoiseSchedule, config: TrainConfig):
    """Stochastic-gradient training; returns the per-epoch loss trace.

    Deterministic given config.seed.  Aborts with TrainingDiverged on NaN.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.complex128))
    rng = np.random.default_rng([config.seed, 101])
    params = net.get_params()
    velocity = np.zeros_like(params)
    m1 = np.zeros_like(params)
    m2 = np.zeros_like(params)
    adam_t = 0
    trace = []
    n = data.shape[0]
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, config.batch_size):
            batch = data[order[start : start + config.batch_size]]
            loss, grads = dsm_loss(net, batch, schedule, rng=rng, return_grads=True)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {_epoch} (lr too large?)"
                )
            if config.optimizer == "adam":
                adam_t += 1
                m1 = 0.9 * m1 + 0.1 * grads
                m2 = 0.999 * m2 + 0.001 * grads**2
                mhat = m1 / (1 - 0.9**adam_t)
                vhat = m2 / (1 - 0.999**adam_t)
                params = params - config.learning_rate * mhat / (np.sqrt(vhat) + 1e-8)
            else:
                velocity = config.momentum * velocity - config.learning_rate * grads
                params = params + velocity
            net.set_params(params)
            epoch_losses.append(loss)
        trace.append(float(np.mean(epoch_losses)))
    return trace


def param_gradient_check(net: ScoreNet, batch, schedule: NoiseSchedule, step: float = 1e-5,
                         seed: int = 0) -> float:
    """Max relative error of analytic vs central finite-difference gradients."""
    if net.n_params > 5000:
        raise ValueError("gradient check is meant for small nets")
    x0 = np.atleast_2d(np.asarray(batch, dtype=np.complex128))
    rng = np.random.default_rng([seed, 55])
    draws = dsm_draws(x0.shape[0], schedule, rng, x0.shape[1])
    _, grads = dsm_loss(net, x0, schedule, draws=draws, return_grads=True)
    params = net.get_params()
    fd = np.empty_like(grads)
    for j in range(params.size):
        p = params.copy()
        p[j] += step
        net.set_params(p)
        up = dsm_loss(net, x0, schedule, draws=draws)
        p[j] -= 2 * step
        net.set_params(p)
        dn = dsm_loss(net, x0, schedule, draws=draws)
        fd[j] = (up - dn) / (2 * step)
    net.set_params(params)
    scale = np.maximum(np.abs(fd), np.abs(grads))
    scale[scale < 1e-8] = 1.0
    return float(np.max(np.abs(fd - grads) / scale))


# ---------------------------------------------------------------------------
# Checkpoint format: magic, version, conditioning mode, layer shapes,
# schedule hash, then little-endian float64 parameters in declaration order.
# ---------------------------------------------------------------------------


def save_checkpoint(path, net: ScoreNet, schedule: NoiseSchedule):
    mode = 0 if net.conditioning.mode == "fourier" else 1
    n_scales = net.conditioning.n_scales if mode == 1 else 0
    embed_size = net.conditioning.embed_size if mode == 0 else 0
    embed_std = net.conditioning.std if mode == 0 else 0.0
    header = struct.pack(
        "<8sIBIIIIdq",
        _MAGIC,
        1,
        mode,
        net.input_dim,
        net.hidden,
        net.n_hidden,
        embed_size,
        embed_std,
        n_scales,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(schedule.state_hash())
        if mode == 0:
            fh.write(net.conditioning.frozen.astype("<f8").tobytes())
        fh.write(net.get_params().astype("<f8").tobytes())


def load_checkpoint(path, schedule: NoiseSchedule) -> ScoreNet:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<8sIBIIIIdq"))
        magic, version, mode, input_dim, hidden, n_hidden, embed_size, embed_std, n_scales = (
            struct.unpack("<8sIBIIIIdq", header)
        )
        if magic != _MAGIC:
            raise ValueError("not a score-net checkpoint")
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        sched_hash = fh.read(8)
        if sched_hash != schedule.state_hash():
            raise ValueError("checkpoint was trained with a different noise schedule")
        if mode == 0:
            cond = FourierConditioning(embed_size, embed_std or 1.0)
            cond.frozen = np.frombuffer(fh.read(8 * embed_size), dtype="<f8").copy()
            net = ScoreNet(input_dim, hidden, n_hidden, conditioning=cond)
        else:
            net = ScoreNet(
                input_dim, hidden, n_hidden, conditioning="discrete", n_scales=n_scales
            )
        flat = np.frombuffer(fh.read(), dtype="<f8").copy()
        net.set_params(flat)
    return net
