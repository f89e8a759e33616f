"""Forward noising, training objective, step embedding and ancestral sampler.

The chain runs t = 1..T.  Forward: x_t = sqrt(abar_t) x_0 + sqrt(1-abar_t) e.
Reverse: mu(x_t, t) = (x_t - beta_t/sqrt(1-abar_t) * eps(x_t, t)) / sqrt(alpha_t)
with sigma_t = sqrt(beta_tilde_t); the final step (t=1) adds no noise so x_0
is returned uncorrupted.

A useful closed form for testing the sampler: when x_0 ~ N(mu, s2)
elementwise, (x_0, x_t) are jointly Gaussian with Cov = sqrt(abar_t) s2, so

    E[eps | x_t] = sqrt(1 - abar_t) (x_t - sqrt(abar_t) mu)
                   / (abar_t s2 + 1 - abar_t).

Plugging this optimal predictor into the reverse chain should reproduce the
data law up to the finite-T bias of the schedule, with no learning involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DataFormatError
from .schedule import Schedule
from .seeding import named_streams

EMBEDDING_DIM = 128


def step_embedding(t: int) -> np.ndarray:
    """128-dim sinusoidal encoding: sin(10^(4i/63) t) then cos, i = 0..63."""
    if t < 0:
        raise ValueError(f"step must be >= 0, got {t}")
    half = EMBEDDING_DIM // 2
    scales = 10.0 ** (np.arange(half) * 4.0 / (half - 1))
    return np.concatenate([np.sin(scales * t), np.cos(scales * t)])


def forward_diffuse(x0: np.ndarray, t: int, eps: np.ndarray, sched: Schedule) -> np.ndarray:
    """sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, exactly."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {eps.shape} differs from x0 shape {x0.shape}")
    abar = sched.alpha_bar_at(t)  # validates 1 <= t <= T
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps


def training_loss(x0: np.ndarray, cond, net, sched: Schedule,
                  rng_t: np.random.Generator, rng_eps: np.random.Generator) -> ad.Tensor:
    """Noise-prediction objective for one segment: mean((eps - eps_hat)^2).

    Draws t uniformly from 1..T and eps from N(0, I); differentiable w.r.t.
    the network parameters.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    t = int(rng_t.integers(1, sched.steps + 1))
    eps = rng_eps.normal(size=x0.shape)
    x_t = forward_diffuse(x0, t, eps, sched)
    predicted = net.forward(x_t, t, cond)
    diff = ad.sub(ad.as_tensor(eps), predicted)
    return ad.mean(ad.mul(diff, diff))


@dataclass
class TrainState:
    """Everything needed to continue a run: params live in the net itself."""

    net: object
    optimizer: ad.Adam
    iteration: int
    seed: int
    loss_trace: list[float]


@dataclass(frozen=True)
class TrainOptions:
    iters: int = 300
    batch: int = 8
    lr: float = 2e-4
    seed: int = 0


def train(segments, conditioners, net, sched: Schedule, opts: TrainOptions,
          state: TrainState | None = None,
          on_iteration=None) -> TrainState:
    """Run opts.iters adaptive-moment steps of the noise-prediction loss.

    segments: list of (H, L) arrays; conditioners: matching spectrogram list
    (already log-compressed).  Each batch element draws its own t and eps.
    Deterministic given opts.seed; pass `state` to continue a previous run
    with its optimizer moments and iteration counter.
    """
    if len(segments) == 0:
        raise ValueError("training requires a non-empty dataset")
    if len(conditioners) != len(segments):
        raise ValueError("need one conditioner per training segment")
    if state is None:
        state = TrainState(net=net, optimizer=ad.Adam(net.params, lr=opts.lr),
                           iteration=0, seed=opts.seed, loss_trace=[])
    streams = named_streams(state.seed, ("batch", "t", "eps"))
    # replay already-consumed draws so a resumed run continues the same stream
    for _ in range(state.iteration):
        streams["batch"].integers(0, len(segments), size=opts.batch)
        streams["t"].integers(1, sched.steps + 1, size=opts.batch)
        streams["eps"].normal(size=(opts.batch,) + segments[0].shape)

    for it in range(state.iteration, state.iteration + opts.iters):
        picks = streams["batch"].integers(0, len(segments), size=opts.batch)
        ts = streams["t"].integers(1, sched.steps + 1, size=opts.batch)
        noises = streams["eps"].normal(size=(opts.batch,) + segments[0].shape)
        losses = []
        for pick, t, eps in zip(picks, ts, noises):
            x_t = forward_diffuse(segments[pick], int(t), eps, sched)
            predicted = net.forward(x_t, int(t), conditioners[pick])
            diff = ad.sub(ad.as_tensor(eps), predicted)
            losses.append(ad.mean(ad.mul(diff, diff)))
        total = losses[0]
        for extra in losses[1:]:
            total = ad.add(total, extra)
        loss = ad.mul(total, ad.as_tensor(1.0 / len(losses)))
        state.optimizer.zero_grad()
        loss.backward()
        state.optimizer.step()
        state.loss_trace.append(loss.item())
        state.iteration = it + 1
        if on_iteration is not None:
            on_iteration(state.iteration, loss.item())
    return state


def pack_state(state: TrainState) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    """Flatten a run into checkpoint tensors: params plus optimizer moments."""
    tensors = {name: p.data for name, p in state.net.params.items()}
    for name in state.net.params:
        tensors["adam.m." + name] = state.optimizer.m[name]
        tensors["adam.v." + name] = state.optimizer.v[name]
    return tensors, {"iteration": state.iteration, "seed": state.seed}


def unpack_state(net, tensors: dict[str, np.ndarray], meta: dict[str, int],
                 lr: float) -> TrainState:
    """Rebuild a TrainState onto a freshly constructed net of matching config."""
    for key in ("iteration", "seed"):
        if key not in meta:
            raise DataFormatError(f"checkpoint lacks meta {key!r}")
    expected = set(net.params)
    expected |= {"adam.m." + n for n in net.params} | {"adam.v." + n for n in net.params}
    if set(tensors) != expected:
        missing = sorted(expected - set(tensors))[:3]
        extra = sorted(set(tensors) - expected)[:3]
        raise DataFormatError(f"checkpoint tensors do not match the net "
                              f"(missing {missing}, unexpected {extra})")
    optimizer = ad.Adam(net.params, lr=lr)
    for name, p in net.params.items():
        for key, dest in ((name, None),
                          ("adam.m." + name, optimizer.m),
                          ("adam.v." + name, optimizer.v)):
            arr = tensors[key]
            if arr.shape != p.data.shape:
                raise DataFormatError(f"checkpoint tensor {key!r} has shape "
                                      f"{arr.shape}, net expects {p.data.shape}")
            if dest is None:
                p.data[:] = arr
            else:
                dest[name] = arr.astype(np.float64).copy()
    optimizer.t = int(meta["iteration"])
    return TrainState(net=net, optimizer=optimizer, iteration=int(meta["iteration"]),
                      seed=int(meta["seed"]), loss_trace=[])


def sample(net, cond, sched: Schedule, rng: np.random.Generator,
           shape: tuple[int, int] | None = None) -> np.ndarray:
    """Ancestral reverse chain from x_T ~ N(0, I); exactly T net evaluations.

    `net` is anything with forward(x_t, t, cond) -> noise estimate; the
    final step draws no noise.
    """
    if shape is None:
        shape = (net.config.in_channels, net.config.segment_len)
    x = rng.normal(size=shape)
    with ad.no_grad():
        # nets exposing the split interface get the conditioner upsampled once
        cond_up = net.upsample_conditioner(cond) if hasattr(net, "forward_upsampled") else None
        for t in range(sched.steps, 0, -1):
            if cond_up is not None:
                predicted = net.forward_upsampled(x, t, cond_up)
            else:
                predicted = net.forward(x, t, cond)
            eps_hat = predicted.data if isinstance(predicted, ad.Tensor) else np.asarray(predicted)
            beta = sched.beta_at(t)
            mu = (x - beta / np.sqrt(1.0 - sched.alpha_bar_at(t)) * eps_hat) \
                / np.sqrt(sched.alpha_at(t))
            if t > 1:
                x = mu + np.sqrt(sched.beta_tilde_at(t)) * rng.normal(size=shape)
            else:
                x = mu
    return x
