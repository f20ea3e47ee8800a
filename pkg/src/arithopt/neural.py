"""Noise schedule, denoiser and cost-predictor networks, and their training.

The denoiser is a small shape-preserving convolutional encoder-decoder with a
skip connection and sinusoidal timestep conditioning; the cost predictor is a
3-residual-block CNN with a scalar head. Everything runs on CPU tensors and
is deterministic under a fixed seed.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .codec import KIND_CT, KIND_PREFIX, bits_per_count, to_tensor


class DivergenceError(RuntimeError):
    """Training loss went non-finite."""


_THREADS_PINNED = False


def pin_torch_threads() -> None:
    """Single-threaded tensor math by default (deterministic, and faster than
    oversubscription on the tiny tensors this package uses). Override with
    ARITHOPT_TORCH_THREADS."""
    global _THREADS_PINNED
    if _THREADS_PINNED:
        return
    torch.set_num_threads(max(1, int(os.environ.get("ARITHOPT_TORCH_THREADS", "1"))))
    _THREADS_PINNED = True


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal-retention sequence alpha_bar[0..T], alpha_bar[0] = 1."""

    timesteps: int
    alpha_bar: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        if ab.shape != (self.timesteps + 1,):
            raise ValueError("alpha_bar must have length timesteps + 1")
        if ab[0] != 1.0:
            raise ValueError("alpha_bar[0] must be 1 (clean data)")
        if not (np.diff(ab) < 0).all():
            raise ValueError("alpha_bar must be strictly decreasing")
        if ab[-1] <= 0:
            raise ValueError("alpha_bar must stay positive")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)


def make_schedule(timesteps: int = 1000, kind: str = "cosine") -> NoiseSchedule:
    """Noise schedule over ``timesteps`` steps; 'cosine' (default) or 'linear-abar'."""
    if timesteps < 2:
        raise ValueError("schedule needs at least 2 timesteps")
    t = np.arange(timesteps + 1, dtype=np.float64)
    if kind == "cosine":
        s = 0.008
        f = np.cos((t / timesteps + s) / (1 + s) * math.pi / 2) ** 2
        raw = f / f[0]
        betas = 1.0 - raw[1:] / raw[:-1]
        betas = np.clip(betas, 1e-8, 0.999)
        ab = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    elif kind == "linear-abar":
        ab = 1.0 - (1.0 - 1e-4) * t / timesteps
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(timesteps=timesteps, alpha_bar=ab)


def forward_diffuse(x0, t, eps, schedule: NoiseSchedule):
    """x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, elementwise.

    ``t`` is either a plain int (numpy or torch data) or a per-sample integer
    tensor matching a batched torch ``x0``.
    """
    ab = schedule.alpha_bar
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        ab_t = torch.from_numpy(ab.copy()).to(x0.dtype)[t]
        shape = (-1,) + (1,) * (x0.ndim - 1)
        return ab_t.sqrt().view(shape) * x0 + (1 - ab_t).sqrt().view(shape) * eps
    a = float(ab[int(t)])
    return math.sqrt(a) * x0 + math.sqrt(1.0 - a) * eps


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        half = self.dim // 2
        freqs = torch.exp(
            -math.log(10000.0) * torch.arange(half, dtype=torch.float32) / max(1, half - 1)
        ).to(t.device)
        args = t.float()[:, None] * freqs[None, :]
        return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class _TimeBlock(nn.Module):
    """conv-norm-act x2 with a per-channel timestep bias between the convs."""

    def __init__(self, c_in: int, c_out: int, temb_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.norm1 = nn.GroupNorm(min(8, c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.norm2 = nn.GroupNorm(min(8, c_out), c_out)
        self.temb = nn.Linear(temb_dim, c_out)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, temb):
        h = F.silu(self.norm1(self.conv1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = F.silu(self.norm2(self.conv2(h)))
        return h + self.skip(x)


class DenoiserNet(nn.Module):
    """Noise predictor: 2-level encoder-decoder, skip connection, timestep-conditioned.

    Output shape always equals input shape; works for any spatial size >= 2.
    """

    def __init__(self, channels: int, base: int = 32, temb_dim: int = 64):
        super().__init__()
        self.channels = channels
        self.base = base
        self.temb_dim = temb_dim
        self.embed = SinusoidalTimeEmbedding(temb_dim)
        self.embed_mlp = nn.Sequential(
            nn.Linear(temb_dim, temb_dim), nn.SiLU(), nn.Linear(temb_dim, temb_dim)
        )
        self.enc = _TimeBlock(channels, base, temb_dim)
        self.down = nn.Conv2d(base, 2 * base, 3, stride=2, padding=1)
        self.mid = _TimeBlock(2 * base, 2 * base, temb_dim)
        self.up = nn.Conv2d(2 * base, base, 3, padding=1)
        self.dec = _TimeBlock(2 * base, base, temb_dim)
        self.out = nn.Conv2d(base, channels, 3, padding=1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        if t.ndim == 0:
            t = t.expand(x.shape[0])
        temb = self.embed_mlp(self.embed(t).to(x.dtype))
        h1 = self.enc(x, temb)
        h2 = self.mid(self.down(h1), temb)
        h2 = self.up(F.interpolate(h2, size=h1.shape[-2:], mode="nearest"))
        h = self.dec(torch.cat([h1, h2], dim=1), temb)
        return self.out(h)


class _ResBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.norm1 = nn.GroupNorm(min(8, ch), ch)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)
        self.norm2 = nn.GroupNorm(min(8, ch), ch)

    def forward(self, x):
        h = F.silu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return F.silu(h + x)


class PredictorNet(nn.Module):
    """Scalar cost regressor: stem + 3 residual blocks + global pooling + head."""

    def __init__(self, channels: int, base: int = 32):
        super().__init__()
        self.channels = channels
        self.base = base
        self.stem = nn.Conv2d(channels, base, 3, padding=1)
        self.blocks = nn.ModuleList([_ResBlock(base) for _ in range(3)])
        self.head = nn.Linear(base, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.silu(self.stem(x))
        for block in self.blocks:
            h = block(h)
        pooled = h.mean(dim=(2, 3))
        return self.head(pooled).squeeze(-1)


def tensor_channels(kind: str, n: int) -> int:
    if kind == KIND_CT:
        return 2 * bits_per_count(n)
    if kind == KIND_PREFIX:
        return 1
    raise ValueError(f"unknown design kind {kind!r}")


def _seeded_init(builder, seed: int):
    with torch.random.fork_rng():
        torch.manual_seed(seed & 0x7FFFFFFFFFFFFFFF)
        return builder()


def make_denoiser(kind: str, n: int, base: int = 32, seed: int = 0) -> DenoiserNet:
    return _seeded_init(lambda: DenoiserNet(tensor_channels(kind, n), base), seed)


def make_predictor(kind: str, n: int, base: int = 32, seed: int = 0) -> PredictorNet:
    return _seeded_init(lambda: PredictorNet(tensor_channels(kind, n), base), seed)


def encode_designs(designs) -> np.ndarray:
    """Stack encoded design tensors into a float32 [N, C, H, W] batch."""
    return np.stack([to_tensor(d).data.astype(np.float32) for d in designs])


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.1
    noise_augment: bool = False  # perturbation augmentation for the predictor
    noise_augment_scale: float = 0.5


@dataclass
class TrainResult:
    losses: list[float] = field(default_factory=list)
    val_mse: float | None = None


def train_diffusion(
    net: DenoiserNet,
    data: np.ndarray,
    schedule: NoiseSchedule,
    cfg: TrainConfig,
) -> TrainResult:
    """Minimize the noise-prediction MSE over uniformly sampled timesteps.

    Every batch draws fresh per-example timesteps and noise from a generator
    seeded by ``cfg.seed``, so identical inputs give identical loss curves.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    pin_torch_threads()
    x_all = torch.from_numpy(np.asarray(data, dtype=np.float32))
    gen = torch.Generator().manual_seed(cfg.seed & 0x7FFFFFFFFFFFFFFF)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    ab = torch.from_numpy(schedule.alpha_bar.copy()).float()
    result = TrainResult()
    net.train()
    for _ in range(cfg.epochs):
        perm = torch.randperm(len(x_all), generator=gen)
        total, count = 0.0, 0
        for lo in range(0, len(perm), cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            x0 = x_all[idx]
            t = torch.randint(1, schedule.timesteps + 1, (len(idx),), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            shape = (-1, 1, 1, 1)
            xt = ab[t].sqrt().view(shape) * x0 + (1 - ab[t]).sqrt().view(shape) * eps
            loss = ((net(xt, t) - eps) ** 2).mean()
            if not torch.isfinite(loss):
                raise DivergenceError(f"diffusion loss diverged at epoch {len(result.losses)}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        result.losses.append(total / count)
    return result


def train_predictor(
    net: PredictorNet,
    data: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> TrainResult:
    """Fit the cost regressor on clean encoded tensors; reports held-out MSE."""
    if len(data) == 0:
        raise ValueError("empty training set")
    pin_torch_threads()
    x_all = torch.from_numpy(np.asarray(data, dtype=np.float32))
    y_all = torch.from_numpy(np.asarray(labels, dtype=np.float32))
    if not torch.isfinite(y_all).all():
        raise ValueError("labels must be finite")
    gen = torch.Generator().manual_seed(cfg.seed & 0x7FFFFFFFFFFFFFFF)
    perm = torch.randperm(len(x_all), generator=gen)
    n_val = int(round(len(x_all) * cfg.val_fraction))
    n_val = min(max(n_val, 1 if len(x_all) > 1 else 0), len(x_all) - 1)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    result = TrainResult()
    net.train()
    for _ in range(cfg.epochs):
        order = train_idx[torch.randperm(len(train_idx), generator=gen)]
        total, count = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            x = x_all[idx]
            if cfg.noise_augment:
                sigma = cfg.noise_augment_scale * torch.rand(
                    (len(idx), 1, 1, 1), generator=gen
                )
                x = x + sigma * torch.randn(x.shape, generator=gen)
            loss = ((net(x) - y_all[idx]) ** 2).mean()
            if not torch.isfinite(loss):
                raise DivergenceError(f"predictor loss diverged at epoch {len(result.losses)}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
            count += len(idx)
        result.losses.append(total / count)
    net.eval()
    with torch.no_grad():
        if len(val_idx):
            result.val_mse = float(((net(x_all[val_idx]) - y_all[val_idx]) ** 2).mean())
        else:
            result.val_mse = float(((net(x_all) - y_all) ** 2).mean())
    return result


def grad_wrt_input(fn, x: torch.Tensor) -> torch.Tensor:
    """Exact reverse-mode gradient of the scalar ``fn(x)`` at ``x``."""
    leaf = x.detach().clone().requires_grad_(True)
    out = fn(leaf)
    if out.numel() != 1:
        raise ValueError("grad_wrt_input needs a scalar-valued function")
    (grad,) = torch.autograd.grad(out, leaf)
    return grad


CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, net: nn.Module, meta: dict | None = None) -> None:
    """Self-describing checkpoint: architecture metadata plus weights."""
    if isinstance(net, DenoiserNet):
        arch = {"model": "denoiser", "channels": net.channels, "base": net.base}
    elif isinstance(net, PredictorNet):
        arch = {"model": "predictor", "channels": net.channels, "base": net.base}
    else:
        raise TypeError(f"cannot checkpoint {type(net).__name__}")
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "arch": arch,
        "meta": meta or {},
        "state_dict": net.state_dict(),
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> tuple[nn.Module, dict]:
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint format_version")
    arch = payload["arch"]
    if arch["model"] == "denoiser":
        net: nn.Module = DenoiserNet(arch["channels"], arch["base"])
    elif arch["model"] == "predictor":
        net = PredictorNet(arch["channels"], arch["base"])
    else:
        raise ValueError(f"unknown model kind {arch['model']!r}")
    net.load_state_dict(payload["state_dict"])
    net.eval()
    return net, payload["meta"]
