"""Mini U-Net noise predictor with rotary 2D attention, plus the training objective."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .diffusion import NoiseSchedule
from .errors import ConfigError, DivergenceError, InputError, ShapeError, StepError

DIVISOR = 8  # three stride-2 halvings


@dataclass(frozen=True)
class DenoiserConfig:
    base_channels: int = 32
    channel_multipliers: tuple = (1, 2, 2)
    blocks_per_level: int = 1
    attention_heads: int = 2
    time_embed_dim: int = 64
    groups: int = 8
    attend_all_levels: bool = True
    rope_base: float = 100.0
    timesteps: int = 1000
    levels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "channel_multipliers", tuple(self.channel_multipliers))
        self.validate()

    def widths(self) -> list[int]:
        return [self.base_channels * m for m in self.channel_multipliers]

    def validate(self):
        if self.levels != 3:
            raise ConfigError("the mini U-Net has exactly 3 levels")
        if len(self.channel_multipliers) != 3 or min(self.channel_multipliers) < 1:
            raise ConfigError("need 3 positive channel multipliers")
        for name in ("base_channels", "blocks_per_level", "attention_heads", "time_embed_dim", "timesteps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.time_embed_dim % 2:
            raise ConfigError("time_embed_dim must be even")
        for w in self.widths():
            if w % self.attention_heads or (w // self.attention_heads) % 4:
                raise ConfigError(f"width {w} gives a head dimension not divisible by 4")
            if w % min(self.groups, w):
                raise ConfigError(f"width {w} not divisible into {self.groups} groups")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> DenoiserConfig:
        return cls(**d)

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_json().encode()).digest()


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


# Rotary embeddings over (row, column)

def rope_angles(positions, head_dim: int, base: float = 100.0) -> torch.Tensor:
    """Rotation angle for every position and feature pair: shape (N, head_dim // 2)."""
    if head_dim % 4:
        raise ConfigError(f"head dimension {head_dim} not divisible by 4")
    pos = torch.as_tensor(positions, dtype=torch.float64)
    quarter = head_dim // 4
    freqs = base ** (-torch.arange(quarter, dtype=torch.float64) / quarter)
    return torch.cat([pos[:, :1] * freqs, pos[:, 1:2] * freqs], dim=-1)


def apply_rope(x: torch.Tensor, angles: torch.Tensor) -> torch.Tensor:
    """Rotate consecutive feature pairs of ``x`` (..., N, d) by ``angles`` (N, d/2)."""
    cos = torch.cos(angles).to(x.dtype)
    sin = torch.sin(angles).to(x.dtype)
    x1, x2 = x[..., 0::2], x[..., 1::2]
    out = torch.stack([x1 * cos - x2 * sin, x1 * sin + x2 * cos], dim=-1)
    return out.flatten(-2)


def rope2d_attention(queries, keys, values, positions, base: float = 100.0, return_weights: bool = False):
    """Scaled dot-product attention with rows rotating the first half of each feature vector
    and columns the second half.

    queries/keys/values: (..., N, d) with d divisible by 4; positions: (N, 2).
    """
    q, k, v = (torch.as_tensor(a) for a in (queries, keys, values))
    d = q.shape[-1]
    if d % 4:
        raise ConfigError(f"feature dimension {d} not divisible by 4")
    pos = torch.as_tensor(positions)
    if pos.shape != (q.shape[-2], 2):
        raise ShapeError(f"need one (row, col) per position, got {tuple(pos.shape)}")
    angles = rope_angles(pos, d, base)
    q, k = apply_rope(q, angles), apply_rope(k, angles)
    scores = q @ k.transpose(-1, -2) / math.sqrt(d)
    scores = scores - scores.amax(dim=-1, keepdim=True)
    w = torch.exp(scores)
    w = w / w.sum(dim=-1, keepdim=True)
    out = w @ v
    return (out, w) if return_weights else out


def _grid_positions(h: int, w: int) -> torch.Tensor:
    rows, cols = torch.meshgrid(torch.arange(h), torch.arange(w), indexing="ij")
    return torch.stack([rows.flatten(), cols.flatten()], dim=-1)


def _norm(ch: int, groups: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(groups, ch), ch)


class ResBlock(nn.Module):
    def __init__(self, ch: int, temb_dim: int, groups: int):
        super().__init__()
        self.norm1 = _norm(ch, groups)
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.time = nn.Linear(temb_dim, ch)
        self.norm2 = _norm(ch, groups)
        self.conv2 = nn.Conv2d(ch, ch, 3, padding=1)

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time(F.silu(temb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class Attention(nn.Module):
    def __init__(self, ch: int, heads: int, groups: int, rope_base: float):
        super().__init__()
        self.heads = heads
        self.rope_base = rope_base
        self.norm = _norm(ch, groups)
        self.qkv = nn.Linear(ch, 3 * ch)
        self.proj = nn.Linear(ch, ch)

    def forward(self, x):
        n, c, h, w = x.shape
        tokens = self.norm(x).flatten(2).transpose(1, 2)  # (n, hw, c)
        q, k, v = self.qkv(tokens).chunk(3, dim=-1)
        split = lambda a: a.reshape(n, h * w, self.heads, c // self.heads).transpose(1, 2)
        out = rope2d_attention(split(q), split(k), split(v), _grid_positions(h, w), self.rope_base)
        out = out.transpose(1, 2).reshape(n, h * w, c)
        return x + self.proj(out).transpose(1, 2).reshape(n, c, h, w)


class Level(nn.Module):
    def __init__(self, ch, cfg: DenoiserConfig, attend: bool):
        super().__init__()
        self.blocks = nn.ModuleList(
            ResBlock(ch, cfg.time_embed_dim, cfg.groups) for _ in range(cfg.blocks_per_level)
        )
        self.attn = Attention(ch, cfg.attention_heads, cfg.groups, cfg.rope_base) if attend else None

    def forward(self, x, temb):
        for block in self.blocks:
            x = block(x, temb)
        return self.attn(x) if self.attn is not None else x


class Upsample(nn.Module):
    """Nearest-neighbour doubling, then a 1x1 convolution to the target width."""

    def __init__(self, cin, cout):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 1)

    def forward(self, x):
        return self.conv(F.interpolate(x, scale_factor=2, mode="nearest"))


class MiniUNet(nn.Module):
    """eps_theta(x_t, t) on (n, 1, H, W) inputs with H, W divisible by 8."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        cfg = config
        widths = cfg.widths()
        attend = [cfg.attend_all_levels or i >= 1 for i in range(3)]
        temb = cfg.time_embed_dim
        self.time_mlp = nn.Sequential(nn.Linear(temb, temb), nn.SiLU(), nn.Linear(temb, temb))
        self.stem = nn.Conv2d(1, widths[0], 3, padding=1)
        self.encoder = nn.ModuleList(Level(widths[i], cfg, attend[i]) for i in range(3))
        out_widths = widths[1:] + widths[-1:]
        self.down = nn.ModuleList(
            nn.Conv2d(widths[i], out_widths[i], 3, stride=2, padding=1) for i in range(3)
        )
        wb = widths[-1]
        self.mid1 = ResBlock(wb, temb, cfg.groups)
        self.mid_attn = Attention(wb, cfg.attention_heads, cfg.groups, cfg.rope_base)
        self.mid2 = ResBlock(wb, temb, cfg.groups)
        self.up = nn.ModuleList(Upsample(out_widths[i], widths[i]) for i in range(3))
        self.decoder = nn.ModuleList(Level(widths[i], cfg, attend[i]) for i in range(3))
        self.out_norm = _norm(widths[0], cfg.groups)
        self.out_conv = nn.Conv2d(widths[0], 1, 3, padding=1)

    def forward(self, x, t, return_features: bool = False):
        if x.shape[-2] % DIVISOR or x.shape[-1] % DIVISOR:
            raise ShapeError(f"spatial size {tuple(x.shape[-2:])} not divisible by {DIVISOR}")
        t = torch.as_tensor(t).reshape(-1).expand(x.shape[0])
        if torch.any(t < 0) or torch.any(t > self.config.timesteps):
            raise StepError(f"timestep outside 0..{self.config.timesteps}")
        temb = self.time_mlp(timestep_embedding(t, self.config.time_embed_dim).to(x.dtype))
        feats = {}
        h = self.stem(x)
        skips = []
        for i in range(3):
            h = self.encoder[i](h, temb)
            feats[f"enc{i}"] = h
            skips.append(h)
            h = self.down[i](h)
        h = self.mid2(self.mid_attn(self.mid1(h, temb)), temb)
        feats["mid"] = h
        for i in reversed(range(3)):
            h = self.up[i](h) + skips[i]
            h = self.decoder[i](h, temb)
            feats[f"dec{i}"] = h
        out = self.out_conv(F.silu(self.out_norm(h)))
        return (out, feats) if return_features else out


def init_params(config: DenoiserConfig, seed: int, dtype=torch.float32) -> MiniUNet:
    """Fan-in scaled kernels (torch defaults), unit norms, zeroed output convolution."""
    gen_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(seed)
        model = MiniUNet(config)
    finally:
        torch.random.set_rng_state(gen_state)
    nn.init.zeros_(model.out_conv.weight)
    nn.init.zeros_(model.out_conv.bias)
    return model.to(dtype)


def predict_noise(model: MiniUNet, x_t, t):
    """Noise estimate for an (H, W) or (n, H, W) image; numpy in, numpy out."""
    as_numpy = not isinstance(x_t, torch.Tensor)
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(np.asarray(x_t) if as_numpy else x_t, dtype=dtype)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"expected (H, W) or (n, H, W), got {tuple(x.shape)}")
    with torch.no_grad():
        out = model(x[:, None], torch.as_tensor(t))[:, 0]
    if single:
        out = out[0]
    return out.numpy() if as_numpy else out


def make_predictor(model: MiniUNet):
    """Adapter with the ``predict(x, t)`` signature used by the samplers."""
    return lambda x, t: predict_noise(model, x, t)


def loss_mse(out, tgt, mask=None):
    """Mean squared error over pixels; with a mask, over mask-1 pixels only."""
    if tuple(out.shape) != tuple(tgt.shape):
        raise ShapeError(f"shape mismatch: {tuple(out.shape)} vs {tuple(tgt.shape)}")
    sq = (tgt - out) ** 2
    if mask is None:
        return sq.mean()
    return (sq * mask).sum() / mask.sum()


@dataclass
class Trainer:
    """Adam training loop state around a model. One writer per instance."""

    model: MiniUNet
    schedule: NoiseSchedule
    lr: float = 1e-4
    masked_loss: bool = False
    step_index: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.schedule.T != self.model.config.timesteps:
            raise ConfigError(
                f"schedule T={self.schedule.T} but model expects {self.model.config.timesteps}"
            )
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=self.lr)

    def step(self, x0, seed: int, mask=None) -> float:
        return train_step(self, x0, seed, mask)


def draw_training_noise(x0: np.ndarray, T: int, seed: int):
    rng = np.random.default_rng(seed)
    t = rng.integers(1, T + 1, size=len(x0))
    eps = rng.standard_normal(x0.shape)
    return t, eps


def train_step(trainer: Trainer, batch, seed: int, mask=None) -> float:
    """One optimisation step on clean images; returns the pre-update batch loss.

    ``batch`` is a list of equally sized grids/arrays or an (n, H, W) array with H, W
    divisible by 8 (see ``dataset.pad_batch``).
    """
    if len(batch) == 0:
        raise InputError("empty batch")
    x0 = np.stack([np.asarray(getattr(g, "cells", g), dtype=np.float64) for g in batch])
    model, schedule = trainer.model, trainer.schedule
    dtype = next(model.parameters()).dtype
    t, eps = draw_training_noise(x0, schedule.T, seed)
    ab = schedule.alpha_bar[t][:, None, None]
    xt = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    out = model(torch.as_tensor(xt, dtype=dtype)[:, None], torch.as_tensor(t))[:, 0]
    tgt = torch.as_tensor(eps, dtype=dtype)
    m = None
    if trainer.masked_loss and mask is not None:
        m = torch.as_tensor(np.asarray(mask), dtype=dtype)
    loss = loss_mse(out, tgt, m)
    value = float(loss.detach())
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss {value}", trainer.step_index)
    trainer.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    trainer.optimizer.step()
    trainer.step_index += 1
    trainer.history.append(value)
    return value
