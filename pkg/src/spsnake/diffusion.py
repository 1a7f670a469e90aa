"""DDPM algebra on single-channel images: schedules, forward noising, backward steps, sampling.

Images live on the [0, 1] scale (dead = 0, living = 1). Random draws use numpy's
PCG64 generator; per-sample streams come from ``SeedSequence(seed).spawn``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, StepError
from .grid import Grid, render_pbm


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Arrays indexed by step t = 0..T; index 0 holds beta = 0, alpha = alpha_bar = 1."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta) - 1

    @classmethod
    def from_betas(cls, betas, allow_zero: bool = False) -> NoiseSchedule:
        betas = np.asarray(betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ConfigError("need at least one beta")
        low_ok = np.all(betas >= 0) if allow_zero else np.all(betas > 0)
        if not (low_ok and np.all(betas < 1)):
            raise ConfigError("betas must lie in (0, 1)")
        beta = np.concatenate([[0.0], betas])
        alpha = 1.0 - beta
        alpha[0] = 1.0
        alpha_bar = np.empty_like(alpha)
        alpha_bar[0] = 1.0
        for t in range(1, len(alpha)):
            alpha_bar[t] = alpha_bar[t - 1] * alpha[t]
        for arr in (beta, alpha, alpha_bar):
            arr.flags.writeable = False
        return cls(beta, alpha, alpha_bar)

    def to_dict(self) -> dict:
        return {"betas": self.beta[1:].tolist()}


def build_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end inclusive."""
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    if not (0 < beta_start <= beta_end < 1):
        raise ConfigError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, T))


def respace(schedule: NoiseSchedule, steps: int) -> tuple[NoiseSchedule, np.ndarray]:
    """Schedule over ``steps`` evenly strided original timesteps.

    Returns the shorter schedule and, for each of its steps k = 1..steps, the original
    timestep the noise predictor should be queried with.
    """
    T = schedule.T
    if not 1 <= steps <= T:
        raise ConfigError(f"steps must be in 1..{T}, got {steps}")
    if steps == T:
        return schedule, np.arange(1, T + 1)
    taus = np.unique(np.round(np.linspace(1, T, steps)).astype(int))
    ab = schedule.alpha_bar[taus]
    prev = np.concatenate([[1.0], ab[:-1]])
    betas = np.clip(1.0 - ab / prev, 0.0, 0.999999)
    return NoiseSchedule.from_betas(betas, allow_zero=True), taus


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"shape mismatch: {sorted(shapes)}")


def forward_diffuse(x0, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    _same_shape(x0, eps)
    if not 0 <= t <= schedule.T:
        raise StepError(f"t must be in 0..{schedule.T}, got {t}")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * np.asarray(x0, dtype=np.float64) + np.sqrt(1.0 - ab) * np.asarray(eps, dtype=np.float64)


def posterior_coefficients(schedule: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """(1/sqrt(alpha_t), beta_t/sqrt(1 - abar_t), injected noise std) for step t."""
    beta = schedule.beta[t]
    ab, ab_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
    if beta == 0.0:
        return 1.0 / np.sqrt(schedule.alpha[t]), 0.0, 0.0
    return (
        1.0 / np.sqrt(schedule.alpha[t]),
        beta / np.sqrt(1.0 - ab),
        np.sqrt((1.0 - ab_prev) / (1.0 - ab) * beta),
    )


def backward_step(x_t, t: int, eps_pred, eps_inject, schedule: NoiseSchedule) -> np.ndarray:
    """One reverse step x_t -> x_{t-1}; the injected noise is ignored at t = 1."""
    _same_shape(x_t, eps_pred, eps_inject)
    if not 1 <= t <= schedule.T:
        raise StepError(f"t must be in 1..{schedule.T}, got {t}")
    inv_sqrt_alpha, eps_coef, sigma = posterior_coefficients(schedule, t)
    x_t = np.asarray(x_t, dtype=np.float64)
    mean = inv_sqrt_alpha * (x_t - eps_coef * np.asarray(eps_pred, dtype=np.float64))
    if t == 1:
        return mean
    return mean + sigma * np.asarray(eps_inject, dtype=np.float64)


def binarize(x) -> Grid:
    """Clamp to [0, 1], then round half up."""
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return Grid((x >= 0.5).astype(np.uint8))


def sample_batch(predict, height: int, width: int, schedule: NoiseSchedule, seeds,
                 steps: int | None = None, dead_mask=None, trajectory: bool = False):
    """Run the reverse chain for one image per seed, batched through ``predict``.

    ``predict(x, t)`` receives an array of shape (n, H, W) and the original timestep.
    ``dead_mask`` (H, W) marks padding cells known to be dead; they are reset to the forward
    marginal of a zero pixel after every step. Returns x_0 of shape (n, H, W) and, if asked,
    the list of T + 1 states from x_T down to x_0.
    """
    seeds = list(seeds)
    sched, taus = respace(schedule, steps) if steps else (schedule, np.arange(1, schedule.T + 1))
    rngs = [np.random.default_rng(s) for s in seeds]
    shape = (height, width)
    x = np.stack([r.standard_normal(shape) for r in rngs]) if rngs else np.zeros((0, *shape))
    if dead_mask is not None:
        dead_mask = np.asarray(dead_mask, dtype=bool)
        if dead_mask.shape != shape:
            raise ShapeError(f"dead_mask shape {dead_mask.shape} != {shape}")
    traj = [x.copy()] if trajectory else None
    for k in range(sched.T, 0, -1):
        eps_pred = np.asarray(predict(x, int(taus[k - 1])), dtype=np.float64)
        if eps_pred.shape != x.shape:
            raise ShapeError(f"predictor returned {eps_pred.shape}, expected {x.shape}")
        if k > 1:
            inject = np.stack([r.standard_normal(shape) for r in rngs])
        else:
            inject = np.zeros_like(x)
        x = backward_step(x, k, eps_pred, inject, sched)
        if dead_mask is not None:
            fresh = np.stack([r.standard_normal(shape) for r in rngs]) if k > 1 else 0.0
            x = np.where(dead_mask, np.sqrt(1.0 - sched.alpha_bar[k - 1]) * fresh, x)
        if trajectory:
            traj.append(x.copy())
    return x, traj


def sample(predict, height: int, width: int, schedule: NoiseSchedule, seed: int,
           steps: int | None = None, trajectory: bool = False, dead_mask=None):
    """Draw one grid from pure noise. ``predict(x, t)`` sees a single (H, W) image."""

    def batched(x, t):
        return np.asarray(predict(x[0], t))[None]

    x0, traj = sample_batch(batched, height, width, schedule, [seed], steps=steps,
                            dead_mask=dead_mask, trajectory=trajectory)
    frames = [f[0] for f in traj] if trajectory else None
    return binarize(x0[0]), frames


def derive_seeds(seed, n: int) -> list[int]:
    """Independent per-sample seeds from a master seed (an int or a tuple of ints)."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in children]


def fixed_target_predictor(x0, schedule: NoiseSchedule):
    """Noise predictor that is exact for a single known clean image ``x0``.

    Useful as a stub: the reverse chain then lands on ``x0`` at the final step.
    """
    x0 = np.asarray(x0, dtype=np.float64)

    def predict(x, t):
        ab = schedule.alpha_bar[t]
        return (x - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)

    return predict


# Real-valued frames: header "H W" then rows of decimal reals.

def serialize_real_frame(x) -> str:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2D frame, got shape {x.shape}")
    rows = [" ".join(repr(float(v)) for v in row) for row in x]
    return f"{x.shape[0]} {x.shape[1]}\n" + "\n".join(rows) + "\n"


def parse_real_frame(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    h, w = (int(v) for v in lines[0].split())
    values = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + h]])
    if values.shape != (h, w):
        raise ShapeError(f"frame body has shape {values.shape}, header says {(h, w)}")
    return values


def dump_trajectory(frames, directory) -> list[str]:
    """Write each state as frame_<k>.pbm (binarized) and frame_<k>.txt (real values).

    Frame 0 is x_T; the last frame is x_0.
    """
    os.makedirs(directory, exist_ok=True)
    written = []
    for k, frame in enumerate(frames):
        stem = os.path.join(directory, f"frame_{k:04d}")
        with open(stem + ".pbm", "wb") as fh:
            fh.write(render_pbm(binarize(frame)))
        with open(stem + ".txt", "w") as fh:
            fh.write(serialize_real_frame(frame))
        written.append(stem)
    return written
