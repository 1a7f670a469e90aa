"""Training loop over a dataset of maximal snakes."""

from __future__ import annotations

import logging

import numpy as np
import torch

from .dataset import BatchSampler, DatasetFile
from .diffusion import NoiseSchedule, build_schedule, derive_seeds
from .net import DenoiserConfig, Trainer, init_params

log = logging.getLogger(__name__)


def fit(dataset: DatasetFile, steps: int, batch_size: int = 16, seed: int = 0,
        lr: float = 1e-4, config: DenoiserConfig | None = None,
        schedule: NoiseSchedule | None = None, masked_loss: bool = False,
        policy: str = "mixed", log_every: int = 0, trainer: Trainer | None = None) -> Trainer:
    """Train (or continue training) a denoiser; every random draw derives from ``seed``."""
    if trainer is None:
        schedule = schedule or build_schedule(config.timesteps if config else 1000)
        config = config or DenoiserConfig(timesteps=schedule.T)
        trainer = Trainer(init_params(config, seed), schedule, lr=lr, masked_loss=masked_loss)
    sampler = BatchSampler(dataset, batch_size, seed=seed, policy=policy)
    step_seeds = derive_seeds(seed, steps)
    trainer.model.train()
    for i in range(steps):
        batch = sampler.next()
        loss = trainer.step(batch.images, step_seeds[i], mask=batch.masks)
        if log_every and (i + 1) % log_every == 0:
            recent = np.mean(trainer.history[-log_every:])
            log.info("step %d loss %.4f", trainer.step_index, recent)
    trainer.model.eval()
    return trainer


def smoothed_loss(history, window: int = 200) -> float:
    tail = history[-window:]
    return float(np.mean(tail)) if len(tail) else float("nan")


def set_deterministic(threads: int = 1) -> None:
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)
