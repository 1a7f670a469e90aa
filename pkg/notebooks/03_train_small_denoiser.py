# %% [markdown]
# # Training a small denoiser
#
# A few hundred steps on a tiny network is enough to see the loss fall and the samples
# start to look like snakes. The full desk-scale run lives in the acceptance tests.

# %%
import numpy as np

from spsnake.dataset import DatasetSpec, build_dataset
from spsnake.diffusion import build_schedule
from spsnake.evaluate import evaluate, report
from spsnake.grid import classify, serialize_grid
from spsnake.net import DenoiserConfig, make_predictor
from spsnake.training import fit, set_deterministic, smoothed_loss

set_deterministic()

# %%
spec = DatasetSpec(sizes=((3, 3), (3, 4), (4, 4), (3, 5), (4, 5)), per_size_cap=200)
ds = build_dataset(spec)
print(len(ds), "training snakes")
print({k: len(v) for k, v in ds.by_size().items()})

# %% [markdown]
# A narrow network and a 200-step schedule keep this under a couple of minutes on one core.

# %%
cfg = DenoiserConfig(base_channels=16, channel_multipliers=(1, 2, 2), attention_heads=2,
                     time_embed_dim=32, groups=8, timesteps=200)
sched = build_schedule(200, 1e-3, 0.1)
trainer = fit(ds, 600, batch_size=16, seed=0, lr=1e-3, config=cfg, schedule=sched)
hist = np.array(trainer.history)
print(f"first step {hist[0]:.3f}, mean of last 100 {smoothed_loss(hist, 100):.3f}")

# %%
predict = make_predictor(trainer.model)
records = evaluate(predict, [(3, 4), (4, 4)], 50, seed=1, schedule=sched)
print(report(records, "text"))

# %% [markdown]
# The best snake found at 4x4, next to its structural report.

# %%
best = records[1].best_snakes[:1]
for g in best:
    print(serialize_grid(g))
    print(classify(g).to_line())
