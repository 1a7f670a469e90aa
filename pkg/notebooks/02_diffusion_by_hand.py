# %% [markdown]
# # The diffusion chain without a network
#
# Before training anything it helps to see the reverse chain land on a target when the
# noise predictor is perfect. `fixed_target_predictor` is that perfect predictor for one image.

# %%
import numpy as np

from spsnake.diffusion import (
    backward_step,
    binarize,
    build_schedule,
    fixed_target_predictor,
    forward_diffuse,
    sample,
)
from spsnake.grid import parse_grid, serialize_grid

# %%
sched = build_schedule(1000)
print("alpha_bar at t=1, 500, 1000:", sched.alpha_bar[[1, 500, 1000]])

# %% [markdown]
# Noise a snake forward to t=300 and take one exact reverse step with the true noise.

# %%
x0 = parse_grid("""4 4
1110
0010
0011
0001""").cells.astype(float)
rng = np.random.default_rng(0)
eps = rng.standard_normal(x0.shape)
xt = forward_diffuse(x0, 300, eps, sched)
x_prev = backward_step(xt, 300, eps, np.zeros_like(eps), sched)
print(np.round(xt, 2))
print(np.round(x_prev, 2))

# %% [markdown]
# Run the whole chain with the stub and binarise. With a perfect predictor every seed gives the target.

# %%
canvas = np.zeros((8, 8))
canvas[:4, :4] = x0
predict = fixed_target_predictor(canvas, sched)
g, frames = sample(predict, 8, 8, sched, seed=3, trajectory=True)
print(serialize_grid(g))
print(len(frames), "frames")

# %% [markdown]
# Strided sampling reuses the same predictor on 50 of the 1000 steps.

# %%
g50, _ = sample(predict, 8, 8, sched, seed=3, steps=50)
print(g50 == binarize(canvas))
