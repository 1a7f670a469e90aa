# %% [markdown]
# # Snakes on small grids
#
# A snake is a set of live cells that forms an induced path: every cell touches at most
# two others, and no two cells touch unless they are consecutive along the path.
# This walk-through classifies a few grids, then finds the longest snakes exactly.

# %%
from spsnake.grid import Motif, classify, count_motifs, density_profile, parse_grid, serialize_grid
from spsnake.enumeration import (
    bound_report,
    construct_serpentine,
    enumerate_maximal_snakes,
    known_max_length,
    max_snake_length,
)

# %%
snake = parse_grid("""3 4
1111
0001
1111""")
blob = parse_grid("""3 4
1110
1110
0000""")
for g in (snake, blob):
    print(classify(g).to_line())

# %% [markdown]
# The second grid contains 2x2 blocks, so it is flagged as a cycle.
# Now the exact maximum for a few sizes. The search is a bitboard DFS with a
# flood-fill bound, so 6x6 finishes in well under a second.

# %%
for h, w in [(3, 3), (4, 4), (4, 6), (5, 5), (6, 6)]:
    print(max_snake_length(h, w).summary_line())

# %%
best = max_snake_length(5, 5, cap_witnesses=1).witnesses[0]
print(serialize_grid(best))
print(density_profile(best))
print("stair steps:", count_motifs(best, Motif.STAIR_STEP))

# %% [markdown]
# How many distinct maximal snakes does 4x4 have, counting rotations and reflections?

# %%
found = enumerate_maximal_snakes(4, 4)
print(found.total, "maximal snakes of length", found.max_length)

# %% [markdown]
# The serpentine construction gives a quick lower bound. Compare it with the exact value
# where enumeration is feasible (None beyond 36 cells).

# %%
print(serialize_grid(construct_serpentine(5, 7)))
for h, w in [(4, 4), (5, 5), (5, 7), (6, 6), (9, 9)]:
    print((h, w), bound_report(h, w, known_max=known_max_length(h, w)))
