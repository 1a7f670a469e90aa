"""Exact maximal snake lengths by pruned depth-first search over induced paths.

Cells are bits of a Python int (index ``r * W + c``). A snake grows only at its
head, and a new cell may touch no body cell other than the current head, which
keeps every cell at degree <= 2 without ever re-checking the body.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import FeasibilityError
from .grid import Grid, classify, Kind, map_cell, symmetry_images

DFS_LIMIT_ENV = "SPSNAKE_DFS_MAX_CELLS"
ORACLE_LIMIT_ENV = "SPSNAKE_ORACLE_MAX_CELLS"
DEFAULT_DFS_LIMIT = 36
DEFAULT_ORACLE_LIMIT = 20


def dfs_limit() -> int:
    return int(os.environ.get(DFS_LIMIT_ENV, DEFAULT_DFS_LIMIT))


def oracle_limit() -> int:
    return int(os.environ.get(ORACLE_LIMIT_ENV, DEFAULT_ORACLE_LIMIT))


def _check_size(height, width, limit, what):
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be positive, got {height}x{width}")
    if height * width > limit:
        raise FeasibilityError(
            f"{what} refused for {height}x{width} ({height * width} cells > limit {limit}); "
            "use construct_serpentine / bound_report instead"
        )


@dataclass
class EnumerationResult:
    height: int
    width: int
    max_length: int
    witnesses: list = field(default_factory=list)
    count_at_max: int = 0
    explored_states: int = 0
    use_symmetry: bool = True
    truncated: bool = False

    def summary_line(self) -> str:
        return (
            f"H={self.height} W={self.width} max_length={self.max_length} "
            f"count_at_max={self.count_at_max} explored_states={self.explored_states}"
        )


class _Board:
    """Bitmask geometry for an H x W rectangle."""

    def __init__(self, height: int, width: int):
        self.h, self.w = height, width
        n = height * width
        self.n = n
        self.full = (1 << n) - 1
        col0 = sum(1 << (r * width) for r in range(height))
        self.not_col0 = self.full & ~col0
        self.not_last = self.full & ~(col0 << (width - 1))
        self.nbr = []
        for i in range(n):
            r, c = divmod(i, width)
            m = 0
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rr < height and 0 <= cc < width:
                    m |= 1 << (rr * width + cc)
            self.nbr.append(m)
        # each symmetry as a permutation of cell indices
        self.perms = []
        for k in range(len(map_cell((0, 0), height, width))):
            perm = []
            for i in range(n):
                rr, cc = map_cell(divmod(i, width), height, width)[k]
                perm.append(rr * width + cc)
            self.perms.append(perm)

    def spread(self, m: int) -> int:
        w = self.w
        return (
            ((m << 1) & self.not_col0)
            | ((m >> 1) & self.not_last)
            | ((m << w) & self.full)
            | (m >> w)
        )

    def reach(self, seed: int, allowed: int) -> int:
        """Cells of ``allowed`` 4-connected to ``seed`` through ``allowed``."""
        region = seed & allowed
        frontier = region
        while frontier:
            grown = self.spread(frontier) & allowed & ~region
            region |= grown
            frontier = grown
        return region

    def transform(self, mask: int, k: int) -> int:
        perm = self.perms[k]
        out = 0
        while mask:
            low = mask & -mask
            out |= 1 << perm[low.bit_length() - 1]
            mask ^= low
        return out

    def canonical_mask(self, mask: int) -> int:
        # largest mask <=> lexicographically smallest row-major string once bit order is
        # reversed; compare the row-major strings directly to stay faithful to canonical_form
        best = None
        for k in range(len(self.perms)):
            m = self.transform(mask, k)
            s = self.as_string(m)
            if best is None or s < best[0]:
                best = (s, m)
        return best[1]

    def as_string(self, mask: int) -> str:
        return "".join("1" if mask >> i & 1 else "0" for i in range(self.n))

    def to_grid(self, mask: int) -> Grid:
        bits = np.array([(mask >> i) & 1 for i in range(self.n)], dtype=np.uint8)
        return Grid(bits.reshape(self.h, self.w))

    def start_cells(self, use_symmetry: bool) -> list[int]:
        if not use_symmetry:
            return list(range(self.n))
        reps = []
        for i in range(self.n):
            if i == min(p[i] for p in self.perms):
                reps.append(i)
        return reps


def serpentine_length(height: int, width: int) -> int:
    return -(-height // 2) * width + height // 2


def _search(height, width, use_symmetry, floor):
    """Collect every snake of maximal length (>= floor) as body masks."""
    board = _Board(height, width)
    nbr = board.nbr
    reach = board.reach
    best = floor
    found: set[int] = set()
    explored = 0

    def extend(head, body, forbidden, length):
        nonlocal best, explored
        explored += 1
        if length >= best:
            if length > best:
                best = length
                found.clear()
            found.add(body)
        # cells adjacent to the old body are already forbidden; moving the head
        # forbids every other neighbour of the current head
        nxt_forbidden = forbidden | nbr[head]
        cands = nbr[head] & ~forbidden
        while cands:
            low = cands & -cands
            cands ^= low
            c = low.bit_length() - 1
            free = ~nxt_forbidden & board.full
            bound = length + 1 + (reach(nbr[c], free) & ~nbr[head]).bit_count()
            if bound < best:
                continue
            extend(c, body | low, nxt_forbidden | low, length + 1)

    for s in board.start_cells(use_symmetry):
        bit = 1 << s
        extend(s, bit, bit, 1)
    return board, best, found, explored


def max_snake_length(height: int, width: int, cap_witnesses: int | None = None,
                     use_symmetry: bool = True, limit: int | None = None) -> EnumerationResult:
    """Exact maximal snake length in an H x W rectangle, with canonical witnesses."""
    _check_size(height, width, dfs_limit() if limit is None else limit, "enumeration")
    board, best, found, explored = _search(height, width, use_symmetry, floor=1)
    canon = sorted({board.canonical_mask(m) for m in found}, key=board.as_string)
    if use_symmetry:
        count = len(canon)
    else:
        count = len(found)
    witnesses = [board.to_grid(m) for m in canon]
    truncated = cap_witnesses is not None and len(witnesses) > cap_witnesses
    if truncated:
        witnesses = witnesses[:cap_witnesses]
    return EnumerationResult(height, width, best, witnesses, count, explored, use_symmetry, truncated)


@dataclass
class MaximalSnakes:
    snakes: list
    truncated: bool
    total: int
    max_length: int

    def __len__(self):
        return len(self.snakes)

    def __iter__(self):
        return iter(self.snakes)


@lru_cache(maxsize=None)
def _all_maximal(height: int, width: int) -> tuple[int, tuple[Grid, ...]]:
    board, best, found, _ = _search(height, width, True, floor=1)
    masks = set()
    for m in found:
        for k in range(len(board.perms)):
            masks.add(board.transform(m, k))
    grids = sorted((board.to_grid(m) for m in masks), key=lambda g: g.cells.tobytes())
    return best, tuple(grids)


def enumerate_maximal_snakes(height: int, width: int, cap: int | None = None,
                             limit: int | None = None) -> MaximalSnakes:
    """Every maximal snake (distinct cell sets, sorted), truncated to ``cap``."""
    _check_size(height, width, dfs_limit() if limit is None else limit, "enumeration")
    best, grids = _all_maximal(height, width)
    truncated = cap is not None and len(grids) > cap
    kept = list(grids[:cap]) if truncated else list(grids)
    return MaximalSnakes(kept, truncated, len(grids), best)


@lru_cache(maxsize=None)
def known_max_length(height: int, width: int) -> int | None:
    """Exact maximum snake length when within the enumeration guard, else None."""
    if height * width > dfs_limit():
        return None
    if height > width:
        height, width = width, height
    return _all_maximal(height, width)[0]


def subset_oracle_max(height: int, width: int, limit: int | None = None) -> int:
    """Largest snake by exhaustive classification of cell subsets.

    Subsets are visited by decreasing size, so the first size holding a valid snake is the maximum.
    """
    _check_size(height, width, oracle_limit() if limit is None else limit, "subset oracle")
    return _subset_scan(height, width)[0]


def subset_oracle_snakes(height: int, width: int, limit: int | None = None) -> list[Grid]:
    """All maximal snakes found by subset exhaustion."""
    _check_size(height, width, oracle_limit() if limit is None else limit, "subset oracle")
    return _subset_scan(height, width)[1]


def _subset_scan(height, width):
    n = height * width
    for size in range(n, 0, -1):
        hits = []
        for combo in itertools.combinations(range(n), size):
            flat = np.zeros(n, dtype=np.uint8)
            flat[list(combo)] = 1
            g = Grid(flat.reshape(height, width))
            if classify(g).kind is Kind.VALID_SNAKE:
                hits.append(g)
        if hits:
            return size, sorted(hits, key=lambda g: g.cells.tobytes())
    return 0, []


def construct_serpentine(height: int, width: int) -> Grid:
    """Full even rows joined by single connector cells alternating right and left."""
    if height < 1 or width < 1:
        raise ValueError(f"grid dimensions must be positive, got {height}x{width}")
    cells = np.zeros((height, width), dtype=np.uint8)
    cells[0::2, :] = 1
    for k, r in enumerate(range(1, height, 2)):
        cells[r, width - 1 if k % 2 == 0 else 0] = 1
    return Grid(cells)


@dataclass(frozen=True)
class BoundReport:
    trivial_upper: int
    serpentine_lower: int
    two_thirds_density: float
    known_max: int | None = None


def bound_report(height: int, width: int, known_max: int | None = None) -> BoundReport:
    """Trivial upper bound, constructive lower bound and the resulting fill density.

    The density is informational: no asymptotic bound is enforced.
    """
    lower = serpentine_length(height, width)
    area = height * width
    density = (known_max if known_max is not None else lower) / area
    return BoundReport(area, lower, density, known_max)


def canonical_form(grid: Grid) -> Grid:
    """Symmetry image with the lexicographically smallest row-major cell string."""
    return min(symmetry_images(grid), key=lambda g: g.cells.tobytes())
