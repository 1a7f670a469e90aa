"""Binary grids, 4-connexity structure, malformation classification and text/PBM I/O."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsError, DomainError, ParseError

Cell = tuple[int, int]

_OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class Grid:
    """Immutable H x W matrix of cells, 1 = living (black), 0 = dead (white)."""

    __slots__ = ("_cells",)

    def __init__(self, cells):
        arr = np.asarray(cells)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DomainError(f"grid must be a non-empty 2D matrix, got shape {arr.shape}")
        if arr.dtype != np.bool_ and not np.all((arr == 0) | (arr == 1)):
            raise DomainError("grid cells must be 0 or 1")
        arr = np.array(arr, dtype=np.uint8)
        arr.flags.writeable = False
        self._cells = arr

    @classmethod
    def zeros(cls, height: int, width: int) -> Grid:
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_cells(cls, height: int, width: int, living) -> Grid:
        arr = np.zeros((height, width), dtype=np.uint8)
        for r, c in living:
            arr[r, c] = 1
        return cls(arr)

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    @property
    def height(self) -> int:
        return self._cells.shape[0]

    @property
    def width(self) -> int:
        return self._cells.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._cells.shape

    def living(self) -> list[Cell]:
        """Living cells in row-major order."""
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(self._cells))]

    def count(self) -> int:
        return int(self._cells.sum())

    def key(self) -> tuple[int, int, bytes]:
        return (self.height, self.width, self._cells.tobytes())

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __lt__(self, other):
        return self.key() < other.key()

    def __repr__(self):
        rows = "/".join("".join(map(str, row)) for row in self._cells)
        return f"Grid({self.height}x{self.width}: {rows})"


def _check_cell(grid: Grid, cell: Cell) -> None:
    r, c = cell
    if not (0 <= r < grid.height and 0 <= c < grid.width):
        raise BoundsError(f"cell {cell} outside {grid.height}x{grid.width} grid")


def neighbors(height: int, width: int, cell: Cell):
    r, c = cell
    for dr, dc in _OFFSETS:
        rr, cc = r + dr, c + dc
        if 0 <= rr < height and 0 <= cc < width:
            yield rr, cc


def degree(grid: Grid, cell: Cell) -> int:
    """Number of living 4-neighbours of a living cell."""
    _check_cell(grid, cell)
    if not grid.cells[cell]:
        raise DomainError(f"cell {cell} is dead; degree is defined for living cells only")
    return sum(int(grid.cells[n]) for n in neighbors(grid.height, grid.width, cell))


def degree_map(grid: Grid) -> np.ndarray:
    """Living-neighbour counts for every cell (dead cells included), as an int array."""
    a = grid.cells.astype(np.int16)
    deg = np.zeros_like(a)
    deg[1:, :] += a[:-1, :]
    deg[:-1, :] += a[1:, :]
    deg[:, 1:] += a[:, :-1]
    deg[:, :-1] += a[:, 1:]
    return deg


def edge_count(grid: Grid) -> int:
    """Number of edge-adjacent pairs of living cells."""
    a = grid.cells
    return int((a[1:, :] & a[:-1, :]).sum() + (a[:, 1:] & a[:, :-1]).sum())


def components(grid: Grid) -> list[frozenset[Cell]]:
    """Maximal 4-connected sets of living cells, ordered by their first cell in row-major order."""
    h, w = grid.shape
    seen = np.zeros((h, w), dtype=bool)
    out = []
    for start in grid.living():
        if seen[start]:
            continue
        seen[start] = True
        comp = [start]
        queue = deque([start])
        while queue:
            cell = queue.popleft()
            for n in neighbors(h, w, cell):
                if grid.cells[n] and not seen[n]:
                    seen[n] = True
                    comp.append(n)
                    queue.append(n)
        out.append(frozenset(comp))
    return out


class Kind(enum.Enum):
    EMPTY = "EMPTY"
    VALID_SNAKE = "VALID_SNAKE"
    MALFORMED = "MALFORMED"


class Flag(enum.Enum):
    BRANCHING = "BRANCHING"
    CYCLE = "CYCLE"
    MULTIPLE_COMPONENTS = "MULTIPLE_COMPONENTS"


@dataclass(frozen=True)
class StructureReport:
    kind: Kind
    flags: frozenset = field(default_factory=frozenset)
    length: int = 0
    component_count: int = 0
    endpoints: tuple = ()
    max_degree: int = 0

    @property
    def is_snake(self) -> bool:
        return self.kind is Kind.VALID_SNAKE

    def to_line(self) -> str:
        flags = ",".join(sorted(f.value for f in self.flags)) or "-"
        ends = ";".join(f"{r},{c}" for r, c in self.endpoints) or "-"
        return (
            f"kind={self.kind.value} flags={flags} length={self.length} "
            f"components={self.component_count} max_degree={self.max_degree} endpoints={ends}"
        )


def classify(grid: Grid) -> StructureReport:
    """Decide whether the living cells form a single snake, and which malformations occur otherwise."""
    length = grid.count()
    if length == 0:
        return StructureReport(Kind.EMPTY)
    deg = degree_map(grid)
    alive = grid.cells.astype(bool)
    live_deg = np.where(alive, deg, 0)
    max_degree = int(live_deg.max())
    comps = components(grid)

    flags = set()
    if max_degree >= 3:
        flags.add(Flag.BRANCHING)
    if len(comps) >= 2:
        flags.add(Flag.MULTIPLE_COMPONENTS)
    for comp in comps:
        # sum of degrees inside a component is twice its edge count
        edges = sum(int(deg[c]) for c in comp) // 2
        if edges >= len(comp):
            flags.add(Flag.CYCLE)
            break

    endpoints = tuple((int(r), int(c)) for r, c in zip(*np.nonzero(alive & (deg <= 1))))
    kind = Kind.MALFORMED if flags else Kind.VALID_SNAKE
    return StructureReport(kind, frozenset(flags), length, len(comps), endpoints, max_degree)


def is_snake(grid: Grid) -> bool:
    return classify(grid).kind is Kind.VALID_SNAKE


@dataclass(frozen=True)
class DensityProfile:
    overall: float
    border: float
    interior: float
    has_interior: bool
    living: int
    border_living: int
    border_cells: int
    interior_living: int
    interior_cells: int


def border_mask(height: int, width: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return mask


def density_profile(grid: Grid) -> DensityProfile:
    h, w = grid.shape
    border = border_mask(h, w)
    alive = grid.cells.astype(bool)
    living = int(alive.sum())
    b_cells = int(border.sum())
    b_living = int((alive & border).sum())
    i_cells = h * w - b_cells
    i_living = living - b_living
    has_interior = i_cells > 0
    return DensityProfile(
        overall=living / (h * w),
        border=b_living / b_cells,
        interior=i_living / i_cells if has_interior else 0.0,
        has_interior=has_interior,
        living=living,
        border_living=b_living,
        border_cells=b_cells,
        interior_living=i_living,
        interior_cells=i_cells,
    )


class Motif(enum.Enum):
    STAIR_STEP = "STAIR_STEP"
    DEAD_TRIANGLE = "DEAD_TRIANGLE"


# right triangles of six dead cells in a 3x3 box, right angle at each corner
_TRIANGLE = np.array([[1, 1, 1], [1, 1, 0], [1, 0, 0]], dtype=bool)
_TRIANGLES = [_TRIANGLE, _TRIANGLE[:, ::-1], _TRIANGLE[::-1, :], _TRIANGLE[::-1, ::-1]]


def count_motifs(grid: Grid, motif: Motif) -> int:
    a = grid.cells.astype(np.int16)
    h, w = a.shape
    if motif is Motif.STAIR_STEP:
        if h < 2 or w < 2:
            return 0
        window = a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:]
        return int((window == 3).sum())
    if motif is Motif.DEAD_TRIANGLE:
        dead = a == 0
        total = 0
        for r in range(h - 2):
            for c in range(w - 2):
                box = dead[r : r + 3, c : c + 3]
                total += sum(bool(np.all(box[tri])) for tri in _TRIANGLES)
        return total
    raise DomainError(f"unknown motif {motif!r}")


# Rectangle symmetries. Square grids get the full dihedral group of order 8.

def _transforms(square: bool):
    ops = [
        lambda a: a,
        lambda a: a[::-1, ::-1],
        lambda a: a[::-1, :],
        lambda a: a[:, ::-1],
    ]
    if square:
        ops += [
            lambda a: a.T,
            lambda a: a[::-1, ::-1].T,
            lambda a: np.rot90(a, 1),
            lambda a: np.rot90(a, -1),
        ]
    return ops


def symmetry_images(grid: Grid) -> list[Grid]:
    """All images of the grid under the rectangle's symmetry group (with repeats)."""
    return [Grid(op(grid.cells)) for op in _transforms(grid.height == grid.width)]


def map_cell(cell: Cell, height: int, width: int) -> list[Cell]:
    """Images of a single cell coordinate under the same ordered list of symmetries."""
    probe = np.zeros((height, width), dtype=np.uint8)
    probe[cell] = 1
    out = []
    for op in _transforms(height == width):
        r, c = np.argwhere(op(probe))[0]
        out.append((int(r), int(c)))
    return out


# Text and PBM formats

def serialize_grid(grid: Grid) -> str:
    rows = ["".join(str(int(v)) for v in row) for row in grid.cells]
    return f"{grid.height} {grid.width}\n" + "\n".join(rows)


def _parse_block(lines: list[str], first_line: int) -> Grid:
    header = lines[0].split()
    if len(header) != 2 or not all(tok.isdigit() for tok in header):
        raise ParseError(f"expected header 'H W', got {lines[0]!r}", first_line)
    h, w = int(header[0]), int(header[1])
    if h < 1 or w < 1:
        raise ParseError("grid dimensions must be positive", first_line)
    if len(lines) - 1 < h:
        raise ParseError(f"expected {h} rows, got {len(lines) - 1}", first_line + len(lines))
    if len(lines) - 1 > h:
        raise ParseError("unexpected extra row", first_line + h + 1)
    cells = np.zeros((h, w), dtype=np.uint8)
    for i, row in enumerate(lines[1:]):
        lineno = first_line + 1 + i
        if len(row) != w:
            raise ParseError(f"expected {w} characters, got {len(row)}", lineno)
        if set(row) - {"0", "1"}:
            raise ParseError(f"invalid characters in {row!r}", lineno)
        cells[i] = [ch == "1" for ch in row]
    return Grid(cells)


def parse_grids(text: str) -> list[Grid]:
    """Parse a file of grids separated by blank lines."""
    grids = []
    block: list[str] = []
    start = 0
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line.strip():
            if not block:
                start = lineno
            block.append(line)
        elif block:
            grids.append(_parse_block(block, start))
            block = []
    if block:
        grids.append(_parse_block(block, start))
    return grids


def parse_grid(text: str) -> Grid:
    grids = parse_grids(text)
    if len(grids) != 1:
        raise ParseError(f"expected exactly one grid, found {len(grids)}", 1)
    return grids[0]


def serialize_grids(grids) -> str:
    return "\n\n".join(serialize_grid(g) for g in grids) + "\n"


def render_pbm(grid: Grid) -> bytes:
    """Plain (P1) PBM, one pixel per cell, living cells black."""
    rows = "".join(" ".join(str(int(v)) for v in row) + "\n" for row in grid.cells)
    return f"P1\n{grid.width} {grid.height}\n{rows}".encode("ascii")


def read_pbm(data: bytes) -> Grid:
    """Minimal reader for plain PBM, comments allowed."""
    tokens = []
    for line in data.decode("ascii").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P1":
        raise ParseError("not a plain PBM file", 1)
    w, h = int(tokens[1]), int(tokens[2])
    bits = "".join(tokens[3:])
    if len(bits) != w * h:
        raise ParseError(f"expected {w * h} pixels, got {len(bits)}")
    return Grid(np.array([int(b) for b in bits], dtype=np.uint8).reshape(h, w))
