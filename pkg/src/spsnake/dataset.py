"""Training sets of maximal snakes: building, augmentation, padding, binary persistence."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .enumeration import dfs_limit, enumerate_maximal_snakes, known_max_length
from .errors import ConfigError, FeasibilityError, InputError, LoadError
from .grid import Grid, classify, Kind, symmetry_images

MAGIC = b"SNKD"
VERSION = 1


@dataclass(frozen=True)
class DatasetSpec:
    sizes: tuple
    per_size_cap: int = 1000
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(tuple(int(v) for v in s) for s in self.sizes))
        if self.per_size_cap < 1:
            raise ConfigError("per_size_cap must be positive")
        for h, w in self.sizes:
            if h < 1 or w < 1:
                raise ConfigError(f"invalid size {h}x{w}")

    @classmethod
    def from_dict(cls, d: dict) -> DatasetSpec:
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> DatasetSpec:
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


def desk_sizes(max_cells: int = 36) -> list[tuple[int, int]]:
    """All (H, W) with 1 <= H <= W and H * W <= max_cells."""
    return [(h, w) for h in range(1, max_cells + 1) for w in range(h, max_cells + 1) if h * w <= max_cells]


def default_spec(max_cells: int = 36, **kw) -> DatasetSpec:
    return DatasetSpec(sizes=tuple(desk_sizes(max_cells)), **kw)


@dataclass
class DatasetFile:
    records: list = field(default_factory=list)
    version: int = VERSION

    def __len__(self):
        return len(self.records)

    def sizes(self) -> list[tuple[int, int]]:
        return sorted({g.shape for g in self.records})

    def by_size(self) -> dict:
        out: dict = {}
        for g in self.records:
            out.setdefault(g.shape, []).append(g)
        return out


def augment_dihedral(grid: Grid) -> set[Grid]:
    """Distinct images of ``grid`` under its rectangle's symmetry group."""
    return set(symmetry_images(grid))


def build_dataset(spec: DatasetSpec) -> DatasetFile:
    limit = dfs_limit()
    for h, w in spec.sizes:
        if h * w > limit:
            raise FeasibilityError(f"size {h}x{w} exceeds the enumeration limit of {limit} cells")
    records = []
    for h, w in spec.sizes:
        found = enumerate_maximal_snakes(h, w, cap=spec.per_size_cap)
        grids = list(found.snakes)
        if spec.augment:
            orbit = set(grids)
            for g in grids:
                orbit |= augment_dihedral(g)
            grids = sorted(orbit, key=lambda g: g.cells.tobytes())
            # augmentation may overshoot the cap; keep the cap authoritative
            grids = grids[: spec.per_size_cap]
        records.extend(grids)
    return DatasetFile(records)


# Padding

@dataclass
class PaddedBatch:
    images: np.ndarray  # (n, H, W) float64
    masks: np.ndarray  # (n, H, W) uint8, 1 on original cells
    dims: list  # original (H, W) per grid

    def crop(self, i: int, images=None) -> np.ndarray:
        h, w = self.dims[i]
        src = self.images if images is None else images
        return src[i, :h, :w]


def round_up(n: int, multiple: int) -> int:
    return -(-n // multiple) * multiple


def canvas_shape(height: int, width: int, multiple: int = 8) -> tuple[int, int]:
    return round_up(height, multiple), round_up(width, multiple)


def pad_batch(grids, multiple: int = 8) -> PaddedBatch:
    """Place every grid top-left on a shared canvas sized to the batch maxima rounded up."""
    if multiple < 1:
        raise ConfigError("multiple must be >= 1")
    grids = list(grids)
    if not grids:
        raise InputError("cannot pad an empty batch")
    arrays = [np.asarray(getattr(g, "cells", g)) for g in grids]
    H = round_up(max(a.shape[0] for a in arrays), multiple)
    W = round_up(max(a.shape[1] for a in arrays), multiple)
    images = np.zeros((len(arrays), H, W), dtype=np.float64)
    masks = np.zeros((len(arrays), H, W), dtype=np.uint8)
    for i, a in enumerate(arrays):
        h, w = a.shape
        images[i, :h, :w] = a
        masks[i, :h, :w] = 1
    return PaddedBatch(images, masks, [a.shape for a in arrays])


class BatchSampler:
    """Draws training batches from a dataset.

    ``policy="mixed"`` samples records uniformly; ``"stratified"`` first picks a size
    uniformly, then records of that size, so every batch shares one canvas.
    """

    def __init__(self, dataset: DatasetFile, batch_size: int, seed: int = 0,
                 policy: str = "mixed", multiple: int = 8):
        if not len(dataset):
            raise InputError("dataset is empty")
        if policy not in ("mixed", "stratified"):
            raise ConfigError(f"unknown batch policy {policy!r}")
        self.records = dataset.records
        self.groups = dataset.by_size()
        self.keys = sorted(self.groups)
        self.batch_size = batch_size
        self.policy = policy
        self.multiple = multiple
        self.rng = np.random.default_rng(seed)

    def next(self) -> PaddedBatch:
        if self.policy == "mixed":
            idx = self.rng.integers(0, len(self.records), size=self.batch_size)
            picked = [self.records[i] for i in idx]
        else:
            key = self.keys[self.rng.integers(0, len(self.keys))]
            group = self.groups[key]
            picked = [group[i] for i in self.rng.integers(0, len(group), size=self.batch_size)]
        return pad_batch(picked, self.multiple)


# Binary format: "SNKD", u32 version, u32 count, then per record u16 H, u16 W and
# ceil(H*W/8) bytes of row-major bits (first cell in the most significant bit).

def encode_dataset(dataset: DatasetFile) -> bytes:
    parts = [MAGIC, struct.pack("<II", dataset.version, len(dataset.records))]
    for g in dataset.records:
        parts.append(struct.pack("<HH", g.height, g.width))
        parts.append(np.packbits(g.cells.reshape(-1)).tobytes())
    return b"".join(parts)


def decode_dataset(data: bytes, validate: bool = True) -> DatasetFile:
    if data[:4] != MAGIC:
        raise LoadError("bad magic bytes")
    if len(data) < 12:
        raise LoadError("truncated header")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise LoadError(f"unsupported dataset version {version}")
    pos = 12
    records = []
    for i in range(count):
        if pos + 4 > len(data):
            raise LoadError("truncated record header", i)
        h, w = struct.unpack_from("<HH", data, pos)
        pos += 4
        nbytes = -(-h * w // 8)
        if h < 1 or w < 1:
            raise LoadError(f"invalid dimensions {h}x{w}", i)
        if pos + nbytes > len(data):
            raise LoadError("truncated record body", i)
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=pos))
        pos += nbytes
        g = Grid(bits[: h * w].reshape(h, w))
        if validate:
            _validate_record(g, i)
        records.append(g)
    if pos != len(data):
        raise LoadError(f"{len(data) - pos} trailing bytes after {count} records")
    return DatasetFile(records, version)


def _validate_record(g: Grid, index: int) -> None:
    report = classify(g)
    if report.kind is not Kind.VALID_SNAKE:
        flags = ",".join(sorted(f.value for f in report.flags)) or report.kind.value
        raise LoadError(f"not a valid snake ({flags})", index)
    best = known_max_length(g.height, g.width)
    if best is not None and report.length != best:
        raise LoadError(f"length {report.length} != maximal length {best} for {g.height}x{g.width}", index)


def save_dataset(dataset: DatasetFile, path) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_dataset(dataset))


def load_dataset(path, validate: bool = True) -> DatasetFile:
    with open(path, "rb") as fh:
        return decode_dataset(fh.read(), validate=validate)
