"""Generate grids at given sizes, classify them and aggregate per-size statistics."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .dataset import canvas_shape
from .diffusion import NoiseSchedule, binarize, derive_seeds, sample_batch
from .enumeration import known_max_length, serpentine_length
from .grid import Flag, Grid, Kind, classify, density_profile, render_pbm


@dataclass
class EvalRecord:
    height: int
    width: int
    samples: int = 0
    valid_snakes: int = 0
    empty: int = 0
    malformed: int = 0
    branching: int = 0
    cycle: int = 0
    multiple_components: int = 0
    diverged: int = 0
    length_min: int | None = None
    length_max: int | None = None
    length_mean: float | None = None
    best_length: int = 0
    oracle_max: int | None = None
    serpentine_lower: int = 0
    maximal_hits: int | None = None
    mean_border_density: float | None = None
    mean_interior_density: float | None = None
    best_snakes: list = field(default_factory=list, repr=False, compare=False)

    @property
    def size(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def valid_rate(self) -> float:
        return self.valid_snakes / self.samples if self.samples else 0.0

    @property
    def malformation_counts(self) -> dict:
        return {
            Flag.BRANCHING: self.branching,
            Flag.CYCLE: self.cycle,
            Flag.MULTIPLE_COMPONENTS: self.multiple_components,
            Kind.EMPTY: self.empty,
        }


def aggregate(height: int, width: int, outcomes) -> EvalRecord:
    """Fold per-sample outcomes (a Grid, or None for a divergent sample) into a record."""
    rec = EvalRecord(height, width, serpentine_lower=serpentine_length(height, width),
                     oracle_max=known_max_length(height, width))
    lengths, borders, interiors, snakes = [], [], [], []
    for g in outcomes:
        rec.samples += 1
        if g is None:
            rec.diverged += 1
            continue
        report = classify(g)
        if report.kind is Kind.EMPTY:
            rec.empty += 1
        elif report.kind is Kind.MALFORMED:
            rec.malformed += 1
            rec.branching += Flag.BRANCHING in report.flags
            rec.cycle += Flag.CYCLE in report.flags
            rec.multiple_components += Flag.MULTIPLE_COMPONENTS in report.flags
        else:
            rec.valid_snakes += 1
            lengths.append(report.length)
            prof = density_profile(g)
            borders.append(prof.border)
            if prof.has_interior:
                interiors.append(prof.interior)
            snakes.append(g)
    if lengths:
        rec.length_min, rec.length_max = min(lengths), max(lengths)
        rec.length_mean = float(np.mean(lengths))
        rec.best_length = rec.length_max
        rec.mean_border_density = float(np.mean(borders))
        rec.mean_interior_density = float(np.mean(interiors)) if interiors else None
        rec.best_snakes = sorted({g for g in snakes if g.count() == rec.best_length})
    if rec.oracle_max is not None:
        rec.maximal_hits = sum(1 for n in lengths if n == rec.oracle_max)
    return rec


def generate(predict, height: int, width: int, schedule: NoiseSchedule, seeds,
             steps: int | None = None, fix_padding: bool = True, chunk: int = 100):
    """Sample on the padded canvas and crop back; divergent samples come back as None."""
    H, W = canvas_shape(height, width)
    dead = None
    if fix_padding:
        dead = np.ones((H, W), dtype=bool)
        dead[:height, :width] = False
    out = []
    seeds = list(seeds)
    for start in range(0, len(seeds), chunk):
        with np.errstate(all="ignore"):
            x0, _ = sample_batch(predict, H, W, schedule, seeds[start : start + chunk],
                                 steps=steps, dead_mask=dead)
        for img in x0:
            crop = img[:height, :width]
            out.append(binarize(crop) if np.all(np.isfinite(crop)) else None)
    return out


def evaluate(predict, sizes, samples_per_size: int, seed: int, schedule: NoiseSchedule,
             steps: int | None = None, out_dir=None, fix_padding: bool = True) -> list[EvalRecord]:
    """Run the generation protocol at each size.

    ``predict(x, t)`` is a batched noise predictor, e.g. ``net.make_predictor(model)``
    or a stub. Sample seeds derive from (seed, H, W), so records do not depend on which
    other sizes are evaluated.
    """
    records = []
    for h, w in sizes:
        seeds = derive_seeds((seed, h, w), samples_per_size)
        grids = generate(predict, h, w, schedule, seeds, steps=steps, fix_padding=fix_padding)
        rec = aggregate(h, w, grids)
        records.append(rec)
        if out_dir is not None and rec.best_snakes:
            os.makedirs(out_dir, exist_ok=True)
            for i, g in enumerate(rec.best_snakes):
                path = os.path.join(out_dir, f"best_{h}x{w}_{i:03d}.pbm")
                with open(path, "wb") as fh:
                    fh.write(render_pbm(g))
    return records


def evaluate_checkpoint(path, sizes, samples_per_size: int, seed: int,
                        schedule: NoiseSchedule | None = None, steps: int | None = None,
                        out_dir=None, fix_padding: bool = True) -> list[EvalRecord]:
    from .checkpoint import load_checkpoint
    from .net import make_predictor

    model, ckpt_schedule = load_checkpoint(path)
    model.eval()
    return evaluate(make_predictor(model), sizes, samples_per_size, seed,
                    schedule or ckpt_schedule, steps=steps, out_dir=out_dir, fix_padding=fix_padding)


# Reports

CSV_COLUMNS = [f.name for f in fields(EvalRecord) if f.name != "best_snakes"]
_INT_COLUMNS = {f.name for f in fields(EvalRecord) if f.type in ("int", "int | None")}


def _cell(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def report(records, fmt: str = "text") -> str:
    """Per-size table. Rows are sorted by grid area, then by (H, W)."""
    rows = sorted(records, key=lambda r: (r.height * r.width, r.height, r.width))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [
        f"{'size':>7} {'area':>5} {'valid':>11} {'rate':>6} {'best':>5} {'max':>4} "
        f"{'serp':>5} {'hits':>5} {'branch':>6} {'cycle':>6} {'forest':>6} {'empty':>5}  trend"
    ]
    for r in rows:
        opt = lambda v: "-" if v is None else str(v)
        bar = "#" * round(20 * r.valid_rate)
        lines.append(
            f"{r.height:>3}x{r.width:<3} {r.height * r.width:>5} {r.valid_snakes:>5}/{r.samples:<5} "
            f"{r.valid_rate:>6.1%} {r.best_length:>5} {opt(r.oracle_max):>4} {r.serpentine_lower:>5} "
            f"{opt(r.maximal_hits):>5} {r.branching:>6} {r.cycle:>6} {r.multiple_components:>6} "
            f"{r.empty:>5}  {bar}"
        )
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[EvalRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for name in CSV_COLUMNS:
            v = row[name]
            if v == "":
                kw[name] = None
            elif name in _INT_COLUMNS:
                kw[name] = int(v)
            else:
                kw[name] = float(v)
        out.append(EvalRecord(**kw))
    return out
