"""Command line entry point: ``spsnake <command> ...``.

Errors print one line ``error code=<CODE> message=<text>`` to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter

import numpy as np

from . import diffusion, enumeration, grid
from .dataset import (
    DatasetSpec,
    build_dataset,
    canvas_shape,
    load_dataset,
    save_dataset,
)
from .errors import InputError, SnakeError


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as fh:
        return fh.read()


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def cmd_enumerate(args):
    if args.all_maximal:
        found = enumeration.enumerate_maximal_snakes(args.height, args.width, cap=args.witnesses or None)
        res = enumeration.max_snake_length(args.height, args.width, use_symmetry=False)
        print(res.summary_line())
        print(grid.serialize_grids(found.snakes), end="")
        if found.truncated:
            print(f"truncated: {len(found.snakes)} of {found.total}", file=sys.stderr)
        return
    res = enumeration.max_snake_length(args.height, args.width, cap_witnesses=args.witnesses)
    print(res.summary_line())
    if args.witnesses:
        print(grid.serialize_grids(res.witnesses), end="")


def cmd_classify(args):
    for g in grid.parse_grids(_read(args.input)):
        print(grid.classify(g).to_line())


def cmd_render(args):
    os.makedirs(args.out, exist_ok=True)
    for i, g in enumerate(grid.parse_grids(_read(args.input))):
        with open(os.path.join(args.out, f"grid_{i:04d}.pbm"), "wb") as fh:
            fh.write(grid.render_pbm(g))


def cmd_construct(args):
    print(grid.serialize_grid(enumeration.construct_serpentine(args.height, args.width)))


def cmd_dataset_build(args):
    cfg = _load_config(args.config)
    spec = DatasetSpec.from_dict(cfg.get("dataset", cfg))
    ds = build_dataset(spec)
    save_dataset(ds, args.out)
    print(f"records={len(ds)} sizes={len(ds.sizes())} out={args.out}")


def cmd_dataset_inspect(args):
    ds = load_dataset(args.input, validate=not args.no_validate)
    print(f"version={ds.version} records={len(ds)}")
    for (h, w), n in sorted(Counter(g.shape for g in ds.records).items()):
        print(f"{h}x{w} count={n} length={ds.by_size()[(h, w)][0].count()}")
    if args.export:
        with open(args.export, "w") as fh:
            fh.write(grid.serialize_grids(ds.records))


def _schedule_from(cfg: dict, timesteps: int | None):
    sched = dict(cfg.get("schedule", {}))
    if timesteps is not None:
        sched["T"] = timesteps
    return diffusion.build_schedule(sched.get("T", 1000), sched.get("beta_start", 1e-4),
                                    sched.get("beta_end", 0.02))


def cmd_train(args):
    from .checkpoint import save_checkpoint
    from .net import DenoiserConfig
    from .training import fit, set_deterministic, smoothed_loss

    set_deterministic()
    cfg = _load_config(args.config)
    schedule = _schedule_from(cfg, args.timesteps)
    net_cfg = DenoiserConfig.from_dict({**cfg.get("denoiser", {}), "timesteps": schedule.T})
    ds = load_dataset(args.dataset, validate=False)
    trainer = fit(ds, args.steps, args.batch, seed=args.seed, lr=args.lr, config=net_cfg,
                  schedule=schedule, masked_loss=args.masked_loss, policy=args.policy,
                  log_every=args.log_every)
    save_checkpoint(trainer.model, schedule, args.out)
    first = trainer.history[0] if trainer.history else float("nan")
    print(f"steps={trainer.step_index} initial_loss={first:.6f} "
          f"final_loss={smoothed_loss(trainer.history):.6f} out={args.out}")


def cmd_sample(args):
    from .checkpoint import load_checkpoint
    from .net import make_predictor

    model, schedule = load_checkpoint(args.ckpt)
    predict = make_predictor(model)
    H, W = canvas_shape(args.height, args.width)
    dead = None
    if not args.free_padding:
        dead = np.ones((H, W), dtype=bool)
        dead[: args.height, : args.width] = False
    seeds = diffusion.derive_seeds((args.seed, args.height, args.width), args.count)
    x0, traj = diffusion.sample_batch(predict, H, W, schedule, seeds, steps=args.steps,
                                      dead_mask=dead, trajectory=bool(args.dump_trajectory))
    if args.dump_trajectory:
        for i in range(args.count):
            frames = [f[i, : args.height, : args.width] for f in traj]
            diffusion.dump_trajectory(frames, os.path.join(args.dump_trajectory, f"sample_{i:04d}"))
    for img in x0:
        g = diffusion.binarize(img[: args.height, : args.width])
        print("# " + grid.classify(g).to_line())
        print(grid.serialize_grid(g))
        print()


def _parse_sizes(text: str):
    sizes = []
    for tok in text.split(","):
        h, _, w = tok.strip().lower().partition("x")
        if not (h.isdigit() and w.isdigit()):
            raise InputError(f"bad size {tok!r}; expected HxW")
        sizes.append((int(h), int(w)))
    return sizes


def cmd_eval(args):
    from .evaluate import evaluate_checkpoint, report

    records = evaluate_checkpoint(args.ckpt, _parse_sizes(args.sizes), args.samples, args.seed,
                                  steps=args.steps, out_dir=args.out,
                                  fix_padding=not args.free_padding)
    print(report(records, args.format), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spsnake", description="Maximal snake polyomino toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enumerate", help="exact maximal snake length")
    e.add_argument("--height", type=int, required=True)
    e.add_argument("--width", type=int, required=True)
    e.add_argument("--witnesses", type=int, default=0, help="number of witness grids to print")
    e.add_argument("--all-maximal", action="store_true", help="print every maximal snake")
    e.set_defaults(func=cmd_enumerate)

    c = sub.add_parser("classify", help="classify grids from a text file")
    c.add_argument("--in", dest="input", required=True)
    c.set_defaults(func=cmd_classify)

    r = sub.add_parser("render", help="render grids to PBM files")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--format", choices=["pbm"], default="pbm")
    r.set_defaults(func=cmd_render)

    k = sub.add_parser("construct", help="serpentine lower-bound snake")
    k.add_argument("--height", type=int, required=True)
    k.add_argument("--width", type=int, required=True)
    k.set_defaults(func=cmd_construct)

    d = sub.add_parser("dataset", help="build or inspect datasets")
    dsub = d.add_subparsers(dest="dataset_command", required=True)
    db = dsub.add_parser("build")
    db.add_argument("--config", required=True)
    db.add_argument("--out", required=True)
    db.set_defaults(func=cmd_dataset_build)
    di = dsub.add_parser("inspect")
    di.add_argument("--in", dest="input", required=True)
    di.add_argument("--no-validate", action="store_true")
    di.add_argument("--export", help="also write all records in grid text format")
    di.set_defaults(func=cmd_dataset_inspect)

    t = sub.add_parser("train", help="train the denoiser")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--batch", type=int, required=True)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--timesteps", type=int)
    t.add_argument("--masked-loss", action="store_true")
    t.add_argument("--policy", choices=["mixed", "stratified"], default="mixed")
    t.add_argument("--config", help="JSON with optional 'denoiser' and 'schedule' sections")
    t.add_argument("--log-every", type=int, default=100)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="generate grids from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--height", type=int, required=True)
    s.add_argument("--width", type=int, required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--dump-trajectory")
    s.add_argument("--free-padding", action="store_true", help="do not pin padding cells to dead")
    s.set_defaults(func=cmd_sample)

    v = sub.add_parser("eval", help="evaluate a checkpoint across sizes")
    v.add_argument("--ckpt", required=True)
    v.add_argument("--sizes", required=True, help="comma separated HxW list")
    v.add_argument("--samples", type=int, required=True)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--format", choices=["text", "csv"], default="text")
    v.add_argument("--steps", type=int)
    v.add_argument("--out", help="directory for PBM renders of the best snakes")
    v.add_argument("--free-padding", action="store_true")
    v.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except SnakeError as exc:
        print(f"error code={exc.code} message={json.dumps(str(exc))}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error code={type(exc).__name__.upper()} message={json.dumps(str(exc))}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
