"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the verdict lines inline; they are
also printed (uncaptured) under ``-v``. Criterion 7 trains a model and takes a while.
"""

import math
import time

import numpy as np
import pytest
import torch

from spsnake.checkpoint import decode_checkpoint, encode_checkpoint
from spsnake.dataset import (
    DatasetSpec,
    build_dataset,
    decode_dataset,
    default_spec,
    encode_dataset,
)
from spsnake.diffusion import backward_step, build_schedule, forward_diffuse, NoiseSchedule
from spsnake.enumeration import max_snake_length, subset_oracle_max
from spsnake.errors import LoadError, ParseError
from spsnake.evaluate import aggregate, evaluate
from spsnake.grid import Grid, Kind, classify, parse_grids, serialize_grids, symmetry_images
from spsnake.net import DenoiserConfig, init_params, make_predictor, predict_noise, rope2d_attention
from spsnake.training import fit, set_deterministic, smoothed_loss

from .reference import naive_classify
from .test_net import TINY, _perturb


def verdict(capsys, n: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


def test_c1_oracle_equivalence(capsys):
    start = time.perf_counter()
    mismatches = []
    sizes = [(h, w) for h in range(1, 13) for w in range(h, 13) if h * w <= 12]
    for h, w in sizes:
        got, want = max_snake_length(h, w).max_length, subset_oracle_max(h, w)
        if got != want:
            mismatches.append((h, w, got, want))
    elapsed = time.perf_counter() - start
    verdict(capsys, 1, not mismatches and elapsed < 60,
            f"sizes={len(sizes)} mismatches={mismatches} runtime={elapsed:.2f}s")


def test_c2_golden_values(capsys):
    golden = {(1, n): n for n in range(1, 9)}
    golden.update({(2, 2): 3, (2, 3): 5, (3, 3): 7})
    wrong = {}
    for (h, w), want in golden.items():
        oracle = subset_oracle_max(h, w)
        exact = max_snake_length(h, w).max_length
        if not oracle == exact == want:
            wrong[(h, w)] = (oracle, exact, want)
    verdict(capsys, 2, not wrong, f"checked={len(golden)} wrong={wrong}")


def _random_grids(n, seed):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        h, w = rng.integers(1, 9, size=2)
        p = rng.uniform(0.1, 0.9)
        yield Grid((rng.random((h, w)) < p).astype(np.uint8))


def test_c3_classification(capsys):
    disagree = not_invariant = 0
    for g in _random_grids(1000, seed=2024):
        rep = classify(g)
        ref = naive_classify(g.cells.tolist())
        if (rep.kind.name, {f.name for f in rep.flags}, rep.length, rep.component_count) != (
            ref["kind"], ref["flags"], ref["length"], ref["components"]
        ):
            disagree += 1
        for img in symmetry_images(g):
            other = classify(img)
            if (other.kind, other.flags, other.length) != (rep.kind, rep.flags, rep.length):
                not_invariant += 1
    verdict(capsys, 3, disagree == 0 and not_invariant == 0,
            f"grids=1000 disagreements={disagree} symmetry_violations={not_invariant}")


def test_c4_diffusion_algebra(capsys):
    s = build_schedule()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        t = int(rng.integers(1, s.T + 1))
        x0 = rng.random((5, 5))
        eps = rng.standard_normal((5, 5))
        xt = forward_diffuse(x0, t, eps, s)
        got = backward_step(xt, t, eps, np.zeros_like(eps), s)
        mean = (xt - s.beta[t] / math.sqrt(1 - s.alpha_bar[t]) * eps) / math.sqrt(s.alpha[t])
        worst = max(worst, float(np.max(np.abs(got - mean) / np.maximum(np.abs(mean), 1e-12))))

    flat = NoiseSchedule.from_betas([0.0, 0.1, 0.0], allow_zero=True)
    x = rng.standard_normal((3, 4))
    noise = rng.standard_normal((3, 4))
    identity = np.array_equal(backward_step(x, 1, noise, noise, flat), x) and np.array_equal(
        backward_step(x, 3, noise, noise, flat), x)

    recurrence = s.alpha_bar[0] == 1.0 and all(
        s.alpha_bar[t] == s.alpha_bar[t - 1] * s.alpha[t] for t in range(1, s.T + 1))
    ok = worst < 1e-6 and identity and recurrence
    verdict(capsys, 4, ok, f"worst_rel_err={worst:.2e} beta0_identity={identity} "
                           f"alpha_bar_recurrence_exact={recurrence}")


def test_c5_stepwise_forward(capsys):
    rng = np.random.default_rng(11)
    n = 10_000
    x0 = np.array([0.0, 1.0, 0.5, 1.0])
    failures = []
    for trial in range(5):
        T = int(rng.integers(20, 300))
        lo = float(rng.uniform(1e-5, 1e-3))
        hi = float(rng.uniform(0.01, 0.05))
        s = build_schedule(T, lo, hi)
        t = int(rng.integers(1, T + 1))
        x = np.tile(x0, (n, 1))
        for k in range(1, t + 1):
            x = math.sqrt(s.alpha[k]) * x + math.sqrt(s.beta[k]) * rng.standard_normal(x.shape)
        std_target = math.sqrt(1 - s.alpha_bar[t])
        z_mean = np.abs(x.mean(axis=0) - math.sqrt(s.alpha_bar[t]) * x0) / (std_target / math.sqrt(n))
        z_std = np.abs(x.std(axis=0, ddof=1) - std_target) / (std_target / math.sqrt(2 * (n - 1)))
        if z_mean.max() >= 3 or z_std.max() >= 3:
            failures.append((T, t, float(z_mean.max()), float(z_std.max())))
    verdict(capsys, 5, not failures, f"settings=5 trials={n} failures={failures}")


def _fd_gradient_worst(samples_per_tensor):
    torch.manual_seed(0)
    model = _perturb(init_params(TINY, 0, dtype=torch.float64), seed=1)
    x = torch.randn(2, 1, 8, 8, dtype=torch.float64)
    t = torch.tensor([3, 60])
    tgt = torch.randn(2, 1, 8, 8, dtype=torch.float64)

    def loss():
        return torch.mean((model(x, t) - tgt) ** 2)

    model.zero_grad()
    loss().backward()
    h, worst, checked = 1e-6, 0.0, 0
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.view(-1)
            gen = torch.Generator().manual_seed(len(name))
            for i in torch.randperm(flat.numel(), generator=gen)[:samples_per_tensor]:
                orig = flat[i].item()
                flat[i] = orig + h
                up = loss().item()
                flat[i] = orig - h
                down = loss().item()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                an = p.grad.view(-1)[i].item()
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
                checked += 1
    return worst, checked


def test_c6_network(capsys):
    model = _perturb(init_params(TINY, 0))
    bad_shapes = [
        (h, w) for h in range(8, 49, 8) for w in range(8, 49, 8)
        if predict_noise(model, np.zeros((h, w)), 5).shape != (h, w)
    ]
    worst_fd, checked = _fd_gradient_worst(samples_per_tensor=5)

    g = torch.Generator().manual_seed(0)
    q, k, v = (torch.randn(9, 8, generator=g, dtype=torch.float64) for _ in range(3))
    pos = torch.tensor([[r, c] for r in range(3) for c in range(3)])
    _, w1 = rope2d_attention(q, k, v, pos, return_weights=True)
    _, w2 = rope2d_attention(q, k, v, pos + torch.tensor([11, -4]), return_weights=True)
    rope_err = float(torch.max(torch.abs(w1 - w2)))

    fresh = init_params(DenoiserConfig(), 0)
    zero = np.all(predict_noise(fresh, np.random.default_rng(0).standard_normal((3, 16, 8)), 400) == 0)

    ok = not bad_shapes and worst_fd < 1e-3 and rope_err < 1e-5 and zero
    verdict(capsys, 6, ok, f"bad_shapes={bad_shapes} fd_worst_rel={worst_fd:.2e} (entries={checked}) "
                           f"rope_shift_err={rope_err:.1e} zero_init_exact={bool(zero)}")


# Desk-scale training budget for criterion 7.
TRAIN_STEPS = 5000
TRAIN_BATCH = 16
TRAIN_SEED = 0
TRAIN_LR = 1e-3
TRAIN_POLICY = "mixed"
EVAL_SEED = 1
EVAL_SIZE = (4, 6)
EVAL_SAMPLES = 200
TREND_SIZES = [(4, 4), (3, 8), (4, 6), (5, 5), (6, 6)]


@pytest.mark.slow
def test_c7_desk_training(capsys):
    set_deterministic()
    ds = build_dataset(default_spec())  # every maximal snake with at most 36 cells
    start = time.perf_counter()
    trainer = fit(ds, TRAIN_STEPS, TRAIN_BATCH, seed=TRAIN_SEED, lr=TRAIN_LR, policy=TRAIN_POLICY)
    train_time = time.perf_counter() - start
    initial = trainer.history[0]  # pre-update loss of the zero-initialised network
    final = smoothed_loss(trainer.history)
    reduction = 1.0 - final / initial

    predict = make_predictor(trainer.model)
    records = evaluate(predict, TREND_SIZES, EVAL_SAMPLES, seed=EVAL_SEED, schedule=trainer.schedule)
    by_size = {r.size: r for r in records}
    target = by_size[EVAL_SIZE]
    with capsys.disabled():
        print(f"\n  trained {TRAIN_STEPS} steps on {len(ds)} snakes in {train_time:.0f}s; "
              f"loss {initial:.4f} -> {final:.4f}")
        for r in records:
            print(f"  {r.height}x{r.width}: valid_rate={r.valid_rate:.3f} best={r.best_length} "
                  f"oracle={r.oracle_max} maximal_hits={r.maximal_hits}")
    ok = (reduction >= 0.8 and target.valid_rate >= 0.10
          and target.best_length >= target.oracle_max - 2)
    verdict(capsys, 7, ok, f"loss_reduction={reduction:.3f} {EVAL_SIZE[0]}x{EVAL_SIZE[1]} "
                           f"valid_rate={target.valid_rate:.3f} best={target.best_length} "
                           f"oracle={target.oracle_max}")


def test_c8_harness_accounting(capsys):
    snake9 = Grid.from_cells(3, 4, [(0, 0), (0, 1), (0, 2), (0, 3), (1, 3), (2, 3), (2, 2), (2, 1), (2, 0)])
    branch = Grid([[1, 1, 1, 0], [0, 1, 0, 0], [0, 0, 0, 0]])
    cycle = Grid([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 0, 0]])
    outcomes = [snake9, branch, cycle, Grid.zeros(3, 4), None, snake9]
    rec = aggregate(3, 4, outcomes)
    hand = (rec.samples, rec.valid_snakes, rec.malformed, rec.empty, rec.diverged,
            rec.branching, rec.cycle, rec.best_length, rec.maximal_hits)
    conserved = rec.valid_snakes + rec.empty + rec.malformed + rec.diverged == rec.samples

    def nan_predictor(x, t):
        return np.full_like(x, np.nan)

    (div,) = evaluate(nan_predictor, [(2, 3)], 4, 0, build_schedule(10))
    stub_ok = div.diverged == 4 and div.valid_snakes + div.empty + div.malformed + div.diverged == 4
    ok = conserved and hand == (6, 2, 2, 1, 1, 1, 1, 9, 2) and stub_ok
    verdict(capsys, 8, ok, f"counts={hand} conserved={conserved} divergence_stub={stub_ok}")


def test_c9_format_round_trips(capsys):
    results = {}
    gs = list(_random_grids(50, seed=5))
    text = serialize_grids(gs)
    results["grid_text"] = parse_grids(text) == gs and serialize_grids(parse_grids(text)) == text
    try:
        parse_grids("2 2\n01\n01\n\n2 2\n11\n1x\n")
        results["grid_error"] = False
    except ParseError as exc:
        results["grid_error"] = exc.line == 7

    ds = build_dataset(DatasetSpec(sizes=((2, 3), (3, 4), (4, 5)), per_size_cap=20))
    blob = encode_dataset(ds)
    results["dataset"] = encode_dataset(decode_dataset(blob)) == blob
    bad = bytearray(blob)
    bad[-1] ^= 0xFF
    try:
        decode_dataset(bytes(bad))
        results["dataset_error"] = False
    except LoadError as exc:
        results["dataset_error"] = exc.index == len(ds) - 1

    model = _perturb(init_params(TINY, 1))
    sched = build_schedule(TINY.timesteps)
    ck = encode_checkpoint(model, sched)
    back, _ = decode_checkpoint(ck)
    results["checkpoint"] = encode_checkpoint(back, sched) == ck
    tampered = bytearray(ck)
    tampered[ck.index(b'"groups":4') + len('"groups":')] = ord("2")
    try:
        decode_checkpoint(bytes(tampered))
        results["checkpoint_error"] = False
    except LoadError:
        results["checkpoint_error"] = True
    verdict(capsys, 9, all(results.values()), " ".join(f"{k}={v}" for k, v in results.items()))


def test_reference_kinds_cover_all():
    """Sanity check that the random corpus for criterion 3 exercises every kind."""
    kinds = {classify(g).kind for g in _random_grids(1000, seed=2024)}
    assert kinds == set(Kind)
