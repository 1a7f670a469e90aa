import json

import pytest

from spsnake.cli import main
from spsnake.dataset import load_dataset
from spsnake.evaluate import parse_csv
from spsnake.grid import Grid, parse_grids, read_pbm


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_enumerate(capsys):
    code, out, _ = run(capsys, "enumerate", "--height", "3", "--width", "3", "--witnesses", "5")
    assert code == 0
    first, rest = out.split("\n", 1)
    assert first.startswith("H=3 W=3 max_length=7 count_at_max=2 ")
    assert len(parse_grids(rest)) == 2


def test_enumerate_all_maximal(capsys):
    code, out, _ = run(capsys, "enumerate", "--height", "2", "--width", "2", "--all-maximal")
    assert code == 0
    assert len(parse_grids(out.split("\n", 1)[1])) == 4


def test_enumerate_refusal(capsys):
    code, _, err = run(capsys, "enumerate", "--height", "9", "--width", "9")
    assert code == 1
    assert err.startswith("error code=INFEASIBLE ")
    assert err.count("\n") == 1


def test_classify(tmp_path, capsys):
    path = tmp_path / "g.txt"
    path.write_text("1 3\n111\n\n2 2\n11\n11\n")
    code, out, _ = run(capsys, "classify", "--in", str(path))
    lines = out.splitlines()
    assert code == 0 and len(lines) == 2
    assert lines[0].startswith("kind=VALID_SNAKE") and "flags=CYCLE" in lines[1]


def test_classify_parse_error(tmp_path, capsys):
    path = tmp_path / "g.txt"
    path.write_text("2 2\n01\n2X\n")
    code, _, err = run(capsys, "classify", "--in", str(path))
    assert code == 1 and "code=PARSE" in err and "line 3" in err


def test_render(tmp_path, capsys):
    src = tmp_path / "g.txt"
    src.write_text("1 2\n10\n\n1 1\n1\n")
    code, _, _ = run(capsys, "render", "--in", str(src), "--out", str(tmp_path / "out"))
    assert code == 0
    assert (tmp_path / "out" / "grid_0000.pbm").read_bytes() == b"P1\n2 1\n1 0\n"
    assert read_pbm((tmp_path / "out" / "grid_0001.pbm").read_bytes()) == Grid([[1]])


def test_construct(capsys):
    code, out, _ = run(capsys, "construct", "--height", "3", "--width", "3")
    assert out == "3 3\n111\n001\n111\n"


def test_dataset_build_and_inspect(tmp_path, capsys):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"dataset": {"sizes": [[2, 2], [3, 4]], "per_size_cap": 50}}))
    out_file = tmp_path / "d.snkd"
    code, out, _ = run(capsys, "dataset", "build", "--config", str(cfg), "--out", str(out_file))
    assert code == 0 and out.startswith("records=18 ")
    assert len(load_dataset(out_file)) == 18
    code, out, _ = run(capsys, "dataset", "inspect", "--in", str(out_file))
    assert "2x2 count=4 length=3" in out and "3x4 count=14 length=9" in out


def test_dataset_inspect_corrupt(tmp_path, capsys):
    path = tmp_path / "bad.snkd"
    path.write_bytes(b"SNKD\x01\x00\x00\x00\x02\x00\x00\x00")
    code, _, err = run(capsys, "dataset", "inspect", "--in", str(path))
    assert code == 1 and "code=LOAD" in err and "record 0" in err


@pytest.fixture(scope="module")
def tiny_checkpoint(tmp_path_factory):
    d = tmp_path_factory.mktemp("train")
    spec = d / "spec.json"
    spec.write_text(json.dumps({"sizes": [[2, 3], [3, 3]]}))
    cfg = d / "net.json"
    cfg.write_text(json.dumps({
        "denoiser": {"base_channels": 8, "channel_multipliers": [1, 1, 1],
                     "attention_heads": 1, "time_embed_dim": 8, "groups": 4},
        "schedule": {"T": 20, "beta_start": 1e-3, "beta_end": 0.2},
    }))
    assert main(["dataset", "build", "--config", str(spec), "--out", str(d / "d.snkd")]) == 0
    ckpt = d / "m.ckpt"
    assert main(["train", "--dataset", str(d / "d.snkd"), "--out", str(ckpt), "--steps", "3",
                 "--batch", "4", "--seed", "1", "--lr", "1e-3", "--config", str(cfg)]) == 0
    return ckpt


def test_train_output(tiny_checkpoint, capsys):
    assert tiny_checkpoint.exists()


def test_sample(tiny_checkpoint, tmp_path, capsys):
    code, out, _ = run(capsys, "sample", "--ckpt", str(tiny_checkpoint), "--height", "3", "--width", "3",
                       "--count", "2", "--seed", "0", "--dump-trajectory", str(tmp_path / "traj"))
    assert code == 0
    grids = parse_grids("\n".join(ln for ln in out.splitlines() if not ln.startswith("#")))
    assert len(grids) == 2 and all(g.shape == (3, 3) for g in grids)
    frames = sorted((tmp_path / "traj" / "sample_0000").glob("*.pbm"))
    assert len(frames) == 21
    code2, out2, _ = run(capsys, "sample", "--ckpt", str(tiny_checkpoint), "--height", "3", "--width", "3",
                         "--count", "2", "--seed", "0", "--steps", "5")
    assert code2 == 0


def test_eval_csv(tiny_checkpoint, capsys):
    code, out, _ = run(capsys, "eval", "--ckpt", str(tiny_checkpoint), "--sizes", "2x3,3x3",
                       "--samples", "3", "--seed", "0", "--format", "csv")
    assert code == 0
    recs = parse_csv(out)
    assert [r.size for r in recs] == [(2, 3), (3, 3)]
    assert all(r.samples == 3 for r in recs)


def test_eval_bad_sizes(tiny_checkpoint, capsys):
    code, _, err = run(capsys, "eval", "--ckpt", str(tiny_checkpoint), "--sizes", "3by3",
                       "--samples", "1", "--seed", "0")
    assert code == 1 and "code=INPUT" in err


def test_missing_file(capsys):
    code, _, err = run(capsys, "classify", "--in", "/nonexistent/file")
    assert code == 1 and "code=FILENOTFOUNDERROR" in err
