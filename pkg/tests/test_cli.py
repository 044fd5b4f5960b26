import csv

import numpy as np
import pytest
from PIL import Image

from rindnet.cli import main
from rindnet.config import EDGE_TYPES
from rindnet.dataio import decode_labels, encode_masks, encode_prediction, load_split, write_image
from rindnet.evalbench.plots import _axes

TINY = ["--set", "wl_channels=8", "--set", "dec_channels=8", "--set", "head_channels=8",
        "--set", "att_channels=8", "--set", "crop=32"]


@pytest.fixture(scope="module")
def trained(toy_root, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = main(["train", "--data", str(toy_root), "--epochs", "1", "--limit", "2", "--out", str(out)] + TINY)
    assert code == 0
    return out


@pytest.fixture(scope="module")
def odd_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("odd")
    rng = np.random.default_rng(0)
    write_image(rng.random((3, 321, 481), dtype=np.float32), root / "images" / "odd.png")
    labels = np.zeros((4, 321, 481), np.uint8)
    labels[3, 100, 50:400] = 1
    encode_masks(labels, [root / "labels" / t / "odd.png" for t in EDGE_TYPES])
    (root / "test.lst").write_text("odd\n")
    return root


def test_train_writes_artifacts(trained):
    assert (trained / "ckpt_epoch001.pt").is_file()
    assert (trained / "ckpt_epoch001.pt.json").is_file()
    with open(trained / "loss_curve.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["epoch", "lr", "total", "edge", "attention"] and len(rows) == 1
    snapshot = (trained / "effective_config.txt").read_text()
    assert "epochs = 1" in snapshot and "wl_channels = 8" in snapshot


def test_lambda_override_equals_default(toy_root, tmp_path, capsys):
    args = ["train", "--data", str(toy_root), "--epochs", "0", "--out", str(tmp_path)] + TINY
    assert main(args) == 0
    default = capsys.readouterr().out
    assert main(args + ["--set", "lambda=0.1"]) == 0
    explicit = capsys.readouterr().out
    assert "lambda = 0.1\n" in default
    assert default == explicit


def test_flag_beats_set(toy_root, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("epochs = 9\nseed = 4\n")
    args = ["train", "--config", str(cfg), "--set", "epochs=5", "--epochs", "0",
            "--data", str(toy_root), "--out", str(tmp_path / "o")] + TINY
    assert main(args) == 0
    out = capsys.readouterr().out
    assert "epochs = 0\n" in out and "seed = 4\n" in out


def test_missing_data_root(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nowhere"), "--epochs", "1", "--out", str(tmp_path)])
    assert code == 3
    assert "nowhere" in capsys.readouterr().err


def test_bad_config_key(toy_root, tmp_path):
    assert main(["train", "--data", str(toy_root), "--set", "nonsense=1", "--out", str(tmp_path)]) == 2


def test_predict_keeps_original_size_and_is_repeatable(trained, odd_root, tmp_path):
    ckpt = str(trained / "ckpt_epoch001.pt")
    for name in ("a", "b"):
        assert main(["predict", "--checkpoint", ckpt, "--data", str(odd_root), "--out", str(tmp_path / name)]) == 0
    for t in EDGE_TYPES:
        with Image.open(tmp_path / "a" / f"odd_{t}.png") as im:
            assert im.size == (481, 321)
            assert np.asarray(im).dtype == np.uint16
        assert (tmp_path / "a" / f"odd_{t}.png").read_bytes() == (tmp_path / "b" / f"odd_{t}.png").read_bytes()


def test_predict_generic_one_map(toy_root, tmp_path):
    train_out = tmp_path / "gen"
    assert main(["train", "--data", str(toy_root), "--epochs", "0", "--out", str(train_out),
                 "--set", "generic_mode=true"] + TINY) == 0
    out = tmp_path / "pred"
    assert main(["predict", "--checkpoint", str(train_out / "ckpt_epoch000.pt"), "--data", str(toy_root),
                 "--limit", "1", "--out", str(out)]) == 0
    assert [p.name for p in out.iterdir()] == ["test_000_generic.png"]


@pytest.fixture
def gt_pred_dir(toy_root, tmp_path):
    split = load_split(toy_root, "test")
    pred = tmp_path / "gtpred"
    for sid in split.ids:
        labels = decode_labels(split.label_paths(sid))
        for k, t in enumerate(EDGE_TYPES):
            encode_prediction(labels[k].astype(float), pred / f"{sid}_{t}.png")
    return pred


def test_eval_ground_truth_prints_ones(toy_root, gt_pred_dir, tmp_path, capsys):
    assert main(["eval", "--pred", str(gt_pred_dir), "--data", str(toy_root), "--out", str(tmp_path / "e"),
                 "--no-plots"]) == 0
    out = capsys.readouterr().out
    table = out[out.index("type "):].splitlines()
    assert [line.split()[0] for line in table[1:]] == list(EDGE_TYPES) + ["average"]
    for line in table[1:]:
        assert line.split()[1:] == ["1.000", "1.000", "1.000"]


def test_eval_subset(toy_root, gt_pred_dir, tmp_path, capsys):
    assert main(["eval", "--pred", str(gt_pred_dir), "--data", str(toy_root), "--types", "depth",
                 "--out", str(tmp_path / "e"), "--no-plots"]) == 0
    out = capsys.readouterr().out
    rows = out[out.index("type "):].splitlines()[1:]
    assert len(rows) == 1 and rows[0].startswith("depth")


def test_eval_missing_prediction(toy_root, gt_pred_dir, tmp_path, capsys):
    (gt_pred_dir / "test_001_normal.png").unlink()
    code = main(["eval", "--pred", str(gt_pred_dir), "--data", str(toy_root), "--out", str(tmp_path / "e")])
    assert code == 3
    assert "test_001" in capsys.readouterr().err


def test_plot_files(toy_root, gt_pred_dir, tmp_path):
    ev = tmp_path / "e"
    assert main(["eval", "--pred", str(gt_pred_dir), "--data", str(toy_root), "--out", str(ev), "--no-plots"]) == 0
    plots = tmp_path / "plots"
    assert main(["plot", "--pr-dir", str(ev), "--out", str(plots)]) == 0
    assert sorted(p.name for p in plots.glob("*.png")) == sorted(
        [f"pr_{t}.png" for t in EDGE_TYPES] + ["pr_all.png"])


def test_plot_empty_csv(tmp_path):
    (tmp_path / "pr_depth.csv").write_text("threshold,P,R,F\n")
    assert main(["plot", "--pr-dir", str(tmp_path)]) != 0
    assert main(["plot", "--pr-dir", str(tmp_path / "none")]) != 0


def test_plot_axes_bounded():
    fig, ax = _axes("x")
    assert ax.get_xlim() == (0.0, 1.0) and ax.get_ylim() == (0.0, 1.0)
