import json
import math
import os
from pathlib import Path

import pytest

import kgformer

DATA = Path(os.environ.get("KGF_DATA", Path(__file__).resolve().parents[2] / "data"))


def test_metrics_example():
    m = kgformer.compute_metrics([1, 2, 4])
    assert m["mrr"] == pytest.approx(7 / 12, abs=1e-15)
    assert m["hits1"] == pytest.approx(1 / 3)
    assert m["hits3"] == pytest.approx(2 / 3)
    assert m["count"] == 3


def test_rank_ties_and_mask():
    # gold ties with one candidate, one higher candidate is masked out
    assert kgformer.rank_answer([0.5, 0.9, 0.5, 0.1], 0, [0, 1, 0, 0]) == 1.5


def test_kernel_sweep():
    r = kgformer.kernel_error_sweep(samples=2000, dim=8, seed=3)
    assert r["max_gap"] <= r["bound"]
    assert r["supremum"] == pytest.approx(math.e - 2)


def test_gradcheck():
    r = kgformer.model_gradcheck(seed=0)
    assert r["passed"]
    assert r["worst_rel_error"] <= 1e-4


def test_wl_regular_graph_single_class():
    hexagon = [(i, (i + 1) % 6) for i in range(6)]
    assert kgformer.wl_colors(6, hexagon) == [0] * 6
    path = [(0, 1), (1, 2)]
    c = kgformer.wl_colors(3, path)
    assert c[0] == c[2] != c[1]


def test_bad_config_raises():
    with pytest.raises(Exception):
        kgformer.train("[model]\nhidden_dim = 0\n")


def test_train_and_evaluate_tiny(tmp_path):
    d = tmp_path / "ds"
    d.mkdir()
    lines = {"train": [], "valid": [], "test": []}
    for i in range(12):
        split = "valid" if i % 6 == 4 else "test" if i % 6 == 5 else "train"
        lines[split].append(f"e{i}\tnext\te{(i + 1) % 12}")
        lines["train"].append(f"e{i}\tprev\te{(i + 11) % 12}")
    for name, rows in lines.items():
        (d / f"{name}.txt").write_text("\n".join(rows) + "\n")
    cfg = "[model]\nhidden_dim = 4\n[train]\nepochs = 1\nnum_negatives = 4\nrecord_wall_time = false\n"
    ckpt = tmp_path / "m.ckpt"
    log = kgformer.train(cfg, dataset=str(d), checkpoint=str(ckpt))
    records = [json.loads(x) for x in log]
    assert [r["split"] for r in records] == ["train", "valid"]
    assert math.isfinite(records[0]["loss"])
    m = kgformer.evaluate(str(ckpt), str(d), split="test")
    assert m["count"] == 4
    assert 0 < m["mrr"] <= 1
