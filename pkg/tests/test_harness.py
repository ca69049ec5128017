"""Campaign orchestration: CSV artifacts, determinism, sweeps, reports."""

import csv
import json
import os

import numpy as np
import pytest

from smia.config import parse_config
from smia.harness import (CSV_COLUMNS, HarnessError, emit_report,
                          prepare_victim, run_config, run_diagnostics, sweep,
                          write_pgm16)

TINY = """
model = mlp
train_count = 150
train_fraction = 0.8
eval_count = 10
train_lr = 0.3
train_steps = 40
train_batch = 16
methods = fgsm, dev, smia
epsilon = 0.05
iterations = 2
kernel_size = 3
kernel_sigma = 1.0
"""


@pytest.fixture(scope="module")
def tiny_cfg():
    return parse_config(TINY, seed=5)


@pytest.fixture(scope="module")
def campaign(tiny_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("campaign")
    rows = run_config(tiny_cfg, out)
    return rows, out


def read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


def test_campaign_csv_layout(campaign):
    rows, out = campaign
    table = read_csv(out / "campaign.csv")
    assert table[0] == CSV_COLUMNS
    assert [r[0] for r in table[1:]] == ["fgsm", "dev", "smia"]
    assert len(rows) == 3
    for row in rows:
        assert 0.0 <= row["adv_acc"] <= row["clean_acc"] <= 1.0
        assert row["var"] >= 0.0


def test_fgsm_row_has_no_step_cosine(campaign):
    rows, _ = campaign
    by_method = {r["method"]: r for r in rows}
    assert by_method["fgsm"]["cos_pos_frac"] is None  # single step, no pairs
    assert by_method["dev"]["cos_pos_frac"] is not None


def test_campaign_artifacts_exist(campaign):
    _, out = campaign
    names = sorted(os.listdir(out))
    assert "victim.ckpt" in names
    assert any(n.startswith("trace_smia_") for n in names)
    assert any(n.startswith("pert_dev_") and n.endswith(".pgm") for n in names)
    with open(out / "trace_dev_batch000.json") as f:
        payload = json.load(f)
    assert [it["iteration"] for it in payload["iterations"]] == [1, 2]


def test_campaign_is_byte_deterministic(tiny_cfg, campaign, tmp_path):
    _, out = campaign
    run_config(tiny_cfg, tmp_path / "b")
    a = (out / "campaign.csv").read_bytes()
    b = (tmp_path / "b" / "campaign.csv").read_bytes()
    assert a == b


def test_checkpoint_reuse_matches_fresh_training(tiny_cfg, campaign, tmp_path):
    rows, out = campaign
    reuse = tiny_cfg.with_values(checkpoint=str(out / "victim.ckpt"))
    rows2 = run_config(reuse, tmp_path / "reuse")
    assert [r["adv_acc"] for r in rows2] == [r["adv_acc"] for r in rows]


def test_missing_checkpoint_is_an_error(tiny_cfg, tmp_path):
    cfg = tiny_cfg.with_values(checkpoint=str(tmp_path / "nope.ckpt"))
    with pytest.raises(HarnessError, match="checkpoint"):
        prepare_victim(cfg, None, tmp_path)


def test_sweep_single_cell_matches_plain_run(tiny_cfg, campaign, tmp_path):
    rows, _ = campaign
    swept = sweep(tiny_cfg, tmp_path / "s")
    assert swept == rows
    table = read_csv(tmp_path / "s" / "sweep.csv")
    assert len(table) == 1 + len(rows)


def test_sweep_expands_axes(tiny_cfg, tmp_path):
    cfg = tiny_cfg.with_values(methods=["dev"], sweep_epsilons=[0.02, 0.05],
                               sweep_iterations=[1, 2])
    rows = sweep(cfg, tmp_path / "s")
    assert len(rows) == 4
    assert sorted({r["epsilon"] for r in rows}) == [0.02, 0.05]
    assert sorted({r["iterations"] for r in rows}) == [1, 2]


def test_report_lists_every_method(campaign, tmp_path):
    _, out = campaign
    text = emit_report(out / "campaign.csv", out, tmp_path / "report.txt")
    for method in ("fgsm", "dev", "smia"):
        assert f"method={method}" in text
    assert "iter  2" in text
    text2 = emit_report(out / "campaign.csv", out, tmp_path / "report2.txt")
    assert text == text2


def test_report_requires_rows(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(CSV_COLUMNS) + "\n")
    with pytest.raises(HarnessError):
        emit_report(empty, tmp_path, tmp_path / "r.txt")


def test_diagnostics_artifacts(tmp_path):
    report = run_diagnostics(tmp_path, seed=3, directions=2)
    assert (tmp_path / "fisher_report.json").exists()
    table = read_csv(tmp_path / "taylor_gaps.csv")
    assert table[0] == ["direction", "scale", "gap"]
    assert len(table) == 1 + 2 * 4
    assert all(g >= 0 for _, g in report.taylor_gaps)


def test_pgm_roundtrip(tmp_path, rng):
    field = rng.uniform(-0.3, 0.8, (9, 7))
    path = tmp_path / "f.pgm"
    write_pgm16(path, field)
    raw = path.read_bytes()
    header, rest = raw.split(b"65535\n", 1)
    assert header == b"P5\n7 9\n"
    vals = np.frombuffer(rest, dtype=">u2").reshape(9, 7).astype(np.float64)
    with open(str(path) + ".json") as f:
        side = json.load(f)
    recovered = vals / 65535.0 * (side["max"] - side["min"]) + side["min"]
    assert np.abs(recovered - field).max() < (side["max"] - side["min"]) / 65000
