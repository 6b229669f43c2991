"""End-to-end smoke tests for the python module and the CLI."""

import json
import math
import os
import subprocess

import numpy as np
import pytest

import heml


def test_distance_kernels():
    assert heml.euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert heml.negative_cosine_similarity([1.0, 0.0], [2.0, 0.0]) == -1.0
    values, indices = heml.pairwise_distances([0.0, 0.0], [[0.0, 1.0], [1.0, 0.0]])
    assert values == [1.0, 1.0]
    assert indices == [0, 1]


def test_boundary_search_examples():
    r = heml.find_optimal_boundary([1.0, 3.0], [2.0, 4.0])
    assert r.t_star == 2.0
    assert r.loss == 1.0
    assert r.hard_positive_indices == [1]
    assert r.hard_negative_indices == [0]
    assert heml.he_loss_at(2.0, [1.0, 3.0], [2.0, 4.0]) == 1.0

    separable = heml.find_optimal_boundary([1.0], [2.0])
    assert separable.loss == 0.0

    with pytest.raises(ValueError):
        heml.find_optimal_boundary([], [1.0])


def test_he_loss_per_query_and_gradient():
    query = np.zeros(2)
    positives = np.array([[2.0, 0.0]])
    negatives = np.array([[0.0, 1.0]])
    r = heml.he_loss_per_query(query, positives, negatives)
    assert r.t_star == 1.0
    g = heml.he_loss_gradient(query, positives, negatives)
    assert g["query"] == [-1.0, 1.0]
    assert g["positives"][0] == [1.0, 0.0]

    with pytest.raises(heml.DegenerateGeometryError):
        heml.he_loss_gradient(query, positives, np.zeros((1, 2)))


def test_baseline_losses():
    q = np.zeros(2)
    pos = np.array([[2.0, 0.0]])
    neg = np.array([[1.0, 0.0]])
    assert heml.triplet_loss(q, pos, neg, margin=0.3) == pytest.approx(1.3)
    assert heml.ranked_list_loss(q, np.array([[1.0, 0.0]]), np.array([[5.0, 0.0]])) == \
        pytest.approx(0.2)
    # single-key softmax collapses to zero loss
    assert heml.infonce_loss(np.ones(2), np.array([[1.0, 0.5]]), np.zeros((0, 2))) == \
        pytest.approx(0.0)


def test_key_dictionary_fifo_and_labeling():
    d = heml.KeyDictionary(capacity=4, dim=1)
    d.enqueue_batch([[1.0], [2.0]], [0, 0])
    d.enqueue_batch([[3.0], [4.0]], [1, 1])
    d.enqueue_batch([[5.0], [6.0]], [2, 2])
    assert d.count == 4
    assert d.label(0) == 1 and d.label(3) == 2

    sets = d.label_dictionary(query_label=2, query_entry_index=2)
    assert sets["positive_indices"] == [3]
    assert sets["negative_indices"] == [0, 1]


def test_lr_rule():
    assert heml.optimal_lr_for_size(3e5) == 0.02
    assert 0.0100 <= heml.optimal_lr_for_size(37775) <= 0.0108
    assert heml.lr_schedule(0, 100, 0.8) == 0.8
    assert heml.lr_schedule(75, 100, 0.8) == pytest.approx(0.4)
    assert heml.lr_schedule(100, 100, 0.8) == 0.0
    with pytest.raises(ValueError):
        heml.optimal_lr_for_size(4000)


def test_evaluation_protocol():
    X, y = heml.generate_dataset(num_ids=6, samples_per_id=4, input_dim=4,
                                 noise_sigma=0.01, seed=3)
    r = heml.evaluate(X, y, X, y, exclude_self=True)
    assert r["map"] == 1.0 and r["rank1"] == 1.0
    assert heml.rank_gallery([0.0], [[2.0], [0.1], [1.0]]) == [1, 2, 0]
    assert heml.average_precision([1, 0], [True, False]) == 0.5
    assert heml.average_precision([0, 1], [False, False]) is None


def test_train_smoke_and_determinism(tmp_path):
    overrides = {
        "num_ids": "8", "samples_per_id": "8", "groups_c": "4", "per_group_n": "4",
        "epochs": "25", "dict_capacity": "64", "hidden_dims": "16", "embed_dim": "8",
        "seed": "5", "out_dir": str(tmp_path / "a"),
    }
    first = heml.run_train("", overrides)
    assert first["steps"] == 100
    assert 0.0 < first["map"] <= 1.0
    assert os.path.exists(first["checkpoint_path"])

    overrides["out_dir"] = str(tmp_path / "b")
    second = heml.run_train("", overrides)
    assert second["map"] == first["map"]
    with open(first["metrics_path"], "rb") as fa, open(second["metrics_path"], "rb") as fb:
        assert fa.read() == fb.read()

    # eval on the saved checkpoint reproduces the training-time evaluation
    evaluated = heml.run_eval("", overrides)
    assert evaluated["map"] == second["map"]


@pytest.fixture(scope="module")
def cli():
    path = os.environ.get("HEML_CLI")
    if not path or not os.path.exists(path):
        pytest.skip("HEML_CLI not set")
    return path


def test_cli_lr(cli):
    out = subprocess.run([cli, "lr", "300000"], capture_output=True, text=True)
    assert out.returncode == 0
    assert float(out.stdout) == 0.02

    bad = subprocess.run([cli, "lr", "4000"], capture_output=True, text=True)
    assert bad.returncode == 2


def test_cli_train_eval_ablate(cli, tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "num_ids = 8\nsamples_per_id = 8\ngroups_c = 4\nper_group_n = 4\n"
        "epochs = 25\ndict_capacity = 64\nhidden_dims = 16\nembed_dim = 8\n"
        f"out_dir = {tmp_path / 'run'}\n"
    )
    out = subprocess.run([cli, "train", "--config", str(cfg), "--set", "seed=9"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    metrics = (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()
    assert len(metrics) == 100
    record = json.loads(metrics[0])
    assert set(record) == {"step", "epoch", "lr", "loss_he", "loss_id", "grad_norm"}
    eval_doc = json.loads((tmp_path / "run" / "eval.json").read_text())
    assert set(eval_doc) == {"map", "rank1", "cmc"}
    assert len(eval_doc["cmc"]) == 64

    # the seed override on the command line beats the file value
    cfg_seeded = tmp_path / "seeded.cfg"
    cfg_seeded.write_text(cfg.read_text() + "seed = 1\n")
    out2 = subprocess.run([cli, "train", "--config", str(cfg_seeded), "--set", "seed=9"],
                          capture_output=True, text=True)
    assert out2.returncode == 0
    assert out2.stdout == out.stdout

    unknown = subprocess.run([cli, "train", "--config", str(cfg), "--set", "loss=bogus"],
                             capture_output=True, text=True)
    assert unknown.returncode == 2
    assert "unknown loss" in unknown.stderr

    sweep = subprocess.run(
        [cli, "ablate", "--dimension", "dict_size", "--config", str(cfg),
         "--set", "sweep=32,64", "--set", "epochs=5"],
        capture_output=True, text=True)
    assert sweep.returncode == 0, sweep.stderr
    csv_lines = (tmp_path / "run" / "ablate_dict_size.csv").read_text().splitlines()
    assert csv_lines[0] == "setting,map,rank1,final_loss"
    assert len(csv_lines) == 3


def test_cli_bench_loss(cli, tmp_path):
    out = subprocess.run(
        [cli, "bench-loss", "--set", "sweep=64", "--set", "bench_repeats=1",
         "--set", f"out_dir={tmp_path}"],
        capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    lines = (tmp_path / "bench_loss.csv").read_text().splitlines()
    assert lines[0] == "loss,dict_size,mean_us"
    assert len(lines) == 7  # 6 losses at one size
