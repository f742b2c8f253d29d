"""Training, evaluation, ablation and attention dumps on tiny datasets."""
import json
import os
import shutil

import numpy as np
import pytest

from krst import checkpoint, harness
from krst.config import apply_ablation, build_config
from krst.data import load_split, make_batch
from krst.errors import ConfigError, DatasetError, FormatError, SampleLookupError
from krst.model import batch_loss, init_params


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture(scope="module")
def trained(tiny_data, tiny_splits):
    return harness.train(tiny_data, tiny_splits)


def test_outputs_written(trained, tiny_data):
    for name in ("checkpoint.krst", "train_log.jsonl", "metrics.json", "config.json", "predictions.test.jsonl"):
        assert os.path.exists(os.path.join(tiny_data.out, name))
    log = [json.loads(line) for line in open(os.path.join(tiny_data.out, "train_log.jsonl"))]
    assert [r["epoch"] for r in log] == [1, 2]
    assert all(np.isfinite(r["train_loss"]) and "val_accuracy" in r for r in log)


def test_identical_runs_are_byte_identical(trained, tiny_data, tiny_splits, tmp_path):
    names = ("checkpoint.krst", "train_log.jsonl", "metrics.json", "predictions.test.jsonl")
    first = {n: _read(os.path.join(tiny_data.out, n)) for n in names}
    cfg = tiny_data.replace(out=str(tmp_path / "again"))
    harness.train(cfg, tiny_splits)
    for n in names:
        assert _read(os.path.join(cfg.out, n)) == first[n], n


def test_zero_epochs_is_initialization(tiny_data, tiny_splits, tmp_path):
    cfg = tiny_data.replace(out=str(tmp_path / "zero"), epochs=0)
    result = harness.train(cfg, tiny_splits)
    arrays, _ = checkpoint.load(result["checkpoint"])
    init = init_params(result["model_config"], [cfg.seed, 1])
    assert sorted(arrays) == init.names()
    assert all(arrays[n].tobytes() == init[n].data.tobytes() for n in arrays)


def test_first_batch_replay(tiny_data, tiny_splits, tmp_path):
    """Epoch 1 batch 1 loss, recomputed from the initial checkpoint."""
    cfg = tiny_data.replace(out=str(tmp_path / "replay"), epochs=1)
    zero = harness.train(cfg.replace(epochs=0, out=str(tmp_path / "init")), tiny_splits)
    harness.train(cfg, tiny_splits)
    logged = json.loads(open(os.path.join(cfg.out, "train_log.jsonl")).readline())["first_batch_loss"]
    store, mcfg, _ = harness.model_from_checkpoint(zero["checkpoint"])
    rng = np.random.default_rng([cfg.seed, 2])
    order = rng.permutation(len(tiny_splits["train"]))
    batch = make_batch(tiny_splits["train"], order[: cfg.batch_size], mcfg.head.task)
    loss, _ = batch_loss(store, mcfg, batch, training=True, rng=rng)
    assert float(loss.data) == logged


def test_checkpoint_round_trip_metrics(trained, tiny_data, tmp_path):
    again = harness.evaluate(trained["checkpoint"], tiny_data.data, "test", str(tmp_path))
    assert again == trained["metrics"]
    assert _read(tmp_path / "metrics.json") == _read(os.path.join(tiny_data.out, "metrics.json"))


def test_metrics_match_dumped_predictions(trained, tiny_data):
    rows = [json.loads(line) for line in open(os.path.join(tiny_data.out, "predictions.test.jsonl"))]
    split = load_split(tiny_data.data, "test")
    hits = [split.answers[r["prediction"]] == r["target"] for r in rows]
    assert trained["metrics"]["accuracy"] == float(np.mean(hits))
    assert trained["metrics"]["n_samples"] == len(rows) == 12
    per = trained["metrics"]["per_class"]
    assert sum(v["n"] for v in per.values()) == 12


def test_corrupt_checkpoint(trained, tmp_path):
    blob = bytearray(_read(trained["checkpoint"]))
    blob[0] = ord("Z")
    bad = tmp_path / "bad.krst"
    bad.write_bytes(bytes(blob))
    with pytest.raises(FormatError) as exc:
        harness.evaluate(str(bad), "unused")
    assert exc.value.offset == 0


def test_shape_mismatch_rejected(tiny_data, tiny_splits):
    with pytest.raises(DatasetError):
        harness.train(tiny_data.replace(T=5), tiny_splits)
    with pytest.raises(DatasetError):
        harness.train(tiny_data.replace(task="action_count"), tiny_splits)


class TestMetrics:
    def test_perfect_oracle(self):
        m = harness.compute_metrics("frame_relpos", "openended", [1, 2, 0], [1, 2, 0], ["a", "b", "c"])
        assert m["accuracy"] == 1.0
        assert harness.compute_metrics("action_count", "count", [3, 1], [3, 1])["mse"] == 0.0

    def test_variance_identity(self, rng):
        y = rng.integers(1, 5, size=5000).astype(float)
        m = harness.compute_metrics("action_count", "count", np.full_like(y, y.mean()), y)
        assert abs(m["mse"] - y.var()) < 1e-9


def test_untrained_multichoice_near_chance(tmp_path):
    cfg = build_config(overrides={"task": "multichoice_relation", "data": str(tmp_path), "out": str(tmp_path / "r"),
                                  "n_train": 1, "n_val": 1, "n_test": 2000, "C": 16, "C_s": 16, "C_o": 16, "C_w": 16})
    harness.generate(cfg)
    split = load_split(cfg.data, "test")
    mcfg = cfg.model_config(len(split.tokens), len(split.answers), split.meta["count_range"])
    metrics, _ = harness.evaluate_split(init_params(mcfg, [cfg.seed, 1]), mcfg, split, batch_size=250)
    assert abs(metrics["accuracy"] - 0.2) <= 0.03


class TestAblation:
    def test_param_audit(self):
        base = build_config()
        full = set(init_params(base.model_config(30, 8, (1, 4)), 0).names())
        no_rel = set(init_params(apply_ablation(base, "relative").model_config(30, 8, (1, 4)), 0).names())
        assert full - no_rel == {n for n in full if n.endswith(".W_r")} and not no_rel - full
        no_abs = set(init_params(apply_ablation(base, "absolute").model_config(30, 8, (1, 4)), 0).names())
        assert full - no_abs == {n for n in full if n.endswith(".W_a")}

    def test_rows(self, tiny_data, tiny_splits, tmp_path):
        cfg = tiny_data.replace(out=str(tmp_path / "ab"), epochs=1)
        rows = harness.run_ablation(cfg, ["relative", "disentangle"], tiny_splits)
        assert [r["variant"] for r in rows] == ["full", "w/o relative", "w/o disentangle"]
        assert rows[0]["delta"] == 0.0
        assert all(r["delta"] == r["value"] - rows[0]["value"] for r in rows)
        assert rows[1]["n_params"] < rows[0]["n_params"]
        table = open(os.path.join(cfg.out, "ablation.md")).read().splitlines()
        assert len(table) == 2 + len(rows)

    def test_empty_list(self, tiny_data, tiny_splits, tmp_path):
        rows = harness.run_ablation(tiny_data.replace(out=str(tmp_path / "e"), epochs=0), [], tiny_splits)
        assert len(rows) == 1 and rows[0]["variant"] == "full"

    def test_unknown(self, tiny_data):
        with pytest.raises(ConfigError):
            harness.run_ablation(tiny_data, ["colour"])


class TestDumpAttn:
    def test_record(self, trained, tiny_data):
        rec = harness.dump_attn(trained["checkpoint"], tiny_data.data, "test-000003", frame=1, obj=2)
        assert rec["id"] == "test-000003"
        assert len(rec["word_weights"]) == len(rec["words"])
        assert abs(sum(rec["word_weights"]) - 1) < 1e-12
        scores = np.array(rec["object_scores"])
        assert scores.shape == (4, 4) and np.all((scores > 0) & (scores < 1))
        assert set(rec["streams"]) == {"appearance", "motion"}
        assert rec["neighbors"]["frame"] == 1 and rec["neighbors"]["object"] == 2

    def test_neighbors_match_brute_force(self, trained, tiny_data):
        from krst.model import forward_sequences

        rec = harness.dump_attn(trained["checkpoint"], tiny_data.data, "test-000005", frame=2, obj=1)
        store, mcfg, _ = harness.model_from_checkpoint(trained["checkpoint"])
        split = load_split(tiny_data.data, "test")
        batch = make_batch(split, [split.index_of("test-000005")], "openended")
        trace = {}
        forward_sequences(store, mcfg, batch["banks"], np.array(batch["sequences"]), trace=trace)
        V = trace["appearance"]["V"][0, 2 * 4 : 3 * 4]
        d = ((V - V[1]) ** 2).sum(axis=1)
        want = sorted(range(4), key=lambda j: (d[j], j))[: mcfg.graph.k_spatial(4)]
        got = rec["neighbors"]["neighbors"]
        assert [n[1] for n in got] == want and all(n[0] == 2 for n in got)
        assert np.allclose([n[2] for n in got], d[want], rtol=1e-12)

    def test_single_word_question(self, trained, tiny_data, tmp_path):
        data = tmp_path / "one"
        shutil.copytree(tiny_data.data, data)
        path = data / "test" / "samples.jsonl"
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        rows[0]["question"] = ["what"]
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        rec = harness.dump_attn(trained["checkpoint"], str(data), rows[0]["id"])
        assert rec["word_weights"] == [1.0]

    def test_unknown_sample(self, trained, tiny_data):
        with pytest.raises(SampleLookupError):
            harness.dump_attn(trained["checkpoint"], tiny_data.data, "test-999999")

    def test_bad_object(self, trained, tiny_data):
        with pytest.raises(ConfigError):
            harness.dump_attn(trained["checkpoint"], tiny_data.data, "test-000000", frame=9)


def test_gradcheck_report_all_heads():
    report = harness.gradcheck_report(build_config(overrides={"C": 8, "C_s": 8, "C_o": 8, "C_w": 8}), n_coords=60)
    assert [r["case"] for r in report] == ["quadratic", "multichoice", "openended", "count"]
    assert all(r["passed"] for r in report)
