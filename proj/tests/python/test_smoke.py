"""End-to-end smoke of the python module against numpy references."""

import json
import math
import pathlib

import numpy as np
import pytest

import enginefault as ef


def test_softmax_matches_numpy():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(4, 6, 9)) * 3.0
    got = ef.softmax(x)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    want = e / e.sum(axis=-1, keepdims=True)
    np.testing.assert_allclose(got, want, atol=1e-12)
    np.testing.assert_allclose(got.sum(axis=-1), 1.0, atol=1e-12)


def test_cross_entropy_matches_numpy():
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(10, 12)) * 2.0
    targets = rng.integers(0, 12, size=10).tolist()
    got = ef.cross_entropy(logits, targets)
    p = ef.softmax(logits)
    want = -np.mean(np.log(p[np.arange(10), targets]))
    assert got == pytest.approx(want, abs=1e-12)
    uniform = ef.cross_entropy(np.zeros((5, 12)), [0, 3, 7, 11, 5])
    assert uniform == pytest.approx(math.log(12.0), abs=1e-12)


def test_attention_rows_normalize_and_mask():
    rng = np.random.default_rng(9)
    q, k, v = (rng.normal(size=(2, 6, 8)) for _ in range(3))
    w = ef.attention_weights(q, k, v, num_heads=4, causal=True)
    assert w.shape == (2, 4, 6, 6)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(np.triu(w, k=1) == 0.0)  # no attention to the future

    wo = rng.normal(size=(8, 8))
    bo = rng.normal(size=8)
    out = ef.multi_head_attention(q, k, v, 4, wo, bo, causal=False)
    assert out.shape == (2, 6, 8)
    assert np.isfinite(out).all()


def test_config_validation_raises():
    with pytest.raises(ValueError, match="num_heads"):
        ef.train(json.dumps({"model": {"transformer": {"num_heads": 5}}}))
    with pytest.raises(ValueError, match="unknown field"):
        ef.generate(json.dumps({"corpus": {"run_count": 3}}))
    with pytest.raises(ValueError, match="JSON"):
        ef.generate("{not json")
    defaults = json.loads(ef.default_config())
    assert defaults["windows"]["window_len"] == 64


def test_pipeline_round_trip(tmp_path: pathlib.Path):
    cfg = {
        "corpus": {"dir": str(tmp_path / "corpus"), "runs_per_class": 3,
                   "duration_s": 150, "seed": 13},
        "windows": {"store_dir": str(tmp_path / "store"), "frame_len": 150},
        "training": {"epochs": 1, "deterministic_timing": True},
        "run_dir": str(tmp_path / "run"),
    }
    config = json.dumps(cfg)

    gen = ef.generate(config)
    assert gen == {"runs_written": 36, "classes": 12}
    prep = ef.preprocess(config)
    assert prep["runs_ok"] == 36 and prep["windows"] > 0

    fit = ef.train(config)
    assert fit["best_epoch"] == 1
    assert 0.0 <= fit["test"]["window_accuracy"] <= 1.0
    checkpoint = fit["checkpoint_dir"]
    assert (pathlib.Path(checkpoint) / "params.bin").exists()

    scored = ef.evaluate(config, checkpoint, part="test",
                         split_file=str(tmp_path / "run" / "split.json"))
    assert scored["loss"] == pytest.approx(fit["test"]["loss"])
    assert scored["windows"] == fit["test"]["windows"]

    outcome = ef.predict(config, checkpoint, str(tmp_path / "corpus" / "5" / "run_0000"),
                         str(tmp_path / "trace.csv"))
    assert outcome["has_fault"] and outcome["fault_id"] == 5
    assert outcome["probs"].shape == (150, 12)
    np.testing.assert_allclose(outcome["probs"].sum(axis=1), 1.0, atol=1e-9)
    assert len(outcome["steps"]) == 150
    assert (tmp_path / "trace.csv").exists()
