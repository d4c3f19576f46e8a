import json
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_tiny
from nsnn.errors import ConfigError, MalformedFileError, VersionError
from nsnn.harness.cli import main
from nsnn.harness.config import ExperimentConfig, config_from_dict, load_config
from nsnn.harness.data import SyntheticTaskSpec, generate_task
from nsnn.harness.io import load_model, save_model
from nsnn.network import Network, forward
from nsnn.numerics import RngStream


def test_noiseless_task_is_linearly_separable():
    spec = SyntheticTaskSpec(rate_hi=1.0, rate_lo=0.0, jitter=0.0, n_train=40, n_test=8)
    train, _ = generate_task(spec, RngStream(0))
    counts = train.x.sum(axis=1)
    protos = np.stack([counts[train.y == c][0] for c in range(4)])
    for c in range(4):
        assert np.all(counts[train.y == c] == protos[c])
    # nearest prototype by dot product, a linear readout on counts
    scores = counts @ protos.T - 0.5 * (protos * protos).sum(axis=1)
    assert np.all(scores.argmax(axis=1) == train.y)


def test_task_is_deterministic():
    a, _ = generate_task(SyntheticTaskSpec(), RngStream(3))
    b, _ = generate_task(SyntheticTaskSpec(), RngStream(3))
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_empirical_rates():
    spec = SyntheticTaskSpec(rate_hi=0.8, rate_lo=0.1, jitter=0.0, n_train=1000, n_test=0)
    train, _ = generate_task(spec, RngStream(5))
    from nsnn.harness.data import prototypes
    masks = prototypes(spec, RngStream(5).child(0))
    expected = np.where(masks[train.y], 0.8, 0.1).mean(axis=0)
    assert np.all(np.abs(train.x.mean(axis=(0, 1)) - expected) < 0.02)
    assert set(np.unique(train.x)) <= {0.0, 1.0}


def test_invalid_spec():
    with pytest.raises(ConfigError):
        generate_task(SyntheticTaskSpec(rate_hi=0.1, rate_lo=0.2), RngStream(0))


def test_save_load_round_trip(tmp_path):
    net = Network.random([5, 7, 3, 2], RngStream(1), gain=1.3)
    path = tmp_path / "m.json"
    save_model(net, path)
    back = load_model(path)
    x = (np.random.default_rng(0).random((3, 4, 5)) < 0.5).astype(float)
    a, b = forward(net, x, rng=RngStream(2)), forward(back, x, rng=RngStream(2))
    assert np.array_equal(a.logits, b.logits)


def test_version_and_truncation(tmp_path):
    path = tmp_path / "m.json"
    save_model(make_tiny(), path)
    doc = json.loads(path.read_text())
    doc["format_version"] += 1
    bumped = tmp_path / "bumped.json"
    bumped.write_text(json.dumps(doc))
    with pytest.raises(VersionError):
        load_model(bumped)
    cut = tmp_path / "cut.json"
    cut.write_text(path.read_text()[:200])
    with pytest.raises(MalformedFileError):
        load_model(cut)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        config_from_dict({"task": "train", "learning_rate": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"task": "train", "noise_scale": 2.5})
    with pytest.raises(ConfigError):
        config_from_dict({"task": "dance"})
    with pytest.raises(ConfigError):
        config_from_dict({"task": "eval", "model_path": str(tmp_path / "missing.json")})
    cfg = config_from_dict({"task": "train"}, seed=9, out_dir="x")
    assert cfg.seed == 9 and cfg.out_dir == "x"
    assert cfg.digest() == config_from_dict({"task": "train", "seed": 9}).digest()


def _write(tmp_path, doc):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_unknown_task_exits_2_without_artifacts(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path, {"task": "train"})
    assert main(["bogus", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["train", "--config", _write(tmp_path, {"epochs": -1}), "--out", str(out)]) == 2
    assert not out.exists()


def test_grad_check_cli(tmp_path):
    out = tmp_path / "gc"
    cfg = _write(tmp_path, {"grad_check_samples": 100000})
    assert main(["grad_check", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["result"]["max_abs_bias_over_se"] < 3
    assert summary["seed"] == 3 and summary["config"]["seed"] == 3 and len(summary["build_id"]) == 12
    assert (out / "metrics.csv").read_text().startswith("# seed=3 config_hash=")


def test_train_is_bit_reproducible_and_stays_in_out_dir(tmp_path):
    doc = {"dims": [16, 12, 4], "input_dim": 16, "epochs": 2, "n_train": 64, "n_test": 32}
    cfg = _write(tmp_path, doc)
    runs = []
    for name in ("a", "b"):
        out = tmp_path / "runs" / name
        assert main(["train", "--config", cfg, "--out", str(out)]) == 0
        runs.append(out)
    assert sorted(p.name for p in runs[0].iterdir()) == ["metrics.csv", "model.json", "summary.json"]
    assert (runs[0] / "metrics.csv").read_bytes() == (runs[1] / "metrics.csv").read_bytes()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cfg.json", "runs"]
    assert load_model(runs[0] / "model.json").in_dim == 16


def test_divergence_exit_code(tmp_path):
    net = make_tiny()
    net.readout.weights[:] = np.nan
    model = tmp_path / "nan.json"
    save_model(net, model)
    doc = {"dims": [2, 2, 2], "input_dim": 2, "n_classes": 2, "epochs": 1, "n_train": 8, "n_test": 4,
           "model_path": str(model)}
    assert main(["train", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3


def test_capacity_exit_code(tmp_path):
    # five units over five steps exceed the 24-step enumeration guard
    from nsnn.network import LayerSpec, Readout, network_to_dict
    big = Network([LayerSpec(np.ones((5, 1)), np.zeros(5))], Readout(np.ones((2, 5)), np.zeros(2)))
    fixture = tmp_path / "big.json"
    fixture.write_text(json.dumps({"network": network_to_dict(big), "inputs": [[1.0]] * 5, "label": 0}))
    doc = {"grad_check_fixture": str(fixture), "grad_check_samples": 10}
    assert main(["grad_check", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 4


def test_stability_cli(tmp_path):
    doc = {"stability_a1": [-1.0], "stability_a2": [0.5], "stability_b2": [0.25], "stability_variants": ["dW"],
           "stability_T": 5.0, "stability_dt": 0.01, "stability_paths": 10}
    out = tmp_path / "st"
    assert main(["stability", "--config", _write(tmp_path, doc), "--out", str(out)]) == 0
    header = (out / "sweep.csv").read_text().splitlines()[1]
    assert header == "a1,a2,b2,variant,LB,UB,LE_mean,LE_stderr,dt,T,n_paths"


def test_console_script_and_threads(tmp_path):
    cfg = _write(tmp_path, {"grad_check_samples": 1000})
    env = dict(os.environ, NSNN_THREADS="1")
    proc = subprocess.run([sys.executable, "-m", "nsnn.harness.cli", "grad_check", "--config", cfg,
                           "--out", str(tmp_path / "o")], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


SMALL = {"dims": [16, 12, 4], "input_dim": 16, "epochs": 1, "n_train": 32, "n_test": 16}


def test_eval_perturb_coding_fit_smoke(tmp_path):
    cfg = _write(tmp_path, dict(SMALL, attack_seeds=1, attack_intensities=[0.0, 0.1], coding_samples=16,
                                coding_trials=3, fit_epochs=2, fit_T=8))
    for task, artifact in (("eval", "metrics.csv"), ("perturb", "metrics.csv"), ("coding", "report.csv"),
                           ("fit_spikes", "metrics.csv")):
        out = tmp_path / task
        assert main([task, "--config", cfg, "--out", str(out)]) == 0, task
        assert (out / artifact).exists() and (out / "summary.json").exists()
    header = (tmp_path / "perturb" / "metrics.csv").read_text().splitlines()[1]
    assert header == "attack,intensity,model_kind,seed,loss,accuracy"
    rows = (tmp_path / "perturb" / "metrics.csv").read_text().splitlines()[2:]
    assert len(rows) == 4
    summary = json.loads((tmp_path / "coding" / "summary.json").read_text())
    assert summary["result"]["n_samples"] == 16 and summary["result"]["prediction_space"] == "softmax"


def test_bundled_configs_parse():
    from pathlib import Path
    for path in sorted(Path(__file__).parents[1].glob("configs/*.json")):
        doc = json.loads(path.read_text())
        doc.pop("model_path", None)
        assert config_from_dict(doc).task == path.stem
