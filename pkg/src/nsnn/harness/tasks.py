"""Task runners behind the CLI. Each takes a validated config and an
ArtifactWriter and returns the summary dict."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from ..analysis import coding_report, pearson_r, psp_mmd_grad, psp_mmd_loss, SpikeTrainPair
from ..errors import ConfigError, DegenerateError
from ..learning import OptimizerState, backward, evaluate, exact_gradient, local_marg_gradient, train
from ..learning import apply_update, sg_erf
from ..network import Network, forward, network_from_dict
from ..neuron import NoiseModel, noise_pdf
from ..numerics import RngStream
from ..perturb import AttackConfig, attacked_metrics, model_mode
from ..stability import sweep
from .config import ExperimentConfig
from .data import generate_task
from .io import load_model

# stream ids under the master seed
DATA, INIT, TRAIN, EVAL, ATTACK, CODING, STAB, GRAD, FIT = range(9)


def _noise(cfg):
    return NoiseModel(cfg.noise_family, cfg.noise_scale)


def task_data(cfg, seed=None):
    """Train and test splits of the configured synthetic task."""
    return generate_task(cfg.task_spec(), RngStream(cfg.seed if seed is None else seed, DATA))


def initial_model(cfg, seed=None):
    """The configured model file, or a fresh random init."""
    if cfg.model_path is not None:
        return load_model(cfg.model_path)
    seed = cfg.seed if seed is None else seed
    return Network.random(cfg.dims, RngStream(seed, INIT), noise=_noise(cfg), gain=cfg.init_gain,
                          bias=cfg.init_bias, loss_mode=cfg.loss_mode)


def _optimizer(cfg, lr=None):
    return OptimizerState(cfg.optimizer, cfg.lr if lr is None else lr)


def _rule(net, cfg):
    return "sgl" if any(ly.noise.deterministic for ly in net.layers) else cfg.rule


def _metric_columns(cfg, base):
    return base + ["wall_ms"] if cfg.record_wall_ms else base


def fit_classifier(cfg, net, train_set, test_set, seed):
    """Train ``net`` with the configured recipe; NDL needs noise, so
    deterministic nets fall back to SGL."""
    return train(net, train_set, _optimizer(cfg), cfg.epochs, RngStream(seed, TRAIN), _rule(net, cfg),
                 cfg.batch_size, test_set)


def run_train(cfg: ExperimentConfig, out):
    train_set, test_set = task_data(cfg)
    net, rows = fit_classifier(cfg, initial_model(cfg), train_set, test_set, cfg.seed)
    out.csv("metrics.csv", rows, _metric_columns(cfg, ["epoch", "split", "loss", "accuracy", "lr"]))
    out.model("model.json", net)
    final = [r for r in rows if r["split"] == "test"]
    return {"rule": _rule(net, cfg), "final_test_accuracy": final[-1]["accuracy"] if final else None,
            "final_test_loss": final[-1]["loss"] if final else None}


def run_eval(cfg: ExperimentConfig, out):
    _, test_set = task_data(cfg)
    net = initial_model(cfg)
    mode = model_mode(net)
    loss, acc = evaluate(net, test_set.x, test_set.y, mode, rng=RngStream(cfg.seed, EVAL))
    out.csv("metrics.csv", [dict(split="test", mode=mode, loss=loss, accuracy=acc)],
            ["split", "mode", "loss", "accuracy"])
    return {"test_loss": loss, "test_accuracy": acc, "mode": mode}


def _attack(method, intensity):
    key = {"fgsm": "gamma", "direct_opt": "gamma", "event_drop": "rho", "spike_flip": "beta"}[method]
    return AttackConfig(method, **{key: intensity})


def run_perturb(cfg: ExperimentConfig, out):
    """Train an NSNN and its deterministic twin per seed, then attack both."""
    rows = []
    for s in range(cfg.attack_seeds):
        seed = cfg.seed + s
        train_set, test_set = task_data(cfg, seed)
        base = initial_model(cfg, seed)
        models = {
            "nsnn": fit_classifier(cfg, base, train_set, None, seed)[0],
            "dsnn": fit_classifier(cfg, base.with_noise(NoiseModel("none")), train_set, None, seed)[0],
        }
        for kind, net in models.items():
            for i, intensity in enumerate(cfg.attack_intensities):
                loss, acc = attacked_metrics(net, test_set.x, test_set.y, _attack(cfg.attack_method, intensity),
                                             RngStream(seed, ATTACK, i))
                rows.append(dict(attack=cfg.attack_method, intensity=float(intensity), model_kind=kind,
                                 seed=seed, loss=loss, accuracy=acc))
    out.csv("metrics.csv", rows, ["attack", "intensity", "model_kind", "seed", "loss", "accuracy"])
    means = {}
    for kind in ("nsnn", "dsnn"):
        means[kind] = {repr(float(i)): float(np.mean([r["accuracy"] for r in rows
                                                      if r["model_kind"] == kind and r["intensity"] == i]))
                       for i in cfg.attack_intensities}
    lead = all(means["nsnn"][k] >= means["dsnn"][k] for k in means["nsnn"])
    return {"mean_accuracy": means, "nsnn_at_least_dsnn_everywhere": lead}


def run_stability(cfg: ExperimentConfig, out):
    rows = sweep(cfg.stability_a1, cfg.stability_a2, cfg.stability_b2, cfg.stability_variants,
                 RngStream(cfg.seed, STAB), dt=cfg.stability_dt, horizon=cfg.stability_T,
                 n_paths=cfg.stability_paths)
    columns = ["a1", "a2", "b2", "variant", "LB", "UB", "LE_mean", "LE_stderr", "dt", "T", "n_paths"]
    out.csv("sweep.csv", rows, columns)
    dw = [r for r in rows if r["variant"] == "dW"]
    contained = all(r["LB"] - 0.15 <= r["LE_mean"] <= r["UB"] + 0.15 for r in dw)
    return {"grid_points": len(rows), "dW_rows_within_bounds": contained if dw else None}


def run_coding(cfg: ExperimentConfig, out):
    train_set, test_set = task_data(cfg)
    net = initial_model(cfg)
    if cfg.model_path is None:
        net = fit_classifier(cfg, net, train_set, None, cfg.seed)[0]
    x = test_set.x[: cfg.coding_samples]
    report = coding_report(net, x, cfg.coding_trials, RngStream(cfg.seed, CODING))
    rows = [dict(sample_id=i, mean_fano=float(f), mean_cosine=float(c))
            for i, (f, c) in enumerate(zip(report.mean_fano, report.mean_cosine))]
    out.csv("report.csv", rows, ["sample_id", "mean_fano", "mean_cosine"])
    return {"pearson_r": report.pearson_r, "ci95": report.ci, "degenerate": report.degenerate,
            "n_samples": len(x), "n_trials": report.n_trials, "prediction_space": report.prediction_space}


def load_fixture(name):
    """A bundled fixture by name, or any JSON file with the same layout."""
    path = Path(name)
    if path.suffix != ".json":
        path = resources.files("nsnn.harness") / "fixtures" / f"{name}.json"
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read fixture {name}: {exc}") from exc
    return network_from_dict(doc["network"]), np.asarray(doc["inputs"], dtype=np.float64), int(doc["label"])


def run_grad_check(cfg: ExperimentConfig, out):
    net, x, label = load_fixture(cfg.grad_check_fixture)
    est = local_marg_gradient(net, x, label, RngStream(cfg.seed, GRAD), cfg.grad_check_samples, per_sample=True)
    mean, se = est.mean(), est.stderr()
    exact = exact_gradient(net, x, label)
    rows, worst = [], 0.0
    for key in exact.keys():
        for idx in np.ndindex(exact[key].shape):
            z = abs(mean[key][idx] - exact[key][idx]) / max(se[key][idx], 1e-300)
            worst = max(worst, z)
            rows.append(dict(parameter=key, index="/".join(map(str, idx)), estimate=float(mean[key][idx]),
                             exact=float(exact[key][idx]), stderr=float(se[key][idx]), z=float(z)))
    out.csv("metrics.csv", rows, ["parameter", "index", "estimate", "exact", "stderr", "z"])
    return {"max_abs_bias_over_se": worst, "passed": worst < 3.0, "n_samples": cfg.grad_check_samples}


def _teacher_trains(teacher, stimuli, repeats, stream):
    """Recorded responses: ``repeats`` noisy trials per stimulus, (R, N, T, n)."""
    return np.stack([forward(teacher, stimuli, rng=stream.child(r)).spikes[-1] for r in range(repeats)])


def run_fit_spikes(cfg: ExperimentConfig, out):
    """Fit a student network to a noisy teacher's spike trains with the
    PSP-MMD loss and score firing-rate correlation on held-out stimuli.

    An NSNN (NDL) and its deterministic twin (SGL) are fitted from the same
    initialization.
    """
    stream = RngStream(cfg.seed, FIT)
    dims = [cfg.input_dim, cfg.fit_neurons, 1]
    teacher = Network.random(dims, stream.child(0), noise=_noise(cfg), gain=3.0, bias=0.3)
    gen = stream.child(1).generator
    stimuli = (gen.random((2, 64, cfg.fit_T, cfg.input_dim)) < 0.2).astype(np.float64)
    repeats = 8
    recorded = [_teacher_trains(teacher, s, repeats, stream.child(2, k)) for k, s in enumerate(stimuli)]
    base = Network.random(dims, stream.child(3), noise=_noise(cfg), gain=cfg.init_gain, bias=cfg.init_bias)
    rows, summary = [], {}
    for kind, net in (("nsnn", base.copy()), ("dsnn", base.with_noise(NoiseModel("none")))):
        noisy = not net.layers[0].noise.deterministic
        mode = "sample" if noisy else "deterministic"
        pseudo = (lambda l, v: noise_pdf(net.layers[l].noise, v)) if noisy else (lambda l, v: sg_erf(v))
        opt = OptimizerState("adam", cfg.fit_lr, total_steps=cfg.fit_epochs)
        fit_rng = stream.child(4, kind == "nsnn")
        for epoch in range(cfg.fit_epochs):
            tr = forward(net, stimuli[0], mode=mode, rng=fit_rng.child(epoch))
            target = recorded[0][epoch % repeats]
            pred = tr.spikes[-1]
            d_spikes = psp_mmd_grad(pred.transpose(0, 2, 1), target.transpose(0, 2, 1)).transpose(0, 2, 1)
            # the readout is unused: its gradient is zero
            grads = backward(net, tr, pseudo, dlogits=np.zeros_like(tr.logits), d_spikes=[d_spikes])
            apply_update(net, grads, opt)
            loss = float(np.mean([psp_mmd_loss(SpikeTrainPair(p.T, q.T)) for p, q in zip(pred, target)]))
            rows.append(dict(model_kind=kind, epoch=epoch, psp_mmd=loss))
        summary[kind] = _rate_correlation(net, mode, stimuli[1], recorded[1], repeats, stream.child(5))
    out.csv("metrics.csv", rows, ["model_kind", "epoch", "psp_mmd"])
    return {"rate_pearson_r": summary}


def _rate_correlation(net, mode, stimuli, recorded, repeats, stream):
    """Pearson r between trial-averaged model and recorded firing rates over
    every (stimulus, step, neuron) bin."""
    model = _teacher_trains(net, stimuli, repeats, stream) if mode == "sample" else \
        forward(net, stimuli, mode="deterministic").spikes[-1][None]
    try:
        return pearson_r(model.mean(axis=0).ravel(), recorded.mean(axis=0).ravel())
    except DegenerateError:
        return None


RUNNERS = {
    "train": run_train,
    "eval": run_eval,
    "perturb": run_perturb,
    "stability": run_stability,
    "coding": run_coding,
    "fit_spikes": run_fit_spikes,
    "grad_check": run_grad_check,
}
