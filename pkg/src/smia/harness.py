"""Campaign orchestration: victim preparation, attack evaluation,
hyper-parameter sweeps, diagnostics runs, and report emission.

Every run is deterministic given config + seed: datasets, training and
attacks all derive their randomness from the run seed, and output files
contain no timestamps.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace

import numpy as np

from . import datasets, diagnostics, metrics
from .attacks import AttackConfig, AttackTrace, run_attack
from .config import RunConfig, parse_kernel_axis
from .models import (ConvClassifier, EllipseSegmenter, LinearSoftmax,
                     MlpClassifier, Model, forward, load_checkpoint,
                     predict_labels, save_checkpoint)
from .training import TrainConfig, train_sgd, accuracy

CSV_COLUMNS = ["method", "epsilon", "alpha", "iterations", "kernel_size",
               "kernel_sigma", "seed", "clean_acc", "adv_acc", "drop", "fpr",
               "jaccard", "var", "cos_pos_frac"]

ATTACK_BATCH = 24
PGM_EXPORT_LIMIT = 4


class HarnessError(RuntimeError):
    pass


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


# -- data / victim preparation -------------------------------------------


def build_dataset(cfg: RunConfig, out_dir) -> datasets.Dataset:
    v = cfg.values
    if v["dataset"] == "idx":
        return datasets.load_idx(v["idx_images"], v["idx_labels"])
    if v["dataset"] == "synth-seg":
        return datasets.synth_segmentation(v["train_count"], seed=cfg.seed)
    # synthetic digit corpus round-trips through the IDX format so the
    # loader path is exercised end to end
    ds = datasets.synth_digits(v["train_count"], seed=cfg.seed)
    img_path = os.path.join(out_dir, "synth-images-idx3-ubyte")
    lab_path = os.path.join(out_dir, "synth-labels-idx1-ubyte")
    datasets.write_idx(ds, img_path, lab_path)
    return datasets.load_idx(img_path, lab_path)


def build_model(cfg: RunConfig) -> Model:
    kind = cfg.values["model"]
    if kind == "mlp":
        return MlpClassifier(seed=cfg.seed)
    if kind == "cnn":
        return ConvClassifier(seed=cfg.seed)
    return EllipseSegmenter(seed=cfg.seed)


def prepare_victim(cfg: RunConfig, train_ds: datasets.Dataset, out_dir) -> Model:
    v = cfg.values
    if v["checkpoint"]:
        if not os.path.exists(v["checkpoint"]):
            raise HarnessError(f"checkpoint not found: {v['checkpoint']}")
        model, _ = load_checkpoint(v["checkpoint"])
        return model
    model = build_model(cfg)
    schedule = TrainConfig(lr=v["train_lr"], steps=v["train_steps"],
                           batch_size=v["train_batch"], seed=cfg.seed)
    train_sgd(model, train_ds.images, train_ds.labels, schedule)
    save_checkpoint(os.path.join(out_dir, "victim.ckpt"), model, cfg.seed)
    return model


# -- attack evaluation ----------------------------------------------------


def _attack_batch(args):
    model, x, y, acfg = args
    return run_attack(model, x, y, acfg)


def attack_dataset(model: Model, ds: datasets.Dataset, acfg: AttackConfig,
                   jobs: int = 1) -> list[AttackTrace]:
    """Attack a dataset in fixed batches; batching never changes results
    because per-image objectives are independent under sign steps."""
    chunks = [(model, ds.images[i:i + ATTACK_BATCH], ds.labels[i:i + ATTACK_BATCH],
               replace(acfg, seed=acfg.seed + i))
              for i in range(0, len(ds), ATTACK_BATCH)]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_attack_batch, chunks))
    return [_attack_batch(c) for c in chunks]


def evaluate_attack(model: Model, ds: datasets.Dataset, acfg: AttackConfig,
                    positive_classes, jobs: int = 1):
    """Run one attack over the evaluation set and compute its metric row."""
    traces = attack_dataset(model, ds, acfg, jobs=jobs)
    clean_pred = []
    adv_pred = []
    for tr, start in zip(traces, range(0, len(ds), ATTACK_BATCH)):
        clean_pred.append(predict_labels(forward(model, tr.x_clean)))
        adv_pred.append(predict_labels(forward(model, tr.final_adv)))
    clean_pred = np.concatenate(clean_pred)
    adv_pred = np.concatenate(adv_pred)
    gt = ds.labels
    positive = positive_classes or [c for c in range(1, ds.num_classes)]
    row = {
        "method": acfg.method,
        "epsilon": acfg.epsilon,
        "alpha": acfg.alpha,
        "iterations": acfg.iterations,
        "kernel_size": acfg.kernel_size,
        "kernel_sigma": acfg.kernel_sigma,
        "seed": acfg.seed,
    }
    if ds.kind == "classification":
        clean = metrics.classification_metrics(clean_pred, gt, positive)
        adv = metrics.classification_metrics(adv_pred, gt, positive)
        row.update(clean_acc=clean["accuracy"], adv_acc=adv["accuracy"],
                   fpr=adv.get("fpr"), jaccard=None)
    else:
        clean = metrics.classification_metrics(clean_pred, gt)
        adv = metrics.classification_metrics(adv_pred, gt)
        row.update(clean_acc=clean["accuracy"], adv_acc=adv["accuracy"],
                   fpr=None,
                   jaccard=metrics.mean_jaccard(adv_pred, gt))
    row["drop"] = row["clean_acc"] - row["adv_acc"]
    row["var"] = metrics.mean_perturbation_variance(traces)
    if all(len(tr.steps) >= 2 for tr in traces):
        row["cos_pos_frac"] = metrics.positive_cosine_fraction(traces)
    else:
        row["cos_pos_frac"] = None
    return row, traces


# -- output artifacts -----------------------------------------------------


def write_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])


def dump_traces(out_dir, method, traces):
    for b, tr in enumerate(traces):
        payload = {
            "method": method,
            "config": asdict(tr.config),
            "batch": b,
            "iterations": tr.scalar_rows(),
        }
        with open(os.path.join(out_dir, f"trace_{method}_batch{b:03d}.json"),
                  "w") as f:
            json.dump(payload, f, indent=1, sort_keys=True)


def write_pgm16(path, field: np.ndarray):
    """16-bit PGM of one 2D field, min-max rescaled; the affine transform is
    recorded in a JSON sidecar so values can be recovered."""
    lo, hi = float(field.min()), float(field.max())
    span = hi - lo if hi > lo else 1.0
    scaled = np.round((field - lo) / span * 65535.0).astype(">u2")
    h, w = field.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n65535\n".encode())
        f.write(scaled.tobytes())
    with open(str(path) + ".json", "w") as f:
        json.dump({"min": lo, "max": hi,
                   "recover": "value = pgm / 65535 * (max - min) + min"},
                  f, sort_keys=True)


def export_perturbations(out_dir, method, traces):
    count = 0
    for tr in traces:
        eta = tr.final_eta
        for i in range(eta.shape[0]):
            if count >= PGM_EXPORT_LIMIT:
                return
            write_pgm16(os.path.join(out_dir, f"pert_{method}_{count:03d}.pgm"),
                        eta[i, 0])
            count += 1


# -- top-level entry points ----------------------------------------------


def run_config(cfg: RunConfig, out_dir, jobs: int = 1) -> list[dict]:
    """Full campaign: prepare data and victim, evaluate every configured
    attack, write CSV + trace dumps + perturbation images."""
    os.makedirs(out_dir, exist_ok=True)
    full = build_dataset(cfg, out_dir)
    train_ds, test_ds = datasets.split_normalize(
        full, cfg.values["train_fraction"], seed=cfg.seed)
    model = prepare_victim(cfg, train_ds, out_dir)
    eval_ds = test_ds.subset(np.arange(min(cfg.values["eval_count"], len(test_ds))))
    rows = []
    for acfg in cfg.attack_configs():
        row, traces = evaluate_attack(model, eval_ds, acfg,
                                      cfg.values["positive_classes"], jobs=jobs)
        rows.append(row)
        dump_traces(out_dir, acfg.method, traces)
        export_perturbations(out_dir, acfg.method, traces)
    write_csv(os.path.join(out_dir, "campaign.csv"), rows)
    return rows


def sweep(cfg: RunConfig, out_dir, jobs: int = 1) -> list[dict]:
    """Cartesian product over the configured sweep axes; failed cells are
    recorded and do not abort the sweep."""
    v = cfg.values
    eps_axis = v["sweep_epsilons"] or [v["epsilon"]]
    alpha_axis = v["sweep_alphas"] or [v["alpha"]]
    iter_axis = v["sweep_iterations"] or [v["iterations"]]
    kernel_axis = ([parse_kernel_axis(k) for k in v["sweep_kernels"]]
                   or [(v["kernel_size"], v["kernel_sigma"])])
    os.makedirs(out_dir, exist_ok=True)
    merged = []
    failures = []
    cell = 0
    for eps in eps_axis:
        for alpha in alpha_axis:
            for iters in iter_axis:
                for ksize, ksigma in kernel_axis:
                    sub = cfg.with_values(epsilon=eps, alpha=alpha,
                                          iterations=iters, kernel_size=ksize,
                                          kernel_sigma=ksigma)
                    cell_dir = os.path.join(out_dir, f"cell{cell:03d}")
                    try:
                        merged.extend(run_config(sub, cell_dir, jobs=jobs))
                    except Exception as exc:  # noqa: BLE001 - cell isolation
                        failures.append({"cell": cell, "error": str(exc)})
                    cell += 1
    write_csv(os.path.join(out_dir, "sweep.csv"), merged)
    if failures:
        with open(os.path.join(out_dir, "failures.json"), "w") as f:
            json.dump(failures, f, indent=1, sort_keys=True)
    return merged


def run_diagnostics(out_dir, seed: int = 0,
                    scales=(1e-1, 1e-2, 5e-3, 1e-3), directions: int = 20):
    """Fisher/KL diagnostics on a dedicated small model: emits a CSV of
    (scale, gap) pairs and a JSON Fisher report."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    model = LinearSoftmax((1, 8, 8), num_classes=5, seed=seed, scale=0.5)
    x = rng.uniform(0.0, 1.0, (1, 1, 8, 8))
    report = diagnostics.input_fisher(model, x)
    gap_rows = []
    for d in range(directions):
        direction = rng.standard_normal(x.size)
        for t, gap in diagnostics.taylor_gap(model, x, direction, scales):
            gap_rows.append((d, t, gap))
    report.taylor_gaps = [(t, g) for _, t, g in gap_rows]
    with open(os.path.join(out_dir, "taylor_gaps.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["direction", "scale", "gap"])
        for d, t, g in gap_rows:
            w.writerow([d, _fmt(t), _fmt(g)])
    with open(os.path.join(out_dir, "fisher_report.json"), "w") as f:
        json.dump(report.to_dict(), f, indent=1, sort_keys=True)
    return report


def emit_report(csv_path, trace_dir, out_path):
    """Consolidated plain-text report: the campaign table plus per-method,
    per-iteration variance and step-cosine summaries from the trace dumps.
    Byte-deterministic for identical inputs."""
    with open(csv_path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise HarnessError(f"{csv_path}: no CSV rows to report")
    buf = io.StringIO()
    buf.write("campaign summary\n================\n")
    for row in rows:
        buf.write("  " + " ".join(f"{k}={row[k]}" for k in CSV_COLUMNS) + "\n")
    per_method: dict[str, dict[int, list[float]]] = {}
    for name in sorted(os.listdir(trace_dir)):
        if not (name.startswith("trace_") and name.endswith(".json")):
            continue
        with open(os.path.join(trace_dir, name)) as f:
            payload = json.load(f)
        slot = per_method.setdefault(payload["method"], {})
        for it in payload["iterations"]:
            entry = slot.setdefault(it["iteration"], {"var": [], "cos": []})
            entry["var"].append(it["eta_var_mean"])
            if "step_cos_mean" in it:
                entry["cos"].append(it["step_cos_mean"])
    buf.write("\nper-iteration perturbation variance and step cosine\n")
    buf.write("---------------------------------------------------\n")
    for method in sorted(per_method):
        buf.write(f"  {method}:\n")
        for t in sorted(per_method[method]):
            entry = per_method[method][t]
            line = f"    iter {t:2d}: var {_fmt(float(np.mean(entry['var'])))}"
            if entry["cos"]:
                line += f"  cos {_fmt(float(np.mean(entry['cos'])))}"
            buf.write(line + "\n")
    content = buf.getvalue()
    with open(out_path, "w") as f:
        f.write(content)
    return content
