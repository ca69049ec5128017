"""Flat key-value campaign configuration.

Grammar (one pair per line):

    key = value          # trailing comments allowed
    methods = fgsm, dev  # lists are comma separated
    sweep_kernels = 3:0.5, 5:1.0   # kernel axis entries are size:sigma

Unknown keys are rejected. Booleans accept true/false (any case). The
documented set of keys lives in `DEFAULTS` below; see README for the full
grammar.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .attacks import AttackConfig

DEFAULTS = {
    # task / data
    "task": "classify",             # classify | segment
    "dataset": "synth-digits",      # synth-digits | idx | synth-seg
    "idx_images": "",               # IDX image file (dataset = idx)
    "idx_labels": "",
    "train_count": 4000,            # synthetic corpus size
    "train_fraction": 0.75,
    "eval_count": 120,              # images attacked per run
    # victim
    "model": "cnn",                 # mlp | cnn | segmenter
    "checkpoint": "",               # reuse instead of training when set
    "train_lr": 0.3,
    "train_steps": 2000,
    "train_batch": 64,
    # attacks
    "methods": ["fgsm", "dev", "smia"],
    "epsilon": 0.05,
    "iterations": 10,
    "alpha": 0.95,
    "kernel_size": 13,
    "kernel_sigma": 5.0,
    "random_start": False,
    "deepfool_overshoot": 0.02,
    "detach_smoothed_branch": False,
    "positive_classes": [],         # FPR binarization; empty = classes != 0
    # sweep axes (empty = no sweep on that axis)
    "sweep_epsilons": [],
    "sweep_alphas": [],
    "sweep_iterations": [],
    "sweep_kernels": [],            # "size:sigma" strings
}

_LIST_KEYS = {"methods", "positive_classes", "sweep_epsilons", "sweep_alphas",
              "sweep_iterations", "sweep_kernels"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: dict(DEFAULTS))
    seed: int = 0

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key)

    def validate(self):
        v = self.values
        if v["task"] not in ("classify", "segment"):
            raise ConfigError(f"unknown task {v['task']!r}")
        if v["dataset"] not in ("synth-digits", "idx", "synth-seg"):
            raise ConfigError(f"unknown dataset {v['dataset']!r}")
        if v["model"] not in ("mlp", "cnn", "segmenter"):
            raise ConfigError(f"unknown model {v['model']!r}")
        if not v["methods"]:
            raise ConfigError("at least one attack method is required")
        for m in v["methods"]:
            AttackConfig(method=m).validate()
        if v["dataset"] == "idx" and not (v["idx_images"] and v["idx_labels"]):
            raise ConfigError("dataset = idx requires idx_images and idx_labels")
        for k in ("sweep_kernels",):
            for item in v[k]:
                parse_kernel_axis(item)
        return self

    def attack_configs(self) -> list[AttackConfig]:
        v = self.values
        return [AttackConfig(
            method=m,
            epsilon=float(v["epsilon"]),
            iterations=int(v["iterations"]),
            alpha=float(v["alpha"]),
            kernel_size=int(v["kernel_size"]),
            kernel_sigma=float(v["kernel_sigma"]),
            random_start=bool(v["random_start"]),
            seed=self.seed,
            deepfool_overshoot=float(v["deepfool_overshoot"]),
            detach_smoothed_branch=bool(v["detach_smoothed_branch"]),
        ) for m in v["methods"]]

    def with_values(self, **overrides) -> "RunConfig":
        merged = dict(self.values)
        merged.update(overrides)
        return RunConfig(values=merged, seed=self.seed)


def parse_kernel_axis(item: str) -> tuple[int, float]:
    try:
        size, sigma = str(item).split(":")
        return int(size), float(sigma)
    except ValueError:
        raise ConfigError(f"kernel axis entry {item!r} is not size:sigma")


def _convert(key, raw, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low not in ("true", "false"):
            raise ConfigError(f"{key}: expected true/false, got {raw!r}")
        return low == "true"
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(text: str, seed: int = 0) -> RunConfig:
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in _LIST_KEYS:
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if key in ("sweep_epsilons", "sweep_alphas"):
                values[key] = [float(s) for s in items]
            elif key in ("sweep_iterations", "positive_classes"):
                values[key] = [int(s) for s in items]
            else:
                values[key] = items
        else:
            values[key] = _convert(key, raw, DEFAULTS[key])
    return RunConfig(values=values, seed=seed).validate()


def load_config(path, seed: int = 0) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read(), seed=seed)
