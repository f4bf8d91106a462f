"""Plain-text ``key=value`` experiment configuration.

Resolution order: built-in defaults, then the named preset, then keys from the
config file, then command-line overrides. ``dumps`` writes every key, so a
resolved config re-parses to an equal object.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field, fields
from typing import Iterable, Mapping, Optional

from .datasets import CIFAR_GROUPS, CIFAR_TEST_FILES, CIFAR_TRAIN_FILES, MNIST_FILES, MNIST_GROUPS


class ConfigError(ValueError):
    def __init__(self, key: Optional[str], message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


DATASETS = ("mnist", "cifar10", "permuted-mnist")
METHODS = ("pgd", "ewc", "ad", "ad_ewc")

# Output-layer variants: 3 shared vs 9 individual outputs, softmax vs sigmoid.
PRESETS: dict[str, dict[str, str]] = {
    "network1": {"scheme": "shared", "loss": "softmax"},
    "network2": {"scheme": "shared", "loss": "sigmoid"},
    "network3": {"scheme": "individual", "loss": "softmax"},
    "network4": {"scheme": "individual", "loss": "sigmoid"},
}


def _default_data_dir() -> str:
    return os.environ.get("AMNET_DATA_DIR", "data")


@dataclass
class ExperimentConfig:
    dataset: str = "mnist"
    preset: str = "network1"
    method: str = "ad_ewc"
    scheme: str = "shared"
    loss: str = "softmax"
    sigmoid_mask: bool = True
    activation: str = "relu"
    hidden: tuple[int, ...] = (300, 300, 300, 300)
    k: int = 6
    eps: float = 0.1
    lam: float = 400.0
    fisher_samples: int = 2000
    lr: float = 0.05
    batch: int = 100
    epochs: int = 20
    seed: int = 0
    class_groups: tuple[tuple[int, ...], ...] = ()
    permuted_tasks: int = 3
    memory_update: str = "sign"
    train_limit: int = 0
    test_limit: int = 0
    record_wallclock: bool = False
    data_dir: str = field(default_factory=_default_data_dir)
    output_dir: str = "runs/latest"

    @property
    def groups(self) -> tuple[tuple[int, ...], ...]:
        if self.class_groups:
            return self.class_groups
        return CIFAR_GROUPS if self.dataset == "cifar10" else MNIST_GROUPS

    @property
    def num_tasks(self) -> int:
        return self.permuted_tasks if self.dataset == "permuted-mnist" else len(self.groups)

    def dumps(self) -> str:
        return "".join(f"{f.name}={_format(getattr(self, f.name))}\n" for f in fields(self))

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def replace(self, **kw) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **kw)
        validate(cfg)
        return cfg


# key in text form -> dataclass field name
_ALIASES = {"lambda": "lam", "batch_size": "batch", "learning_rate": "lr", "epochs_per_task": "epochs"}
_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ";".join(",".join(str(c) for c in g) for g in v)
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name: str, text: str):
    text = text.strip()
    kind = _FIELD_TYPES[name].type
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple[int, ...]":
            return tuple(int(x) for x in text.split(",") if x.strip())
        if kind == "tuple[tuple[int, ...], ...]":
            return tuple(tuple(int(c) for c in g.split(",")) for g in text.split(";") if g.strip())
    except ValueError:
        raise ConfigError(name, f"cannot parse {text!r} as {kind}") from None
    return text


def parse_lines(lines: Iterable[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"line {n}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _canonical(key: str) -> str:
    key = key.strip().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in _FIELD_TYPES:
        raise ConfigError(key, "unknown key")
    return key


def build_config(values: Mapping[str, str], overrides: Mapping[str, str] = (),
                 check_paths: bool = False) -> ExperimentConfig:
    merged = {_canonical(k): v for k, v in dict(values).items()}
    merged.update({_canonical(k): v for k, v in dict(overrides).items()})
    preset = merged.get("preset", ExperimentConfig.preset)
    if preset and preset not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    kw = dict(PRESETS.get(preset, {}))
    kw.update(merged)
    cfg = ExperimentConfig(**{k: _parse_value(k, v) for k, v in kw.items()})
    validate(cfg, check_paths)
    return cfg


def parse_config(path: Optional[str] = None, overrides: Mapping[str, str] = (),
                 check_paths: bool = False) -> ExperimentConfig:
    """Read a config file (or nothing) and apply ``overrides`` on top."""
    values: dict[str, str] = {}
    if path is not None:
        try:
            with open(path) as f:
                values = parse_lines(f)
        except OSError as e:
            raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    return build_config(values, overrides, check_paths)


def loads(text: str, check_paths: bool = False) -> ExperimentConfig:
    return build_config(parse_lines(text.splitlines()), check_paths=check_paths)


def _choice(key, value, options):
    if value not in options:
        raise ConfigError(key, f"{value!r} is not one of {list(options)}")


def _positive(key, value):
    if not value > 0:
        raise ConfigError(key, f"must be > 0, got {value}")


def _nonneg(key, value):
    if value < 0:
        raise ConfigError(key, f"must be >= 0, got {value}")


def validate(cfg: ExperimentConfig, check_paths: bool = False) -> None:
    _choice("dataset", cfg.dataset, DATASETS)
    if cfg.preset:
        _choice("preset", cfg.preset, PRESETS)
    _choice("method", cfg.method, METHODS)
    _choice("scheme", cfg.scheme, ("shared", "individual"))
    _choice("loss", cfg.loss, ("softmax", "sigmoid"))
    _choice("activation", cfg.activation, ("relu", "tanh"))
    _choice("memory_update", cfg.memory_update, ("sign", "gradient"))
    if not cfg.hidden or any(h < 1 for h in cfg.hidden):
        raise ConfigError("hidden", "need at least one hidden width, each >= 1")
    _nonneg("k", cfg.k)
    if cfg.method in ("ad", "ad_ewc") and cfg.k == 0:
        raise ConfigError("k", "memory methods need k >= 1")
    _positive("eps", cfg.eps)
    _nonneg("lambda", cfg.lam)
    _positive("fisher_samples", cfg.fisher_samples)
    _positive("lr", cfg.lr)
    _positive("batch", cfg.batch)
    _nonneg("epochs", cfg.epochs)
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed", f"must be a 64-bit unsigned integer, got {cfg.seed}")
    _positive("permuted_tasks", cfg.permuted_tasks)
    _nonneg("train_limit", cfg.train_limit)
    _nonneg("test_limit", cfg.test_limit)
    groups = cfg.groups
    flat = [c for g in groups for c in g]
    if any(not 0 <= c <= 9 for c in flat):
        raise ConfigError("class_groups", "class ids must be in 0..9")
    if len(set(flat)) != len(flat):
        raise ConfigError("class_groups", "groups must be disjoint")
    if len({len(g) for g in groups}) != 1:
        raise ConfigError("class_groups", "groups must all have the same size")
    if check_paths:
        for p in required_files(cfg):
            if not os.path.isfile(p):
                raise ConfigError("data_dir", f"missing dataset file {p}")


def required_files(cfg: ExperimentConfig) -> list[str]:
    if cfg.dataset == "cifar10":
        root = os.path.join(cfg.data_dir, "cifar10")
        return [os.path.join(root, f) for f in CIFAR_TRAIN_FILES + CIFAR_TEST_FILES]
    root = os.path.join(cfg.data_dir, "mnist")
    return [os.path.join(root, f) for pair in MNIST_FILES.values() for f in pair]
