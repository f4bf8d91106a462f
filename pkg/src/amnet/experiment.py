"""End-to-end experiment runs: data, network, sequential training, artifacts."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

from . import __version__, checkpoint
from .config import ExperimentConfig, validate
from .datasets import (TaskSpec, cifar10_from_dir, make_disjoint_tasks, make_permuted_tasks,
                       mnist_from_dir, subsample)
from .layers import Network
from .linalg import SeededRng
from .metrics import emit_plot, write_metrics_csv
from .trainer import MetricsRecord, OptimizerConfig, TrainingMethod, sequential_run

log = logging.getLogger(__name__)

# stream ids for SeededRng.spawn
_INIT_STREAM = 1
_PERMUTE_STREAM = 2
_TRAIN_STREAM = 100


@dataclass
class RunManifest:
    config_hash: str
    started: str
    finished: str
    metrics_csv: str
    plot_svg: str
    checkpoint: str
    config: str
    version: str = __version__


def build_tasks(cfg: ExperimentConfig) -> list[TaskSpec]:
    if cfg.dataset == "cifar10":
        train, test = cifar10_from_dir(os.path.join(cfg.data_dir, "cifar10"))
    else:
        train, test = mnist_from_dir(os.path.join(cfg.data_dir, "mnist"))
    if cfg.dataset == "permuted-mnist":
        rng = SeededRng(cfg.seed).spawn(_PERMUTE_STREAM)
        tasks = make_permuted_tasks(train, test, cfg.permuted_tasks, rng)
    else:
        tasks = make_disjoint_tasks(train, test, cfg.groups, cfg.scheme)
    if cfg.train_limit or cfg.test_limit:
        tasks = [subsample(t, cfg.train_limit, cfg.test_limit) for t in tasks]
    return tasks


def build_network(cfg: ExperimentConfig, tasks: list[TaskSpec]) -> Network:
    dims = [tasks[0].train_images.shape[1], *cfg.hidden, tasks[0].n_outputs]
    # permuted tasks share all outputs, which is the shared scheme
    scheme = "shared" if cfg.dataset == "permuted-mnist" else cfg.scheme
    rng = SeededRng(cfg.seed).spawn(_INIT_STREAM)
    return Network.build(dims, len(tasks), cfg.k, rng, cfg.activation, cfg.loss, scheme)


def optimizer_config(cfg: ExperimentConfig) -> OptimizerConfig:
    return OptimizerConfig(learning_rate=cfg.lr, batch_size=cfg.batch, epochs_per_task=cfg.epochs,
                           eps=cfg.eps, lam=cfg.lam, fisher_samples=cfg.fisher_samples, seed=cfg.seed,
                           memory_update=cfg.memory_update, sigmoid_mask=cfg.sigmoid_mask)


def train_stream(cfg: ExperimentConfig) -> SeededRng:
    # every method gets its own mini-batch stream; network init is shared
    index = [m.value for m in TrainingMethod].index(cfg.method)
    return SeededRng(cfg.seed).spawn(_TRAIN_STREAM + index)


def run_training(cfg: ExperimentConfig, tasks=None, progress=None
                 ) -> tuple[Network, list[MetricsRecord], list]:
    """Train per ``cfg`` without writing anything; returns network, metrics, anchors."""
    validate(cfg)
    tasks = build_tasks(cfg) if tasks is None else tasks
    net = build_network(cfg, tasks)
    metrics, anchors = sequential_run(net, tasks, TrainingMethod(cfg.method), optimizer_config(cfg),
                                      train_stream(cfg), log=progress)
    return net, metrics, anchors


def run_experiment(cfg: ExperimentConfig, tasks=None) -> RunManifest:
    """Run one configuration and write config, metrics CSV, SVG, checkpoint and manifest."""
    validate(cfg)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    paths = {name: os.path.join(out, name) for name in
             ("config.txt", "metrics.csv", "curves.svg", "model.amn", "manifest.json")}
    with open(paths["config.txt"], "w") as f:
        f.write(cfg.dumps())
    t0 = time.perf_counter()

    def progress(r: MetricsRecord):
        log.info("%s task %d epoch %d acc %s (%.1fs)", r.method, r.trained_task, r.epoch,
                 " ".join(f"{a:.4f}" for a in r.accuracies), time.perf_counter() - t0)

    net, metrics, anchors = run_training(cfg, tasks, progress)
    write_metrics_csv(paths["metrics.csv"], metrics, net.num_tasks, cfg.record_wallclock)
    emit_plot(paths["metrics.csv"], paths["curves.svg"], f"{cfg.dataset} {cfg.preset} {cfg.method}")
    checkpoint.save(paths["model.amn"], net, anchors)
    manifest = RunManifest(
        config_hash=cfg.digest(),
        started=started,
        finished=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        metrics_csv=paths["metrics.csv"],
        plot_svg=paths["curves.svg"],
        checkpoint=paths["model.amn"],
        config=paths["config.txt"],
    )
    with open(paths["manifest.json"], "w") as f:
        json.dump(asdict(manifest), f, indent=2)
        f.write("\n")
    return manifest
