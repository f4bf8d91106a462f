"""
Consolidation on permuted digits
================================

Each task is MNIST under a fixed pixel shuffle (task 1 is unshuffled). All
tasks share the ten outputs, so there is no label conflict and consolidation
alone has a fair chance. This is the standard sanity check that the Fisher
penalty is wired up correctly: EWC should keep more of task 1 than plain SGD.

The run is short (one hidden layer, 10k images per task, 3 epochs), so lambda
is turned down from its default. A briefly trained model is unsure of itself,
so its Fisher values are large. Once ``lr * lambda * max F`` passes 2, plain
SGD overshoots the penalty's minimum, and the trainer logs a warning when
that happens.
"""

from amnet.config import loads
from amnet.experiment import run_training

from _data import DATA_DIR

for method in ("pgd", "ewc"):
    cfg = loads(f"data_dir={DATA_DIR}\ndataset=permuted-mnist\nmethod={method}\nepochs=3\n"
                "train_limit=10000\ntest_limit=2000\nhidden=256\nlambda=50\n")
    _, metrics, _ = run_training(cfg)
    print(f"{method:4s} task-1 accuracy at the end of each task:",
          [f"{r.accuracies[0]:.3f}" for r in metrics if r.epoch == cfg.epochs])
