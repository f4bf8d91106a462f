"""
Configs, checkpoints and the command line
=========================================

Experiments are described by flat ``key=value`` text. The resolved config,
with every default filled in, is written next to the results and parses back
to the same object. Trained networks, together with their Fisher anchors, are
saved in a small little-endian binary format.
"""

import os
import subprocess
import sys
import tempfile

from amnet import checkpoint
from amnet.config import ConfigError, loads

from _data import DATA_DIR

cfg = loads("preset=network4\nepochs=1\nlambda=50\n")
print(cfg.scheme, cfg.loss, cfg.lam)
assert loads(cfg.dumps()) == cfg

try:
    loads("eps=-1")
except ConfigError as e:
    print("rejected:", e)

# %%
# The same through the CLI. Any key can be overridden with --key=value.
out = tempfile.mkdtemp()
cmd = [sys.executable, "-m", "amnet.cli", "run", f"--data_dir={DATA_DIR}", "--epochs=1", "--hidden=64",
       "--train_limit=1000", "--test_limit=300", f"--output_dir={out}"]
print("exit", subprocess.call(cmd))
print(sorted(os.listdir(out)))

# %%
net, anchors = checkpoint.load(os.path.join(out, "model.amn"))
print("layers", net.dims, "tasks", net.num_tasks, "k", net.k, "anchors", [a.task_id for a in anchors])
print("exit on a bad key:", subprocess.call([sys.executable, "-m", "amnet.cli", "run", "--nope=1"],
                                            stderr=subprocess.DEVNULL))
