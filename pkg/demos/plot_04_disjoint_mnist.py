"""
Three disjoint digit tasks, four training methods
=================================================

Digits {0,1,2}, {4,5,6} and {7,8,9} are learned one after another on three
shared output neurons. Plain SGD and consolidation alone overwrite task 1;
memory-only training keeps it exactly; memory plus consolidation keeps most of
it while still adapting the shared weights.

This is a shortened run: 5 epochs per task instead of 20, which takes about
four minutes on one core. ``amnet run`` with the defaults gives the full-size
version. Cutting the training data as well is not a good shortcut here. A
less confident model has a larger Fisher diagonal, and with the default
lambda the penalty then exceeds what plain SGD can integrate stably.
"""

import os
import tempfile

from amnet.config import loads
from amnet.experiment import run_experiment
from amnet.metrics import compare_runs

from _data import DATA_DIR

out = tempfile.mkdtemp(prefix="amnet-demo-")
csvs = []
for method in ("pgd", "ewc", "ad", "ad_ewc"):
    cfg = loads(f"data_dir={DATA_DIR}\nmethod={method}\nepochs=5\noutput_dir={os.path.join(out, method)}\n")
    manifest = run_experiment(cfg)
    csvs.append(manifest.metrics_csv)
    print("wrote", manifest.plot_svg)

# %%
# ``t1_delta`` is the task-1 accuracy lost between the end of task 1 and the
# end of the run. It is exactly zero for memory-only training, because the
# shared weights and task 1's memory never move after task 1.
print(compare_runs(csvs)[1])
