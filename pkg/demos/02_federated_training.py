"""
Learning frecency weights from simulated clicks
===============================================

Clients rank their own history, simulate URL-bar searches, and send back a
finite-difference gradient of a ranking hinge loss. The server averages the
gradients and takes an Rprop step. Here the server starts from weights with
the Typed bonus and the newest recency bucket damaged, and learns them back.
"""

import numpy as np

from frecency_fl import RunConfig, SyntheticClientPool, run_training
from frecency_fl.analysis import rolling_average
from frecency_fl.frecency import PARAM_NAMES

# A laptop-sized pool; the acceptance setup uses 5000 clients and K=200.
cfg = RunConfig(
    num_clients_total=1000,
    clients_per_iteration=100,
    num_iterations=40,
    seed=1,
    initial_weights={"type_typed": 0.5, "recency_4d": 40.0},
)
pool = SyntheticClientPool.from_run_config(cfg)
record = run_training(cfg, pool, threads=4)

smooth = rolling_average(record.losses, 5)
for entry, roll in list(zip(record.iterations, smooth))[::5]:
    print(f"iteration {entry.iteration:3d}  mean loss {entry.mean_loss:9.3f}  rolling {roll:9.3f}")

# Only ratios between weights affect the ranking, so compare the shape.
start, final = np.array(record.initial_params), np.array(record.final_params)
for name, a, b in zip(PARAM_NAMES, start, final):
    print(f"{name:20s} {a:7.2f} -> {b:7.2f}")
print("typed / followed_link:", round(final[6] / final[5], 3), "(target 2.0 / 1.2 =", round(2 / 1.2, 3), ")")
