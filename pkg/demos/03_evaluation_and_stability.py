"""
Did the trained model help, and when did the updates settle?
============================================================

Fresh searches (a separate random stream from training) compare the trained
weights against the damaged starting weights on characters typed. A second
look subsamples each round's client updates to see how much the aggregate
moves when fewer clients report.
"""

import numpy as np

from frecency_fl import ModelParams, RunConfig, SyntheticClientPool, run_training
from frecency_fl.analysis import ArmMetrics, compare_arms, quartile_means, stability_study
from frecency_fl.clients import simulate_evaluation

cfg = RunConfig(
    num_clients_total=1000,
    clients_per_iteration=100,
    num_iterations=30,
    seed=2,
    initial_weights={"type_typed": 0.5, "recency_4d": 40.0},
)
pool = SyntheticClientPool.from_run_config(cfg)
record = run_training(cfg, pool, threads=4)

trained = ModelParams.from_array(record.final_params)
arms = [
    ArmMetrics.from_events("treatment", simulate_evaluation(pool, trained, 5000)),
    ArmMetrics.from_events("initial", simulate_evaluation(pool, cfg.initial_params, 5000)),
    ArmMetrics.from_events("control", simulate_evaluation(pool, ModelParams(), 5000, decay_rate=0.025)),
]
report = compare_arms(arms[0], arms[1:], alpha=0.05, num_comparisons=4)
for row in report.rows():
    print(row)

# Subsample 25 of the ~100 updates per round, 30 times, and measure the L1
# distance to the full aggregate. Early rounds disagree more.
rows = stability_study(record.updates, sample_size=25, trials=30, seed=cfg.seed).qualifying()
first, last = quartile_means([r.mean_l1 for r in rows])
print(f"mean L1 distance: first quarter {first:.2f}, last quarter {last:.2f}")
print(np.round([r.mean_l1 for r in rows], 2))
