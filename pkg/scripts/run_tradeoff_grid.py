"""Run the quality-cost trade-off grid: non-IID baseline vs IID shards
vs per-round data limit vs weight noise vs both, across seeds.

Writes one metrics CSV per (arm, seed) plus a comparison CSV of the
median-seed runs, and prints per-arm medians. Roughly a minute per
seed bundle with the default settings.
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from fedsim.config import parse_config
from fedsim.harness import (
    compare_experiments,
    emit_csv,
    format_comparison,
    run_experiment,
    write_comparison_csv,
)

BASE = """
experiment_id = {arm}-s{seed}
mode = federated
model_kind = logistic
input_dim = 8
num_classes = 4
num_clients = 50
count_dist = lognormal
count_mu = 3.2
count_sigma = 1.0
cluster_spread = 0.1
center_scale = 2.0
clients_per_round = 10
rounds = {rounds}
local_epochs = 5
batch_size = 8
client_lr = 0.4
server_opt = adam
server_lr = 0.15
eval_every = {eval_every}
eval_fraction = 0.2
seed = {seed}
"""

FVN = (
    "fvn_enabled = true\nfvn_schedule = linear_ramp\n"
    "fvn_std_max = 0.1\nfvn_ramp_rounds = 100\n"
)

ARMS = {
    "non-iid": "",
    "iid-shards": "sampling_mode = iid\nshard_size = 25\n",
    "data-limit": "data_limit = 4\n",
    "fvn": FVN,
    "fvn-limited": FVN + "data_limit = 4\n",
}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results", help="output directory (default: results)")
    parser.add_argument("--seeds", type=int, default=5, help="number of seeds per arm (default: 5)")
    parser.add_argument("--rounds", type=int, default=200, help="rounds per run (default: 200)")
    parser.add_argument("--eval-every", type=int, default=50, help="eval cadence (default: 50)")
    parser.add_argument("--workers", type=int, default=None, help="client update thread pool size")
    args = parser.parse_args(argv)

    os.makedirs(args.out, exist_ok=True)
    finals = {}
    for arm, extra in ARMS.items():
        losses, costs, paths = [], [], []
        for seed in range(args.seeds):
            text = BASE.format(arm=arm, seed=seed, rounds=args.rounds,
                               eval_every=args.eval_every) + extra
            rows = run_experiment(parse_config(text), max_workers=args.workers)
            path = os.path.join(args.out, f"{arm}-s{seed}.csv")
            emit_csv(rows, path)
            losses.append(rows[-1].eval_loss)
            costs.append(rows[-1].cfmq_terabytes)
            paths.append(path)
        finals[arm] = (losses, costs, paths)
        print(f"{arm:12s} median eval_loss {np.median(losses):.4f}  "
              f"median cfmq {np.median(costs):.3e} TB  ({args.seeds} seeds)")

    # one representative run per arm (the median-loss seed), cheapest first
    rep = [finals[arm][2][int(np.argsort(finals[arm][0])[args.seeds // 2])] for arm in ARMS]
    summaries = compare_experiments(rep)
    print()
    print(format_comparison(summaries), end="")
    write_comparison_csv(summaries, os.path.join(args.out, "comparison.csv"))
    print(f"\nwrote {sum(len(v[2]) for v in finals.values())} metrics files "
          f"and comparison.csv under {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
