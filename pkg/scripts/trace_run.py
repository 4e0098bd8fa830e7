"""Step-by-step trace of one replica: association diagnostics and per-track error.

    python scripts/trace_run.py --algo rmm-mht --seed 0
"""

import argparse

import numpy as np

from rmmht.evaluation import initial_beliefs, make_algorithm, tracker_config_for
from rmmht.simulation import (ScenarioConfig, generate_scans_labeled, generate_truth,
                              region_volume, surveillance_region)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--algo", default="rmm-mht")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--window", type=int, default=2)
    args = ap.parse_args()

    cfg = ScenarioConfig(seed=args.seed)
    truth = generate_truth(cfg, np.random.default_rng([cfg.seed, 3]))
    scans, _ = generate_scans_labeled(truth, cfg, np.random.default_rng(cfg.seed))
    tcfg = tracker_config_for(cfg, region_volume(surveillance_region(truth, cfg)), args.window)
    algo = make_algorithm(args.algo, tcfg)
    for b in initial_beliefs(truth, cfg, cfg.seed):
        algo.add_track(b)
    print("time hyps objective integral tracks  nearest-truth errors (m)")
    for k in range(2, len(scans)):
        d = algo.step(scans[k:k + args.window])
        errs = [np.min(np.linalg.norm(truth.positions(k) - x[[0, 2]], axis=1))
                for _, x in algo.estimates(confirmed_only=False)]
        print(f"{d['time']:4d} {d['hypotheses']:4d} {d['objective']:9.2f} "
              f"{str(d['integral']):8s} {d['tracks']:6d}  {np.round(errs).astype(int)}")


if __name__ == "__main__":
    main()
