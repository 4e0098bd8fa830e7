"""Sweep one scenario or tracker parameter and report time-mean OSPA.

Useful for seeing where the MHT variants stop losing tracks, e.g.

    python scripts/sweep_scenario.py --param lambda_f --values 0 5 20 50 --runs 10
    python scripts/sweep_scenario.py --param window --values 1 2 3 --runs 10
"""

import argparse
from dataclasses import replace

from rmmht.evaluation import monte_carlo
from rmmht.simulation import ScenarioConfig

TRACKER_PARAMS = {"window", "lambda_v", "gate_gamma", "miss_threshold", "n_lost"}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--param", required=True)
    ap.add_argument("--values", nargs="+", type=float, required=True)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--algos", default="rmm-mht,imm-mht-p1,kf-oracle")
    args = ap.parse_args()
    algos = args.algos.split(",")
    print("value " + " ".join(f"{a:>12s}" for a in algos))
    for v in args.values:
        cfg, window, over = ScenarioConfig(), 2, {}
        if args.param == "window":
            window = int(v)
        elif args.param in TRACKER_PARAMS:
            over[args.param] = int(v) if args.param == "n_lost" else v
        else:
            cfg = replace(cfg, **{args.param: type(getattr(cfg, args.param))(v)})
        s = monte_carlo(algos, cfg, args.runs, window=window, tracker_overrides=over).summary()
        print(f"{v:5g} " + " ".join(f"{s[a]:12.2f}" for a in algos))


if __name__ == "__main__":
    main()
