#!/usr/bin/env python3
"""Sweep the shared learning rate on the sticky task and report final losses.

Prints one line per (eta, mode, seed) with the final mean loss, final
predictive entropy, and the first step at which EM reaches SGD's final loss.
This is the sweep used to pick the sticky default.

    python3 scripts/scan_learning_rates.py --etas 5e-6,1e-5,2e-5 --steps 1000 --seeds 0
"""

import argparse
import logging

import numpy as np

from attnlab.diagnostics import predictive_entropy
from attnlab.tasks import StickyChainSpec, generate_sticky, sticky_params
from attnlab.trainers import DivergenceError, TrainConfig, train


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--etas", default="5e-6,1e-5,2e-5")
    p.add_argument("--ratio", type=float, default=0.1, help="eta_em_routing / eta")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--seeds", default="0")
    p.add_argument("--embed-scale", type=float, default=2.0)
    args = p.parse_args()
    logging.basicConfig(level=logging.ERROR)

    for eta in (float(e) for e in args.etas.split(",")):
        for seed in (int(s) for s in args.seeds.split(",")):
            spec = StickyChainSpec(seed=seed, embed_scale=args.embed_scale)
            task, _ = generate_sticky(spec)
            p0 = sticky_params(spec)
            losses = {}
            for mode in ("sgd", "em"):
                cfg = TrainConfig(steps=args.steps, eta=eta, eta_em_routing=eta * args.ratio, mode=mode, seed=seed)
                try:
                    run = train(p0, task, cfg)
                except DivergenceError as err:
                    print(f"eta={eta:g} {mode} seed={seed}: diverged ({err})")
                    continue
                losses[mode] = run.losses()
                print(f"eta={eta:g} {mode:3s} seed={seed}: final loss {run.final_trace.mean_loss:.4f} "
                      f"entropy {predictive_entropy(run.final_trace.Probs):.4f}")
            if len(losses) == 2:
                hit = np.nonzero(losses["em"] <= losses["sgd"][-1])[0]
                print(f"    EM reaches SGD's final loss at step {hit[0] if hit.size else 'never'}")


if __name__ == "__main__":
    main()
