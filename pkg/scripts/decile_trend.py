"""Decile cAP of a detector whose confidence grows over the course of each action."""

import argparse

import numpy as np

from oadeval.metrics import FramePool, evaluate_deciles
from oadeval.synth import generate_annotations, generate_scores, parse_model


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default="ramp")
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--classes", type=int, default=3)
    args = parser.parse_args(argv)
    model = parse_model(args.model)

    rows = []
    for seed in range(args.seeds):
        ds = generate_annotations(seed, 4, 5000, args.classes, 12, (20, 200))
        scores = generate_scores(ds, model, seed)
        pool = FramePool(ds, scores, None)
        per_class = [evaluate_deciles(ds, scores, c, None, pool) for c in range(args.classes)]
        rows.append(np.nanmean(np.array(per_class, dtype=float), axis=0))
    print("decile," + ",".join(f"d{d}" for d in range(10)))
    for seed, row in enumerate(rows):
        print(f"seed{seed}," + ",".join(f"{v:.4f}" for v in row))
    print("mean," + ",".join(f"{v:.4f}" for v in np.mean(rows, axis=0)))


if __name__ == "__main__":
    main()
