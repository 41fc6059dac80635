"""A random scorer's AP tracks class prevalence while its cAP stays near one half.

Sweeps prevalence on a single long video and prints one row per setting.
"""

import argparse

import numpy as np

from oadeval.metrics import evaluate_online_all
from oadeval.synth import DetectorModel, generate_annotations, generate_scores


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=100_000)
    parser.add_argument("--duration", type=int, default=100)
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--prevalence", type=float, nargs="+", default=[0.005, 0.01, 0.05, 0.2])
    args = parser.parse_args(argv)

    print("prevalence,mean_AP,mean_cAP,std_cAP")
    for prev in args.prevalence:
        count = max(1, round(prev * args.frames / args.duration))
        aps, caps = [], []
        for seed in range(args.seeds):
            ds = generate_annotations(seed, 1, args.frames, 1, count, (args.duration, args.duration))
            rep = evaluate_online_all(ds, generate_scores(ds, DetectorModel("random_uniform"), seed))
            aps.append(rep.map_value)
            caps.append(rep.mcap_value)
        actual = count * args.duration / args.frames
        print(f"{actual:.4f},{np.mean(aps):.5f},{np.mean(caps):.4f},{np.std(caps):.4f}")


if __name__ == "__main__":
    main()
