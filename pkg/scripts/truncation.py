"""Compare cAP on instances whose start is hidden from the detector against the rest.

Half of the instances are flagged truncated_start; on those the detector
only fires after a fraction of the action has passed.
"""

import argparse

from oadeval.metrics import FramePool, evaluate_metadata_split
from oadeval.synth import DetectorModel, generate_annotations, generate_scores


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--delay-fraction", type=float, default=0.4)
    parser.add_argument("--flag-rate", type=float, default=0.5)
    parser.add_argument("--seeds", type=int, default=10)
    args = parser.parse_args(argv)
    model = DetectorModel("delayed", delay_fraction=args.delay_fraction, flag="truncated_start")

    print("seed,class,n_yes,n_no,cAP_yes,cAP_no,diff")
    for seed in range(args.seeds):
        ds = generate_annotations(seed, 4, 5000, 3, 20, (20, 200), flag_rates={"truncated_start": args.flag_rate})
        scores = generate_scores(ds, model, seed)
        pool = FramePool(ds, scores, None)
        for c in range(ds.num_classes):
            r = evaluate_metadata_split(ds, scores, c, "truncated_start", split=None, pool=pool)
            if r.eligible:
                print(f"{seed},{ds.catalog[c]},{r.num_yes},{r.num_no},{r.cap_yes:.4f},{r.cap_no:.4f},{r.diff:+.4f}")
            else:
                print(f"{seed},{ds.catalog[c]},{r.num_yes},{r.num_no},--,--,--")


if __name__ == "__main__":
    main()
