"""Time a full online evaluation (ranking, AP and cAP for every class) at benchmark scale.

Prints one JSON object with the evaluation wall time and the peak resident
memory of the process.  Score generation is not timed.
"""

import argparse
import json
import resource
import sys
import time

from oadeval.metrics import evaluate_online_all
from oadeval.synth import parse_model, tvseries_like_dataset, generate_scores


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=1_500_000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--model", default="noisy:0.3")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)

    ds = tvseries_like_dataset(args.seed, total_frames=args.frames)
    scores = generate_scores(ds, parse_model(args.model), args.seed, split=None)

    start = time.perf_counter()
    report = evaluate_online_all(ds, scores, split=None, jobs=args.jobs)
    elapsed = time.perf_counter() - start

    rss_kib = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    json.dump(
        {
            "frames": sum(v.num_frames for v in ds.videos.values()),
            "classes": ds.num_classes,
            "scores": sum(t.values.size for t in scores.tracks.values()),
            "eval_seconds": round(elapsed, 3),
            "max_rss_mb": round(rss_kib / 1024, 1),
            "mAP": report.map_value,
            "mcAP": report.mcap_value,
        },
        sys.stdout,
    )
    print()


if __name__ == "__main__":
    main()
