"""Evaluation toolkit for online (per-frame) action detection."""

__version__ = "0.1.0"

from .annotations import (  # noqa: E402
    ActionInstance,
    Dataset,
    MetadataFlags,
    VideoAnnotation,
    frame_labels,
    load_dataset,
    parse_dataset,
    serialize_dataset,
    validate,
)
from .metrics import (  # noqa: E402
    average_precision,
    calibrated_average_precision,
    calibrated_precision,
    evaluate_online,
    evaluate_online_all,
)
from .scores import ScoreSet, ScoreTrack, read_scores, write_scores  # noqa: E402
