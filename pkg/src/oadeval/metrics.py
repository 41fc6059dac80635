"""Frame-level online evaluation: AP, calibrated AP, decile and metadata analyses.

Every frame of every evaluated video is a ranked item.  Frames are pooled
across videos in ``(video_id, frame)`` order and ranked by score, high to
low.  At equal score negatives are ranked first (so reported numbers are
lower bounds) and remaining ties fall back to ``(video_id, frame)``.

With the default weight ``w = N / P`` the calibrated precision at a cut-off
is evaluated as the exact integer ratio ``TP*N / (TP*N + FP*P)`` followed by
one rounding, which makes it bit-identical under any uniform replication of
the negatives.  Sums use ``math.fsum`` so results do not depend on summation
order.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .annotations import FLAG_NAMES, ActionInstance, Dataset, instance_deciles
from .errors import ConsistencyError, DomainError, MissingReferenceError
from .scores import ScoreSet

# ---------------------------------------------------------------------------
# ranking and the basic definitions


@dataclass(frozen=True)
class RankedFrame:
    score: float
    is_positive: bool
    provenance: tuple = ()


def rank_frames(items: Iterable[tuple[float, bool, tuple]]) -> list[RankedFrame]:
    """Sort ``(score, is_positive, provenance)`` triples into ranking order."""
    frames = []
    for score, positive, prov in items:
        if not math.isfinite(score):
            raise DomainError(f"non-finite score {score!r} at {prov!r}")
        frames.append(RankedFrame(float(score), bool(positive), tuple(prov)))
    frames.sort(key=lambda f: (-f.score, f.is_positive, f.provenance))
    return frames


def _labels(ranked) -> np.ndarray:
    if isinstance(ranked, np.ndarray):
        return ranked.astype(bool, copy=False)
    return np.fromiter((f.is_positive if isinstance(f, RankedFrame) else bool(f) for f in ranked), dtype=bool)


def precision_at_k(ranked, k: int) -> float:
    labels = _labels(ranked)
    if not 1 <= k <= len(labels):
        raise DomainError(f"k={k} outside 1..{len(labels)}")
    return int(labels[:k].sum()) / k


def calibrated_precision(tp: int, fp: int, w: float) -> float:
    """Precision with false positives divided by ``w``: ``w*tp / (w*tp + fp)``."""
    if not w > 0:
        raise DomainError(f"calibration weight must be positive, got {w!r}")
    if tp < 0 or fp < 0 or tp + fp < 1:
        raise DomainError(f"need tp, fp >= 0 and tp + fp >= 1, got tp={tp}, fp={fp}")
    return w * tp / (w * tp + fp)


def _precisions(tp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    return tp / (tp + fp)


def _calibrated_precisions(tp: np.ndarray, fp: np.ndarray, num_pos: int, num_neg: int, w) -> np.ndarray:
    if w is None:
        if num_neg == 0:
            return np.ones(len(tp))
        tpn = tp.astype(np.int64) * num_neg
        return tpn / (tpn + fp.astype(np.int64) * num_pos)
    if not w > 0:
        raise DomainError(f"calibration weight must be positive, got {w!r}")
    wtp = w * tp
    return wtp / (wtp + fp)


def _cut_counts(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(TP, FP) at every positive position of a ranked label vector."""
    positions = np.flatnonzero(labels)
    tp = np.arange(1, len(positions) + 1, dtype=np.int64)
    return tp, positions + 1 - tp


def _check_positives(labels: np.ndarray, num_pos: int) -> None:
    if num_pos < 1:
        raise DomainError("average precision needs at least one positive")
    actual = int(labels.sum())
    if actual != num_pos:
        raise ConsistencyError(f"P={num_pos} but the ranking holds {actual} positives")


def average_precision(ranked, num_pos: int) -> float:
    """Non-interpolated AP: mean of Prec(k) over the positive positions."""
    labels = _labels(ranked)
    _check_positives(labels, num_pos)
    tp, fp = _cut_counts(labels)
    return math.fsum(_precisions(tp, fp)) / num_pos


def calibrated_average_precision(ranked, num_pos: int, w: float | None = None) -> float:
    """cAP: mean calibrated precision over the positive positions.

    ``w`` defaults to negatives / positives of the ranking.
    """
    labels = _labels(ranked)
    _check_positives(labels, num_pos)
    tp, fp = _cut_counts(labels)
    num_neg = len(labels) - num_pos
    return math.fsum(_calibrated_precisions(tp, fp, num_pos, num_neg, w)) / num_pos


def ap_cap_from_scores(pos_scores, neg_scores, w: float | None = None) -> tuple[float, float]:
    """AP and cAP straight from the positive and negative score multisets.

    Equivalent to ranking with the pessimistic tie rule: the i-th best
    positive sits after every negative scoring at least as high.
    """
    pos = np.sort(np.asarray(pos_scores))[::-1]
    neg = np.sort(np.asarray(neg_scores))
    num_pos, num_neg = len(pos), len(neg)
    if num_pos < 1:
        raise DomainError("average precision needs at least one positive")
    tp = np.arange(1, num_pos + 1, dtype=np.int64)
    fp = num_neg - np.searchsorted(neg, pos, side="left").astype(np.int64)
    ap = math.fsum(_precisions(tp, fp)) / num_pos
    cap = math.fsum(_calibrated_precisions(tp, fp, num_pos, num_neg, w)) / num_pos
    return ap, cap


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class ClassEvalResult:
    """Per-class outcome; ``ap``/``cap``/``w`` are None when the class has no positives."""

    class_id: int
    P: int
    N: int
    w: float | None
    ap: float | None
    cap: float | None

    @property
    def defined(self) -> bool:
        return self.P >= 1


@dataclass(frozen=True)
class EvalReport:
    results: tuple[ClassEvalResult, ...]
    map_value: float
    mcap_value: float


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def mean_over_classes(results: Sequence[ClassEvalResult]) -> EvalReport:
    """Unweighted means over the classes with at least one positive frame."""
    ordered = tuple(sorted(results, key=lambda r: r.class_id))
    defined = [r for r in ordered if r.defined]
    if not defined:
        raise DomainError("no class has positive frames; mAP is undefined")
    return EvalReport(ordered, _mean([r.ap for r in defined]), _mean([r.cap for r in defined]))


# ---------------------------------------------------------------------------
# pooling frames of a dataset split


class FramePool:
    """All frames of the evaluated videos, concatenated in ``(video_id, frame)`` order."""

    def __init__(self, ds: Dataset, scores: ScoreSet, split: str | None = "test"):
        self.ds = ds
        self.split = split
        self.video_ids = ds.video_ids(split)
        self.offsets: dict[str, int] = {}
        columns = []
        total = 0
        for vid in self.video_ids:
            track = scores[vid]
            expected = ds.videos[vid].num_frames
            if track.num_frames != expected:
                raise ConsistencyError(f"video {vid!r}: {track.num_frames} scored frames, {expected} annotated")
            if track.num_classes != ds.num_classes:
                raise ConsistencyError(
                    f"video {vid!r}: {track.num_classes} score columns, {ds.num_classes} classes"
                )
            self.offsets[vid] = total
            total += expected
            columns.append(track.values.T)
        self.num_frames = total
        # class-major so each class is one contiguous row
        if columns:
            self.values = np.concatenate(columns, axis=1)
        else:
            self.values = np.zeros((ds.num_classes, 0), dtype=np.float32)

    def instances(self, class_id: int) -> list[ActionInstance]:
        out = []
        for vid in self.video_ids:
            out.extend(self.ds.instances_of(vid, class_id))
        return out

    def span_mask(self, instances: Iterable[ActionInstance]) -> np.ndarray:
        mask = np.zeros(self.num_frames, dtype=bool)
        for inst in instances:
            base = self.offsets[inst.video_id]
            mask[base + inst.start_frame : base + inst.end_frame + 1] = True
        return mask

    def class_mask(self, class_id: int) -> np.ndarray:
        return self.span_mask(self.instances(class_id))

    def scores(self, class_id: int) -> np.ndarray:
        return self.values[class_id]


def _check_class(ds: Dataset, class_id: int) -> None:
    if not 0 <= class_id < ds.num_classes:
        raise MissingReferenceError(f"unknown class id {class_id}")


def _evaluate_masks(col: np.ndarray, pos: np.ndarray, neg: np.ndarray) -> tuple[int, int, float | None, float | None]:
    pos_scores = col[pos]
    neg_scores = col[neg]
    num_pos, num_neg = len(pos_scores), len(neg_scores)
    if num_pos == 0:
        return num_pos, num_neg, None, None
    ap, cap = ap_cap_from_scores(pos_scores, neg_scores)
    return num_pos, num_neg, ap, cap


# ---------------------------------------------------------------------------
# online evaluation


def evaluate_online(
    ds: Dataset, scores: ScoreSet, class_id: int, split: str | None = "test", pool: FramePool | None = None
) -> ClassEvalResult:
    """AP and cAP of one class over all frames of the ``split`` videos.

    Frames of other classes' instances are negatives.
    """
    _check_class(ds, class_id)
    pool = pool or FramePool(ds, scores, split)
    mask = pool.class_mask(class_id)
    num_pos, num_neg, ap, cap = _evaluate_masks(pool.scores(class_id), mask, ~mask)
    w = num_neg / num_pos if num_pos and num_neg else None
    return ClassEvalResult(class_id, num_pos, num_neg, w, ap, cap)


def map_classes(fn: Callable[[int], object], num_classes: int, jobs: int) -> list:
    if jobs <= 1:
        return [fn(c) for c in range(num_classes)]
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, range(num_classes)))


def evaluate_online_all(
    ds: Dataset, scores: ScoreSet, split: str | None = "test", jobs: int = 1
) -> EvalReport:
    """Evaluate every class and average; per-class work may run on ``jobs`` threads."""
    pool = FramePool(ds, scores, split)
    results = map_classes(lambda c: evaluate_online(ds, scores, c, split, pool), ds.num_classes, jobs)
    return mean_over_classes(results)


def evaluate_deciles(
    ds: Dataset, scores: ScoreSet, class_id: int, split: str | None = "test", pool: FramePool | None = None
) -> list[float | None]:
    """cAP of each tenth of the action against all frames outside the class.

    Entry ``d`` is None when no frame falls in decile ``d``.
    """
    _check_class(ds, class_id)
    pool = pool or FramePool(ds, scores, split)
    insts = pool.instances(class_id)
    negatives = ~pool.span_mask(insts)
    col = pool.scores(class_id)
    deciles = [np.zeros(pool.num_frames, dtype=bool) for _ in range(10)]
    for inst in insts:
        first = pool.offsets[inst.video_id] + inst.start_frame
        dec = instance_deciles(inst.duration)
        for d in range(10):
            deciles[d][first + np.flatnonzero(dec == d)] = True
    return [_evaluate_masks(col, mask, negatives)[3] for mask in deciles]


# ---------------------------------------------------------------------------
# metadata stratification

_QUARTILE_PREDICATE = re.compile(r"^(length_q|motion_q)=([1-4])$")


def flag_predicate(flag_name: str) -> Callable[[ActionInstance], bool | None]:
    """Map a flag name (or ``length_q=k`` / ``motion_q=k``) to a yes/no/unknown test."""
    if flag_name in FLAG_NAMES:
        return lambda inst: getattr(inst.flags, flag_name)
    m = _QUARTILE_PREDICATE.match(flag_name)
    if m:
        attr = "length_quartile" if m.group(1) == "length_q" else "motion_quartile"
        wanted = int(m.group(2))

        def predicate(inst):
            q = getattr(inst.flags, attr)
            return None if q is None else q == wanted

        return predicate
    raise MissingReferenceError(f"unknown metadata flag {flag_name!r}")


@dataclass(frozen=True)
class MetadataSplitResult:
    flag: str
    class_id: int
    num_yes: int
    num_no: int
    eligible: bool
    cap_yes: float | None = None
    cap_no: float | None = None

    @property
    def diff(self) -> float | None:
        if self.cap_yes is None or self.cap_no is None:
            return None
        return self.cap_yes - self.cap_no


def evaluate_metadata_split(
    ds: Dataset,
    scores: ScoreSet,
    class_id: int,
    flag_name: str,
    min_instances: int = 5,
    complement: str = "exclude",
    split: str | None = "test",
    pool: FramePool | None = None,
) -> MetadataSplitResult:
    """Compare cAP of flag-true and flag-false instances of one class.

    Ineligible (no cAP values) unless both sides have ``min_instances``
    instances; unannotated instances belong to neither side.  With
    ``complement="exclude"`` the other side's frames are left out of the
    ranking; with ``"negative"`` they count as negatives.
    """
    if complement not in ("exclude", "negative"):
        raise DomainError(f"complement must be 'exclude' or 'negative', got {complement!r}")
    predicate = flag_predicate(flag_name)
    _check_class(ds, class_id)
    pool = pool or FramePool(ds, scores, split)
    insts = pool.instances(class_id)
    yes = [i for i in insts if predicate(i) is True]
    no = [i for i in insts if predicate(i) is False]
    if len(yes) < min_instances or len(no) < min_instances:
        return MetadataSplitResult(flag_name, class_id, len(yes), len(no), False)
    col = pool.scores(class_id)
    yes_mask, no_mask = pool.span_mask(yes), pool.span_mask(no)
    if complement == "exclude":
        outside = ~pool.span_mask(insts)
        cap_yes = _evaluate_masks(col, yes_mask, outside)[3]
        cap_no = _evaluate_masks(col, no_mask, outside)[3]
    else:
        cap_yes = _evaluate_masks(col, yes_mask, ~yes_mask)[3]
        cap_no = _evaluate_masks(col, no_mask, ~no_mask)[3]
    return MetadataSplitResult(flag_name, class_id, len(yes), len(no), True, cap_yes, cap_no)


# ---------------------------------------------------------------------------
# segment classification


@dataclass(frozen=True)
class ClassificationResult:
    predictions: tuple[int, ...]
    per_class: tuple[float | None, ...]
    mean_accuracy: float


def classify_segments(ds: Dataset, scores: ScoreSet, split: str | None = "test") -> ClassificationResult:
    """Predict each ground-truth instance as the class with the highest mean score.

    Ties go to the lowest class id.  Background frames play no part.
    """
    chosen = set(ds.video_ids(split))
    correct = [0] * ds.num_classes
    total = [0] * ds.num_classes
    predictions = []
    for inst in ds.instances:
        if inst.video_id not in chosen:
            continue
        values = scores[inst.video_id].values[inst.start_frame : inst.end_frame + 1]
        means = values.sum(axis=0, dtype=np.float64) / inst.duration
        pred = int(np.argmax(means))
        predictions.append(pred)
        total[inst.class_id] += 1
        correct[inst.class_id] += pred == inst.class_id
    per_class = tuple(correct[c] / total[c] if total[c] else None for c in range(ds.num_classes))
    defined = [a for a in per_class if a is not None]
    if not defined:
        raise DomainError("no instances to classify")
    return ClassificationResult(tuple(predictions), per_class, _mean(defined))
