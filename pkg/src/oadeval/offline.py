"""Offline detection protocol: per-frame scores -> centered windows -> NMS -> matching -> AP."""

from __future__ import annotations

import bisect
import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .annotations import ActionInstance, Dataset
from .errors import DomainError, FormatError, MissingReferenceError
from .scores import ScoreSet, ScoreTrack

DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_NMS_THETA = 0.3


@dataclass(frozen=True)
class Detection:
    video_id: str
    class_id: int
    start_frame: int
    end_frame: int
    score: float


def _order_key(d: Detection):
    return (-d.score, d.start_frame, d.video_id, d.class_id, d.end_frame)


def sort_detections(dets: Iterable[Detection]) -> list[Detection]:
    """Descending score; ties by earlier start, then video id (then class, end)."""
    return sorted(dets, key=_order_key)


def iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    """Intersection over union of two inclusive frame spans."""
    inter = min(a[1], b[1]) - max(a[0], b[0]) + 1
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0] + 1) + (b[1] - b[0] + 1) - inter
    return inter / union


def median_duration(durations: Iterable[int]) -> int:
    """Median duration in frames; for an even count the middle mean is rounded half up."""
    values = sorted(int(d) for d in durations)
    n = len(values)
    if n == 0:
        raise DomainError("median of an empty set of durations")
    if n % 2:
        return values[n // 2]
    lo, hi = values[n // 2 - 1], values[n // 2]
    return (lo + hi + 1) // 2


def frames_to_detections(track: ScoreTrack, class_id: int, window_len: int) -> list[Detection]:
    """One window of ``window_len`` frames around every frame, carrying that frame's score.

    For even lengths the extra frame goes after the centre.  Windows are
    clipped to the video.
    """
    if window_len < 1:
        raise DomainError(f"window length must be >= 1, got {window_len}")
    before = (window_len - 1) // 2
    after = window_len - 1 - before
    last = track.num_frames - 1
    col = track.values[:, class_id]
    return [
        Detection(track.video_id, class_id, max(0, t - before), min(last, t + after), float(col[t]))
        for t in range(track.num_frames)
    ]


def nms(dets: Iterable[Detection], theta: float = DEFAULT_NMS_THETA) -> list[Detection]:
    """Greedy non-maximum suppression within each (video, class).

    A detection is dropped when its IoU with an already kept one exceeds
    ``theta``.  Output is in descending score order.
    """
    if not 0 < theta <= 1:
        raise DomainError(f"NMS threshold must lie in (0, 1], got {theta}")
    kept: list[Detection] = []
    # per group: kept starts (sorted), matching ends, longest kept length
    groups: dict[tuple[str, int], tuple[list[int], list[int], list[int]]] = {}
    for det in sort_detections(dets):
        starts, ends, longest = groups.setdefault((det.video_id, det.class_id), ([], [], [0]))
        lo = bisect.bisect_left(starts, det.start_frame - longest[0] + 1)
        hi = bisect.bisect_right(starts, det.end_frame)
        span = (det.start_frame, det.end_frame)
        if any(iou(span, (starts[i], ends[i])) > theta for i in range(lo, hi)):
            continue
        pos = bisect.bisect_right(starts, det.start_frame)
        starts.insert(pos, det.start_frame)
        ends.insert(pos, det.end_frame)
        longest[0] = max(longest[0], det.end_frame - det.start_frame + 1)
        kept.append(det)
    return kept


def match_detections(
    dets: Iterable[Detection], gt_instances: Iterable[ActionInstance], alpha: float, strict: bool = True
) -> list[tuple[Detection, bool]]:
    """Label detections TP/FP in descending score order.

    A detection is a TP when its IoU with a not yet matched ground-truth
    instance of the same video and class is above ``alpha`` (at least
    ``alpha`` with ``strict=False``).  The best-overlapping free instance is
    consumed.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"overlap ratio must lie in (0, 1), got {alpha}")
    free: dict[tuple[str, int], list[tuple[int, int]]] = defaultdict(list)
    for inst in gt_instances:
        free[inst.video_id, inst.class_id].append((inst.start_frame, inst.end_frame))
    for spans in free.values():
        spans.sort()
    out = []
    for det in sort_detections(dets):
        spans = free.get((det.video_id, det.class_id), [])
        best, best_iou = None, -1.0
        for i, span in enumerate(spans):
            v = iou((det.start_frame, det.end_frame), span)
            if (v > alpha or (not strict and v == alpha)) and v > best_iou:
                best, best_iou = i, v
        if best is not None:
            spans.pop(best)
        out.append((det, best is not None))
    return out


def detection_ap(labels: Sequence[bool], num_gt: int) -> float:
    """Non-interpolated AP of ranked TP/FP labels; missed instances count through ``num_gt``."""
    if num_gt < 1:
        raise DomainError("detection AP needs at least one ground-truth instance")
    tp = 0
    terms = []
    for k, hit in enumerate(labels, start=1):
        if hit:
            tp += 1
            terms.append(tp / k)
    return math.fsum(terms) / num_gt


@dataclass(frozen=True)
class OfflineReport:
    alphas: tuple[float, ...]
    window_lengths: tuple[int | None, ...]
    ap: tuple[tuple[float | None, ...], ...]  # [alpha][class]
    map_values: tuple[float, ...]


def class_windows(ds: Dataset, window: str | int = "median", train_split: str = "train") -> list[int | None]:
    """Window length per class: the training-set median duration, or a fixed length."""
    if isinstance(window, int):
        if window < 1:
            raise DomainError(f"window length must be >= 1, got {window}")
        return [window] * ds.num_classes
    if window != "median":
        raise DomainError(f"window must be 'median' or an integer, got {window!r}")
    train = set(ds.video_ids(train_split))
    out: list[int | None] = []
    for c in range(ds.num_classes):
        durations = [i.duration for i in ds.instances if i.class_id == c and i.video_id in train]
        out.append(median_duration(durations) if durations else None)
    return out


def evaluate_offline(
    ds: Dataset,
    scores: ScoreSet | None = None,
    detections: Sequence[Detection] | None = None,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    theta: float = DEFAULT_NMS_THETA,
    window: str | int = "median",
    strict: bool = True,
    split: str | None = "test",
) -> OfflineReport:
    """Run the offline protocol on frame scores or ready-made detections.

    With ``scores`` every frame becomes a window of the class's length
    (training median or fixed).  Detections, either way, pass through NMS
    before matching.  Classes without ground truth in ``split`` are left out
    of the means.
    """
    if (scores is None) == (detections is None):
        raise DomainError("pass exactly one of scores or detections")
    videos = ds.video_ids(split)
    chosen = set(videos)
    lengths: list[int | None] = [None] * ds.num_classes
    per_class: dict[int, list[Detection]] = defaultdict(list)
    if scores is not None:
        lengths = class_windows(ds, window)
        for c, length in enumerate(lengths):
            has_gt = any(ds.instances_of(v, c) for v in videos)
            if length is None:
                if has_gt:
                    raise DomainError(f"class {ds.catalog[c]!r} has no training instances to size its window")
                continue
            for vid in videos:
                per_class[c].extend(frames_to_detections(scores[vid], c, length))
    else:
        for det in detections:
            if det.video_id in chosen:
                per_class[det.class_id].append(det)
    kept = {c: nms(dets, theta) for c, dets in per_class.items()}

    ap_table = []
    maps = []
    for alpha in alphas:
        row: list[float | None] = []
        for c in range(ds.num_classes):
            gt = [i for v in videos for i in ds.instances_of(v, c)]
            if not gt:
                row.append(None)
                continue
            labels = [hit for _, hit in match_detections(kept.get(c, []), gt, alpha, strict)]
            row.append(detection_ap(labels, len(gt)))
        defined = [v for v in row if v is not None]
        if not defined:
            raise DomainError("no class has ground truth in the evaluated split")
        ap_table.append(tuple(row))
        maps.append(math.fsum(defined) / len(defined))
    return OfflineReport(tuple(alphas), tuple(lengths), tuple(ap_table), tuple(maps))


# ---------------------------------------------------------------------------
# detection interchange


def write_detections(dets: Iterable[Detection], catalog: Sequence[str]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["video_id", "class_name", "start_frame", "end_frame", "score"])
    for d in dets:
        writer.writerow([d.video_id, catalog[d.class_id], d.start_frame, d.end_frame, repr(float(d.score))])
    return out.getvalue().encode("utf-8")


def read_detections(source, ds: Dataset) -> list[Detection]:
    """Parse the detection CSV; spans are checked against the dataset's videos."""
    text = source.decode("utf-8") if isinstance(source, bytes) else source.read()
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header != ["video_id", "class_name", "start_frame", "end_frame", "score"]:
        raise FormatError("detection csv needs header video_id,class_name,start_frame,end_frame,score", 1)
    out = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise FormatError(f"expected 5 fields, got {len(row)}", lineno)
        vid, cname, s, e, score = row
        if vid not in ds.videos:
            raise MissingReferenceError(f"line {lineno}: unknown video {vid!r}")
        try:
            det = Detection(vid, ds.class_id(cname), int(s), int(e), float(score))
        except ValueError:
            raise FormatError(f"bad number in {row!r}", lineno) from None
        if not math.isfinite(det.score):
            raise FormatError("non-finite detection score", lineno)
        if not 0 <= det.start_frame <= det.end_frame < ds.videos[vid].num_frames:
            raise FormatError(f"span [{s}, {e}] outside video {vid!r}", lineno)
        out.append(det)
    return out

