"""Fixed-length window machinery for window-based detectors.

Training windows are sampled per class (positives inside an instance, or
containing it when the instance is shorter than the window).  At test time
the scores of windows of several lengths ending at the current frame are
max-pooled into one per-frame score.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .annotations import Dataset
from .errors import DomainError, FormatError
from .scores import ScoreTrack, read_window_scores, write_window_scores

DEFAULT_LENGTHS = (20, 40, 60, 80)


class Span(NamedTuple):
    video_id: str
    start: int
    end: int


@dataclass(frozen=True)
class WindowSamples:
    positives: tuple[Span, ...]
    negatives: tuple[Span, ...]


def sample_windows(
    ds: Dataset, class_id: int, length: int, stride: int = 1, split: str | None = None
) -> WindowSamples:
    """Positive and negative training windows of ``length`` frames for one class.

    Windows overlapping other classes' instances stay in the negative pool.
    """
    if length < 1 or stride < 1:
        raise DomainError(f"need length >= 1 and stride >= 1, got {length}, {stride}")
    positives: set[Span] = set()
    negatives: list[Span] = []
    for vid in ds.video_ids(split):
        num_frames = ds.videos[vid].num_frames
        last_start = num_frames - length
        insts = ds.instances_of(vid, class_id)
        for inst in insts:
            if inst.duration >= length:
                first, last = inst.start_frame, inst.end_frame - length + 1
            else:
                first, last = inst.end_frame - length + 1, inst.start_frame
            first, last = max(first, 0), min(last, last_start)
            positives.update(Span(vid, s, s + length - 1) for s in range(first, last + 1, stride))
        if last_start < 0:
            continue
        starts = np.arange(0, last_start + 1, stride)
        clear = np.ones(len(starts), dtype=bool)
        for inst in insts:
            clear &= (starts + length - 1 < inst.start_frame) | (starts > inst.end_frame)
        negatives.extend(Span(vid, int(s), int(s) + length - 1) for s in starts[clear])
    return WindowSamples(tuple(sorted(positives)), tuple(negatives))


@dataclass(frozen=True)
class WindowScoreTrack:
    """Scores of the ``window_length`` window ending at each frame.

    Entries for ``t < window_length - 1`` score the clipped window ``[0, t]``.
    """

    video_id: str
    window_length: int
    scores: np.ndarray

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(scores)):
            raise FormatError(f"non-finite window score in {self.video_id!r}")
        if self.window_length < 1:
            raise DomainError("window length must be >= 1")
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @property
    def num_frames(self) -> int:
        return len(self.scores)


def _by_length(tracks) -> dict[int, WindowScoreTrack]:
    if isinstance(tracks, Mapping):
        tracks = tracks.values()
    out = {}
    for tr in tracks:
        if tr.window_length in out:
            raise DomainError(f"two tracks for window length {tr.window_length}")
        out[tr.window_length] = tr
    if not out:
        raise DomainError("no window lengths to pool")
    if len({tr.video_id for tr in out.values()}) > 1 or len({tr.num_frames for tr in out.values()}) > 1:
        raise DomainError("window tracks must share video and frame count")
    return out


def maxpool_online(tracks, t: int, fallback: str = "clip") -> float:
    """Max over every window length whose full window ``[t-L+1, t]`` fits.

    Before the shortest window fits, ``fallback="clip"`` returns the
    shortest model's clipped-window score and ``"undefined"`` returns -inf
    so the frame ranks last.
    """
    by_len = _by_length(tracks)
    num_frames = next(iter(by_len.values())).num_frames
    if not 0 <= t < num_frames:
        raise DomainError(f"frame {t} outside 0..{num_frames - 1}")
    fitting = [tr.scores[t] for L, tr in by_len.items() if t >= L - 1]
    if fitting:
        return float(max(fitting))
    if fallback == "clip":
        return float(by_len[min(by_len)].scores[t])
    if fallback == "undefined":
        return float("-inf")
    raise DomainError(f"unknown fallback {fallback!r}")


def maxpool_track(tracks, fallback: str = "clip") -> np.ndarray:
    """Vectorised :func:`maxpool_online` over every frame.

    Only ``fallback="clip"`` is supported here because score tracks must be
    finite.
    """
    if fallback != "clip":
        raise DomainError("maxpool_track only supports the clip fallback")
    by_len = _by_length(tracks)
    shortest = min(by_len)
    out = by_len[shortest].scores.copy()
    for L, tr in by_len.items():
        if L == shortest:
            continue
        tail = slice(L - 1, None)
        np.maximum(out[tail], tr.scores[tail], out=out[tail])
    return out


def fuse_tracks(video_id: str, per_class: Sequence[Mapping[int, WindowScoreTrack]]) -> ScoreTrack:
    """Build a per-frame score track from per-class window-score tracks."""
    columns = [maxpool_track(tracks) for tracks in per_class]
    return ScoreTrack(video_id, np.stack(columns, axis=1))


def save_window_track(track: WindowScoreTrack, path) -> None:
    Path(path).write_bytes(write_window_scores(track.scores, track.window_length))


def load_window_track(path, video_id: str = "", window_length: int | None = None) -> WindowScoreTrack:
    scores, declared = read_window_scores(Path(path).read_bytes())
    length = declared if declared is not None else window_length
    if length is None:
        raise FormatError(f"{path}: version-1 file carries no window length; pass one explicitly")
    return WindowScoreTrack(video_id, length, scores)
