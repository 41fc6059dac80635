"""Synthetic annotated datasets and detector score models.

All randomness goes through numpy's PCG64 generator.  Annotation placement
uses ``default_rng(seed)``; scores for a video use
``default_rng(SeedSequence([seed, crc32(video_id)]))`` so each video's
scores are independent of how many other videos exist or the order in
which they are generated.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .annotations import FLAG_NAMES, ActionInstance, Dataset, MetadataFlags, VideoAnnotation
from .errors import CapacityError, DomainError
from .scores import ScoreSet, ScoreTrack

MODEL_KINDS = ("oracle", "random_uniform", "noisy_oracle", "ramp", "delayed")
RAMP_NOISE = 0.05


@dataclass(frozen=True)
class DetectorModel:
    """How synthetic scores relate to the ground truth.

    ``delayed`` hides the first ``delay`` frames (or ``delay_fraction`` of
    the duration) of each instance; with ``flag`` set only instances whose
    flag is true are delayed, the rest score like the oracle.
    """

    kind: str = "oracle"
    sigma: float = 0.0
    delay: int = 0
    delay_fraction: float = 0.0
    flag: str | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DomainError(f"unknown detector model {self.kind!r}")
        if self.kind == "noisy_oracle" and not self.sigma > 0:
            raise DomainError("noisy_oracle needs sigma > 0")
        if self.delay < 0 or not 0 <= self.delay_fraction <= 1:
            raise DomainError("delay must be >= 0 and delay_fraction in [0, 1]")
        if self.flag is not None and self.flag not in FLAG_NAMES:
            raise DomainError(f"unknown flag {self.flag!r}")

    def delay_for(self, inst: ActionInstance) -> int:
        if self.kind != "delayed":
            return 0
        if self.flag is not None and getattr(inst.flags, self.flag) is not True:
            return 0
        return min(inst.duration, self.delay + math.floor(self.delay_fraction * inst.duration))


def parse_model(text: str) -> DetectorModel:
    """Parse ``oracle``, ``random``, ``noisy:SIGMA``, ``ramp``, ``delayed:FRAMES``,
    ``delayed:FRACTION%`` with an optional ``@flag`` suffix."""
    name, _, arg = text.partition(":")
    flag = None
    if "@" in arg:
        arg, flag = arg.split("@", 1)
    try:
        if name == "oracle":
            return DetectorModel("oracle")
        if name in ("random", "random_uniform"):
            return DetectorModel("random_uniform")
        if name in ("noisy", "noisy_oracle"):
            return DetectorModel("noisy_oracle", sigma=float(arg))
        if name == "ramp":
            return DetectorModel("ramp")
        if name == "delayed":
            if arg.endswith("%"):
                return DetectorModel("delayed", delay_fraction=float(arg[:-1]) / 100, flag=flag)
            return DetectorModel("delayed", delay=int(arg or 0), flag=flag)
    except ValueError:
        raise DomainError(f"bad model parameter in {text!r}") from None
    raise DomainError(f"unknown detector model {text!r}")


# ---------------------------------------------------------------------------
# annotations


def generate_annotations(
    seed: int,
    num_videos: int,
    frames_per_video: int | Sequence[int],
    num_classes: int,
    instances_per_class: int | Sequence[int],
    duration_range: tuple[int, int],
    splits: Sequence[str] = ("test",),
    flag_rates: Mapping[str, float] | None = None,
    class_names: Sequence[str] | None = None,
    video_names: Sequence[str] | None = None,
    series: Sequence[str] | None = None,
    exclusive: bool = False,
    max_retries: int = 1000,
) -> Dataset:
    """Place instances uniformly at random; same-class instances never overlap.

    With ``exclusive`` no two instances overlap at all, whatever their class.

    Videos take splits round-robin from ``splits``.  Each flag in
    ``flag_rates`` is set true with the given probability (others stay
    unannotated).
    """
    if num_videos < 1 or num_classes < 1:
        raise DomainError("need at least one video and one class")
    frames = [frames_per_video] * num_videos if isinstance(frames_per_video, int) else list(frames_per_video)
    counts = [instances_per_class] * num_classes if isinstance(instances_per_class, int) else list(instances_per_class)
    if len(frames) != num_videos or len(counts) != num_classes:
        raise DomainError("per-video / per-class lists have the wrong length")
    lo, hi = duration_range
    if lo < 1 or hi < lo:
        raise DomainError(f"bad duration range {duration_range}")
    flag_rates = dict(flag_rates or {})
    unknown = set(flag_rates) - set(FLAG_NAMES)
    if unknown:
        raise DomainError(f"unknown flags {sorted(unknown)}")

    names = list(class_names) if class_names else [f"class{c:02d}" for c in range(num_classes)]
    vnames = list(video_names) if video_names else [f"v{i:03d}" for i in range(num_videos)]
    videos = {
        vnames[i]: VideoAnnotation(
            vnames[i], frames[i], Fraction(25), series[i] if series else "synthetic", splits[i % len(splits)]
        )
        for i in range(num_videos)
    }
    fitting = [i for i in range(num_videos) if frames[i] >= lo]
    rng = np.random.default_rng(seed)
    occupied: dict[tuple[int, int], list[tuple[int, int]]] = {}
    placed = []
    for c in range(num_classes):
        for _ in range(counts[c]):
            if not fitting:
                raise CapacityError(f"no video can hold an instance of {lo} frames")
            for _attempt in range(max_retries):
                v = fitting[int(rng.integers(len(fitting)))]
                dur = int(rng.integers(lo, min(hi, frames[v]) + 1))
                start = int(rng.integers(0, frames[v] - dur + 1))
                end = start + dur - 1
                spans = occupied.setdefault((v, -1 if exclusive else c), [])
                if all(end < s or start > e for s, e in spans):
                    spans.append((start, end))
                    break
            else:
                raise CapacityError(f"could not place an instance of class {c} after {max_retries} tries")
            flags = {f: bool(rng.random() < flag_rates[f]) for f in FLAG_NAMES if f in flag_rates}
            placed.append((v, start, c, end, MetadataFlags(**flags)))
    placed.sort(key=lambda p: p[:3])
    instances = tuple(ActionInstance(vnames[v], c, s, e, fl) for v, s, c, e, fl in placed)
    return Dataset(tuple(names), videos, instances)


TVSERIES_CLASSES = (
    "Pick s/th up", "Point", "Drink", "Stand up", "Run", "Sit down", "Read", "Smoke",
    "Drive car", "Open door", "Give s/th", "Use computer", "Write", "Stairway down",
    "Close door", "Stairway up", "Throw s/th", "Get in/out car", "Hang up phone", "Eat",
    "Answer phone", "Clap", "Dress up", "Undress", "Kiss", "Fall/trip", "Wave", "Pour",
    "Punch", "Fire weapon",
)  # fmt: skip
TVSERIES_EPISODES = (
    ("Breaking Bad", 3),
    ("How I Met Your Mother", 8),
    ("Mad Men", 3),
    ("Modern Family", 6),
    ("Sons of Anarchy", 3),
    ("24", 4),
)
TVSERIES_INSTANCES = 6231


def tvseries_like_dataset(
    seed: int = 0, total_frames: int = 1_440_000, duration_range: tuple[int, int] = (13, 250), flag_rate: float = 0.3
) -> Dataset:
    """A synthetic stand-in with the reference benchmark's published shape.

    27 episodes of 6 series, 30 classes, 6,231 instances, about 16 hours at
    25 fps.  Every split receives at least one episode of every series.
    """
    vnames, series_of, split_of = [], [], []
    for name, count in TVSERIES_EPISODES:
        for ep in range(count):
            vnames.append(f"{name.replace(' ', '')}_ep{ep + 1:02d}")
            series_of.append(name)
            split_of.append(("train", "validation", "test")[ep % 3])
    n = len(vnames)
    frames = [total_frames // n + (i < total_frames % n) for i in range(n)]
    base, extra = divmod(TVSERIES_INSTANCES, len(TVSERIES_CLASSES))
    counts = [base + (c < extra) for c in range(len(TVSERIES_CLASSES))]
    ds = generate_annotations(
        seed,
        n,
        frames,
        len(TVSERIES_CLASSES),
        counts,
        duration_range,
        flag_rates={f: flag_rate for f in FLAG_NAMES},
        class_names=TVSERIES_CLASSES,
        video_names=vnames,
        series=series_of,
    )
    videos = {v: VideoAnnotation(v, a.num_frames, a.fps, a.series, split_of[i]) for i, (v, a) in enumerate(ds.videos.items())}
    return Dataset(ds.catalog, videos, ds.instances)


# ---------------------------------------------------------------------------
# scores


def video_rng(seed: int, video_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(video_id.encode("utf-8"))]))


def _video_scores(ds: Dataset, vid: str, model: DetectorModel, seed: int) -> np.ndarray:
    num_frames, num_classes = ds.videos[vid].num_frames, ds.num_classes
    rng = video_rng(seed, vid)
    insts = [i for c in range(num_classes) for i in ds.instances_of(vid, c)]
    shape = (num_frames, num_classes)
    if model.kind == "random_uniform":
        return rng.random(shape, dtype=np.float32)
    if model.kind == "ramp":
        values = rng.random(shape, dtype=np.float32) * np.float32(RAMP_NOISE)
        inside = np.zeros(shape, dtype=bool)
        ramp = np.zeros(shape, dtype=np.float64)
        for inst in insts:
            sl = slice(inst.start_frame, inst.end_frame + 1)
            frac = np.arange(1, inst.duration + 1) / inst.duration
            ramp[sl, inst.class_id] = np.maximum(ramp[sl, inst.class_id], frac)
            inside[sl, inst.class_id] = True
        return np.where(inside, ramp.astype(np.float32), values)

    # oracle family: positives peak at the instance centre and stay above 0.5,
    # negatives are uniform in [0, 0.5)
    negatives = rng.random(shape, dtype=np.float32) * np.float32(0.5)
    jitter = rng.random(shape, dtype=np.float32)
    positive = np.zeros(shape, dtype=bool)
    peak = np.zeros(shape, dtype=np.float64)
    for inst in insts:
        dur = inst.duration
        t = np.arange(inst.start_frame, inst.end_frame + 1)
        centre = inst.start_frame + (dur - 1) // 2
        sl = slice(inst.start_frame, inst.end_frame + 1)
        c = inst.class_id
        profile = 0.5 + 0.5 * (1.0 - np.abs(t - centre) / dur) - jitter[sl, c] * (0.25 / dur)
        peak[sl, c] = np.maximum(peak[sl, c], profile)
        positive[sl, c] = True
    values = np.where(positive, peak.astype(np.float32), negatives)
    if model.kind == "noisy_oracle":
        values = values + rng.normal(0.0, model.sigma, shape).astype(np.float32)
    elif model.kind == "delayed":
        for inst in insts:
            d = model.delay_for(inst)
            if d:
                sl = slice(inst.start_frame, inst.start_frame + d)
                values[sl, inst.class_id] = negatives[sl, inst.class_id]
    return values


def generate_scores(ds: Dataset, model: DetectorModel, seed: int, split: str | None = None) -> ScoreSet:
    """Score every video of ``split`` (all videos by default) with ``model``."""
    return ScoreSet({vid: ScoreTrack(vid, _video_scores(ds, vid, model, seed)) for vid in ds.video_ids(split)})
