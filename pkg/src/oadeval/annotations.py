"""Dataset schema: videos, class catalog, temporal action instances and metadata.

Frame indices are 0-based and instance spans are inclusive on both ends, so an
instance ``[5, 7]`` covers three frames.  The text format is line oriented::

    [videos]
    ep01,1000,25,Series A,test
    [classes]
    Drink
    [instances]
    ep01,Drink,5,7,atypical=1;occlusion=0;length_q=2
"""

from __future__ import annotations

import io
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from functools import cached_property
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import DomainError, FormatError, MissingReferenceError, ValidationError

FLAG_NAMES = (
    "atypical",
    "multiple_persons",
    "small_or_background",
    "side_viewpoint",
    "frontal_viewpoint",
    "special_viewpoint",
    "moving_camera",
    "shotcut",
    "occlusion",
    "spatial_truncation",
    "truncated_start",
    "truncated_end",
)
QUARTILE_KEYS = {"length_q": "length_quartile", "motion_q": "motion_quartile"}
SPLITS = ("train", "validation", "test")

Source = Union[bytes, str, IO[bytes], IO[str]]


@dataclass(frozen=True)
class MetadataFlags:
    """Per-instance metadata; ``None`` means the label was not annotated."""

    atypical: bool | None = None
    multiple_persons: bool | None = None
    small_or_background: bool | None = None
    side_viewpoint: bool | None = None
    frontal_viewpoint: bool | None = None
    special_viewpoint: bool | None = None
    moving_camera: bool | None = None
    shotcut: bool | None = None
    occlusion: bool | None = None
    spatial_truncation: bool | None = None
    truncated_start: bool | None = None
    truncated_end: bool | None = None
    length_quartile: int | None = None
    motion_quartile: int | None = None

    def is_empty(self) -> bool:
        return all(getattr(self, f.name) is None for f in fields(self))


@dataclass(frozen=True)
class ActionInstance:
    video_id: str
    class_id: int
    start_frame: int
    end_frame: int
    flags: MetadataFlags = field(default_factory=MetadataFlags)

    @property
    def duration(self) -> int:
        return self.end_frame - self.start_frame + 1


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    num_frames: int
    fps: Fraction = Fraction(25)
    series: str = ""
    split: str = "test"


@dataclass(frozen=True)
class Dataset:
    """Class catalog, videos keyed by id, and instances in file order.

    Construction does not validate; use :func:`validate` or
    :func:`parse_dataset` (which validates by default).
    """

    catalog: tuple[str, ...]
    videos: Mapping[str, VideoAnnotation]
    instances: tuple[ActionInstance, ...] = ()

    @property
    def num_classes(self) -> int:
        return len(self.catalog)

    def class_id(self, name: str) -> int:
        try:
            return self._class_index[name]
        except KeyError:
            raise MissingReferenceError(f"unknown class {name!r}") from None

    @cached_property
    def _class_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.catalog)}

    @cached_property
    def _by_video_class(self) -> dict[tuple[str, int], list[ActionInstance]]:
        index: dict[tuple[str, int], list[ActionInstance]] = defaultdict(list)
        for inst in self.instances:
            index[inst.video_id, inst.class_id].append(inst)
        return index

    def instances_of(self, video_id: str, class_id: int) -> list[ActionInstance]:
        return self._by_video_class.get((video_id, class_id), [])

    def video_ids(self, split: str | None = None) -> list[str]:
        """Video ids of ``split`` (all when None), sorted lexicographically."""
        return sorted(v for v, ann in self.videos.items() if split is None or ann.split == split)

    def with_instances(self, instances: Iterable[ActionInstance]) -> "Dataset":
        return Dataset(self.catalog, self.videos, tuple(instances))


# ---------------------------------------------------------------------------
# validation


def validate(ds: Dataset) -> list[str]:
    """Return one description per broken invariant; empty when ``ds`` is valid."""
    out = []
    if not ds.catalog:
        out.append("catalog: no classes")
    seen = set()
    for name in ds.catalog:
        if name in seen:
            out.append(f"catalog: duplicate class name {name!r}")
        seen.add(name)
    for vid, ann in ds.videos.items():
        if ann.video_id != vid:
            out.append(f"video {vid!r}: keyed under a different id {ann.video_id!r}")
        if ann.num_frames < 1:
            out.append(f"video {vid!r}: num_frames={ann.num_frames} must be >= 1")
        if ann.fps <= 0:
            out.append(f"video {vid!r}: fps={ann.fps} must be positive")
        if ann.split not in SPLITS:
            out.append(f"video {vid!r}: unknown split {ann.split!r}")
    for i, inst in enumerate(ds.instances):
        tag = f"instance {i} ({inst.video_id},{inst.class_id},{inst.start_frame},{inst.end_frame})"
        if not 0 <= inst.class_id < len(ds.catalog):
            out.append(f"{tag}: class id {inst.class_id} not in catalog")
        ann = ds.videos.get(inst.video_id)
        if ann is None:
            out.append(f"{tag}: unknown video {inst.video_id!r}")
        if inst.start_frame < 0:
            out.append(f"{tag}: start_frame < 0")
        if inst.start_frame > inst.end_frame:
            out.append(f"{tag}: start_frame > end_frame")
        if ann is not None and inst.end_frame >= ann.num_frames:
            out.append(f"{tag}: end_frame >= num_frames ({ann.num_frames})")
        for key, attr in QUARTILE_KEYS.items():
            q = getattr(inst.flags, attr)
            if q is not None and not 1 <= q <= 4:
                out.append(f"{tag}: {key}={q} outside 1..4")
    return out


# ---------------------------------------------------------------------------
# text format


def _read_text(source: Source) -> str:
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, str):
        return source
    else:
        data = source.read()
        if isinstance(data, str):
            return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"not UTF-8 at byte offset {exc.start}") from None


def _parse_int(text: str, what: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"{what} must be an integer, got {text!r}", line) from None


def _parse_flags(text: str, line: int) -> MetadataFlags:
    values: dict[str, object] = {}
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        key, sep, val = item.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            raise FormatError(f"flag {item!r} is not key=value", line)
        if key in FLAG_NAMES:
            if val not in ("0", "1"):
                raise FormatError(f"flag {key} must be 0 or 1, got {val!r}", line)
            values[key] = val == "1"
        elif key in QUARTILE_KEYS:
            values[QUARTILE_KEYS[key]] = _parse_int(val, key, line)
        else:
            raise FormatError(f"unknown flag {key!r}", line)
    return MetadataFlags(**values)


def parse_dataset(source: Source, strict: bool = True) -> Dataset:
    """Parse the annotation text format.

    With ``strict`` (the default) the result is validated and a
    :class:`ValidationError` lists every violation; references to unknown
    videos raise :class:`MissingReferenceError`.  ``strict=False`` returns
    the dataset as written so :func:`validate` can report on it.
    """
    text = _read_text(source)
    section = None
    videos: dict[str, VideoAnnotation] = {}
    catalog: list[str] = []
    raw_instances = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in ("videos", "classes", "instances"):
                raise FormatError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise FormatError("content before the first section header", lineno)
        if section == "classes":
            if "," in line:
                raise FormatError(f"class name {line!r} contains a comma", lineno)
            if line in catalog:
                raise FormatError(f"duplicate class {line!r}", lineno)
            catalog.append(line)
            continue
        parts = [p.strip() for p in line.split(",")]
        if section == "videos":
            if len(parts) != 5:
                raise FormatError(f"expected 5 video fields, got {len(parts)}", lineno)
            vid, nf, fps, series, split = parts
            if vid in videos:
                raise FormatError(f"duplicate video {vid!r}", lineno)
            try:
                fps_value = Fraction(fps)
            except (ValueError, ZeroDivisionError):
                raise FormatError(f"bad fps {fps!r}", lineno) from None
            videos[vid] = VideoAnnotation(vid, _parse_int(nf, "num_frames", lineno), fps_value, series, split)
        else:
            if len(parts) not in (4, 5):
                raise FormatError(f"expected 4 or 5 instance fields, got {len(parts)}", lineno)
            raw_instances.append((lineno, parts))

    index = {name: i for i, name in enumerate(catalog)}
    instances = []
    for lineno, parts in raw_instances:
        vid, cname = parts[0], parts[1]
        if cname not in index:
            raise MissingReferenceError(f"line {lineno}: unknown class {cname!r}")
        if strict and vid not in videos:
            raise MissingReferenceError(f"line {lineno}: unknown video {vid!r}")
        flags = _parse_flags(parts[4], lineno) if len(parts) == 5 else MetadataFlags()
        instances.append(
            ActionInstance(
                vid,
                index[cname],
                _parse_int(parts[2], "start_frame", lineno),
                _parse_int(parts[3], "end_frame", lineno),
                flags,
            )
        )
    ds = Dataset(tuple(catalog), videos, tuple(instances))
    if strict:
        problems = validate(ds)
        if problems:
            raise ValidationError(problems)
    return ds


def load_dataset(path, strict: bool = True) -> Dataset:
    with open(path, "rb") as fh:
        return parse_dataset(fh, strict=strict)


def _format_flags(flags: MetadataFlags) -> str:
    items = []
    for name in FLAG_NAMES:
        value = getattr(flags, name)
        if value is not None:
            items.append(f"{name}={int(value)}")
    for key, attr in QUARTILE_KEYS.items():
        value = getattr(flags, attr)
        if value is not None:
            items.append(f"{key}={value}")
    return ";".join(items)


def _check_field(value: str) -> str:
    if any(c in value for c in ",#\n\r") or value != value.strip():
        raise DomainError(f"field {value!r} cannot be written to the annotation format")
    return value


def serialize_dataset(ds: Dataset) -> bytes:
    """Byte-deterministic inverse of :func:`parse_dataset`."""
    out = io.StringIO()
    out.write("[videos]\n")
    for ann in ds.videos.values():
        out.write(
            f"{_check_field(ann.video_id)},{ann.num_frames},{ann.fps},"
            f"{_check_field(ann.series)},{_check_field(ann.split)}\n"
        )
    out.write("\n[classes]\n")
    for name in ds.catalog:
        out.write(_check_field(name) + "\n")
    out.write("\n[instances]\n")
    for inst in ds.instances:
        row = f"{inst.video_id},{ds.catalog[inst.class_id]},{inst.start_frame},{inst.end_frame}"
        flags = _format_flags(inst.flags)
        out.write(row + ("," + flags if flags else "") + "\n")
    return out.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# frame-level ground truth


def _require_video_class(ds: Dataset, video_id: str, class_id: int) -> VideoAnnotation:
    if video_id not in ds.videos:
        raise MissingReferenceError(f"unknown video {video_id!r}")
    if not 0 <= class_id < ds.num_classes:
        raise MissingReferenceError(f"unknown class id {class_id}")
    return ds.videos[video_id]


def frame_labels(ds: Dataset, video_id: str, class_id: int) -> np.ndarray:
    """Boolean mask of length ``num_frames``: union of the class's instances."""
    ann = _require_video_class(ds, video_id, class_id)
    mask = np.zeros(ann.num_frames, dtype=bool)
    for inst in ds.instances_of(video_id, class_id):
        mask[inst.start_frame : inst.end_frame + 1] = True
    return mask


def merged_spans(spans: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """Union of inclusive integer spans as sorted, disjoint, non-adjacent spans."""
    out: list[list[int]] = []
    for s, e in sorted(spans):
        if out and s <= out[-1][1] + 1:
            out[-1][1] = max(out[-1][1], e)
        else:
            out.append([s, e])
    return [(s, e) for s, e in out]


def decile_index(inst: ActionInstance, frame: int) -> int:
    """Which tenth of the instance ``frame`` falls in (0 = first 10%)."""
    if not inst.start_frame <= frame <= inst.end_frame:
        raise DomainError(f"frame {frame} outside [{inst.start_frame}, {inst.end_frame}]")
    return min(9, 10 * (frame - inst.start_frame) // inst.duration)


def instance_deciles(duration: int) -> np.ndarray:
    """Decile index of every offset ``0..duration-1``."""
    return np.minimum(9, 10 * np.arange(duration, dtype=np.int64) // duration)


# ---------------------------------------------------------------------------
# automatically generated quartile labels


def quartile_labels(values: Sequence[float]) -> list[int]:
    """Label each value 1..4 against nearest-rank 25/50/75th percentiles.

    A value equal to a threshold goes to the lower quartile.
    """
    n = len(values)
    if n == 0:
        return []
    ordered = sorted(values)
    thresholds = [ordered[math.ceil(q * n) - 1] for q in (0.25, 0.5, 0.75)]
    labels = []
    for v in values:
        label = 4
        for i, th in enumerate(thresholds):
            if v <= th:
                label = i + 1
                break
        labels.append(label)
    return labels


def _assign_quartiles(ds: Dataset, values: Sequence[float], attr: str, per_class: bool) -> Dataset:
    groups: dict[int, list[int]] = defaultdict(list)
    for i, inst in enumerate(ds.instances):
        groups[inst.class_id if per_class else 0].append(i)
    labels: dict[int, int] = {}
    for members in groups.values():
        for i, q in zip(members, quartile_labels([values[i] for i in members])):
            labels[i] = q
    return ds.with_instances(
        replace(inst, flags=replace(inst.flags, **{attr: labels[i]})) for i, inst in enumerate(ds.instances)
    )


def compute_length_quartiles(ds: Dataset, per_class: bool = True) -> Dataset:
    """Populate ``length_quartile`` from instance durations (per class by default)."""
    return _assign_quartiles(ds, [inst.duration for inst in ds.instances], "length_quartile", per_class)


def ingest_motion_counts(ds: Dataset, counts: Mapping[int, int], per_class: bool = True) -> Dataset:
    """Populate ``motion_quartile`` from externally computed trajectory counts.

    ``counts`` maps instance index (position in ``ds.instances``) to a
    non-negative count and must cover every instance.
    """
    missing = [i for i in range(len(ds.instances)) if i not in counts]
    if missing:
        raise MissingReferenceError(f"no motion count for instance {missing[0]}")
    values = [counts[i] for i in range(len(ds.instances))]
    if any(v < 0 for v in values):
        raise DomainError("motion counts must be non-negative")
    return _assign_quartiles(ds, values, "motion_quartile", per_class)


# ---------------------------------------------------------------------------
# summary statistics


@dataclass(frozen=True)
class ClassStats:
    name: str
    instances: int
    positive_frames: int
    prevalence: float


@dataclass(frozen=True)
class DatasetStats:
    classes: tuple[ClassStats, ...]
    num_videos: int
    total_frames: int
    total_instances: int
    total_seconds: float

    @property
    def total_hours(self) -> float:
        return self.total_seconds / 3600.0


def dataset_stats(ds: Dataset, split: str | None = None) -> DatasetStats:
    """Per-class counts and prevalence over the videos of ``split`` (all when None)."""
    vids = ds.video_ids(split)
    total_frames = sum(ds.videos[v].num_frames for v in vids)
    seconds = sum(ds.videos[v].num_frames / ds.videos[v].fps for v in vids)
    rows = []
    total_instances = 0
    for c, name in enumerate(ds.catalog):
        count = 0
        positives = 0
        for v in vids:
            insts = ds.instances_of(v, c)
            count += len(insts)
            positives += sum(e - s + 1 for s, e in merged_spans((i.start_frame, i.end_frame) for i in insts))
        total_instances += count
        rows.append(ClassStats(name, count, positives, positives / total_frames if total_frames else 0.0))
    return DatasetStats(tuple(rows), len(vids), total_frames, total_instances, float(seconds))
