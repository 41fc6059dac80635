"""Dense per-frame, per-class detector confidences and their file formats.

Binary layout (little-endian)::

    magic     4s   b"OADS"
    version   u16  1, or 2 for window-score files
    reserved  u16  0
    T         u32  number of frames
    C         u16  number of classes
    [window_length u16]   version 2 only
    T*C float32, frame-major

CSV layout: header ``frame,<class0>,<class1>,...`` then one row per frame.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterator, Mapping, Sequence

import numpy as np

from .errors import FormatError, MissingReferenceError

MAGIC = b"OADS"
_HEADER_V1 = struct.Struct("<4sHHIH")
_HEADER_V2 = struct.Struct("<4sHHIHH")
_ROW_DTYPE = np.dtype("<f4")


@dataclass(frozen=True)
class ScoreTrack:
    """``values[t, c]`` is the confidence that class ``c`` is happening at frame ``t``."""

    video_id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise FormatError(f"score array must be 2-D, got shape {values.shape}")
        bad = np.argwhere(~np.isfinite(values))
        if len(bad):
            t, c = bad[0]
            raise FormatError(f"non-finite score at frame {t}, class {c}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ScoreSet:
    tracks: Mapping[str, ScoreTrack] = field(default_factory=dict)

    def __post_init__(self):
        widths = {t.num_classes for t in self.tracks.values()}
        if len(widths) > 1:
            raise FormatError(f"score tracks disagree on the number of classes: {sorted(widths)}")

    @property
    def num_classes(self) -> int:
        for track in self.tracks.values():
            return track.num_classes
        return 0

    def __getitem__(self, video_id: str) -> ScoreTrack:
        try:
            return self.tracks[video_id]
        except KeyError:
            raise MissingReferenceError(f"no score track for video {video_id!r}") from None

    def __contains__(self, video_id) -> bool:
        return video_id in self.tracks

    def __len__(self) -> int:
        return len(self.tracks)


# ---------------------------------------------------------------------------
# binary


def _encode_binary(values: np.ndarray, window_length: int | None) -> bytes:
    t, c = values.shape
    if window_length is None:
        header = _HEADER_V1.pack(MAGIC, 1, 0, t, c)
    else:
        header = _HEADER_V2.pack(MAGIC, 2, 0, t, c, window_length)
    return header + np.ascontiguousarray(values, dtype=_ROW_DTYPE).tobytes()


def _decode_header(buf: bytes) -> tuple[int, int, int | None, int]:
    """Return (T, C, window_length, header_size)."""
    if len(buf) < _HEADER_V1.size:
        raise FormatError(f"truncated header: {len(buf)} bytes")
    magic, version, _reserved, t, c = _HEADER_V1.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version == 1:
        return t, c, None, _HEADER_V1.size
    if version == 2:
        if len(buf) < _HEADER_V2.size:
            raise FormatError("truncated version-2 header")
        return t, c, _HEADER_V2.unpack_from(buf)[5], _HEADER_V2.size
    raise FormatError(f"unsupported version {version}")


def _decode_binary(buf: bytes) -> tuple[np.ndarray, int | None]:
    t, c, window_length, offset = _decode_header(buf)
    payload = len(buf) - offset
    row_bytes = 4 * c
    if payload != t * row_bytes:
        rows = payload // row_bytes if row_bytes else 0
        raise FormatError(f"header declares T={t}, C={c} but payload holds {rows} rows ({payload} bytes)")
    values = np.frombuffer(buf, dtype=_ROW_DTYPE, count=t * c, offset=offset).reshape(t, c)
    return values.astype(np.float32), window_length


# ---------------------------------------------------------------------------
# csv


def _encode_csv(values: np.ndarray, class_names: Sequence[str] | None) -> bytes:
    if class_names is None:
        class_names = [f"c{i}" for i in range(values.shape[1])]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["frame", *class_names])
    for t, row in enumerate(values):
        # repr of the widened value is the shortest decimal that reads back to it
        writer.writerow([t, *(repr(float(v)) for v in row)])
    return out.getvalue().encode("utf-8")


def _decode_csv(buf: bytes, class_names: Sequence[str] | None) -> np.ndarray:
    reader = csv.reader(io.StringIO(buf.decode("utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty csv") from None
    if not header or header[0] != "frame":
        raise FormatError("csv header must start with 'frame'", 1)
    names = header[1:]
    if class_names is not None and list(class_names) != names:
        raise FormatError(f"csv classes {names} do not match the catalog", 1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        t = len(rows)
        if len(row) != len(names) + 1:
            raise FormatError(f"expected {len(names) + 1} fields, got {len(row)}", lineno)
        if row[0].strip() != str(t):
            raise FormatError(f"expected frame {t}, got {row[0]!r}", lineno)
        parsed = []
        for c, text in enumerate(row[1:]):
            try:
                value = np.float32(float(text))
            except ValueError:
                raise FormatError(f"bad score {text!r} at frame {t}, class {c}", lineno) from None
            if not np.isfinite(value):
                raise FormatError(f"non-finite score at frame {t}, class {c}", lineno)
            parsed.append(value)
        rows.append(parsed)
    return np.array(rows, dtype=np.float32).reshape(len(rows), len(names))


# ---------------------------------------------------------------------------
# public API


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def write_scores(track: ScoreTrack, fmt: str = "binary", class_names: Sequence[str] | None = None) -> bytes:
    if fmt == "binary":
        return _encode_binary(track.values, None)
    if fmt == "csv":
        return _encode_csv(track.values, class_names)
    raise ValueError(f"unknown score format {fmt!r}")


def read_scores(
    source, fmt: str = "binary", video_id: str = "", class_names: Sequence[str] | None = None
) -> ScoreTrack:
    """Read a score track from bytes, a path or a binary file object.

    Version-2 (window-score) binary files are accepted; the window length is
    dropped.  Use :func:`read_window_scores` to keep it.
    """
    buf = _read_bytes(source)
    if fmt == "binary":
        values, _ = _decode_binary(buf)
    elif fmt == "csv":
        values = _decode_csv(buf, class_names)
    else:
        raise ValueError(f"unknown score format {fmt!r}")
    return ScoreTrack(video_id, values)


def write_window_scores(scores: np.ndarray, window_length: int) -> bytes:
    """Encode a single-column window-score track as a version-2 file."""
    column = np.asarray(scores, dtype=np.float32).reshape(-1, 1)
    return _encode_binary(column, window_length)


def read_window_scores(source) -> tuple[np.ndarray, int | None]:
    """Return (scores indexed by window end frame, window length or None for v1)."""
    values, window_length = _decode_binary(_read_bytes(source))
    if values.shape[1] != 1:
        raise FormatError(f"window-score files hold one column, got {values.shape[1]}")
    if not np.all(np.isfinite(values)):
        t = int(np.argwhere(~np.isfinite(values))[0, 0])
        raise FormatError(f"non-finite score at frame {t}, class 0")
    return values[:, 0], window_length


def stream_frames(track: ScoreTrack) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(t, row)`` in frame order.

    Each row is a private copy, so a consumer can never reach later frames
    through it.
    """
    for t in range(track.num_frames):
        yield t, track.values[t].copy()


def stream_binary(fh: IO[bytes]) -> Iterator[tuple[int, np.ndarray]]:
    """Stream rows straight from a binary score file, reading one frame at a time."""
    head = fh.read(_HEADER_V1.size)
    if len(head) == _HEADER_V1.size and _HEADER_V1.unpack(head)[1] == 2:
        head += fh.read(_HEADER_V2.size - _HEADER_V1.size)
    t_count, c, _, _ = _decode_header(head)
    row_bytes = 4 * c
    for t in range(t_count):
        buf = fh.read(row_bytes)
        if len(buf) != row_bytes:
            raise FormatError(f"header declares T={t_count} but the payload ends at frame {t}")
        row = np.frombuffer(buf, dtype=_ROW_DTYPE).astype(np.float32)
        if not np.all(np.isfinite(row)):
            raise FormatError(f"non-finite score at frame {t}, class {int(np.argmin(np.isfinite(row)))}")
        yield t, row


def load_score_dir(path, class_names: Sequence[str] | None = None) -> ScoreSet:
    """Load ``<video_id>.oads`` (or ``<video_id>.csv``) files from a directory."""
    root = Path(path)
    tracks: dict[str, ScoreTrack] = {}
    for file in sorted(root.iterdir()):
        if file.suffix == ".oads":
            fmt = "binary"
        elif file.suffix == ".csv":
            fmt = "csv"
        else:
            continue
        if file.stem in tracks:
            raise FormatError(f"two score files for video {file.stem!r}")
        try:
            tracks[file.stem] = read_scores(file.read_bytes(), fmt, file.stem, class_names)
        except FormatError as exc:
            raise FormatError(f"{file.name}: {exc}") from None
    return ScoreSet(tracks)


def save_score_dir(scores: ScoreSet, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for vid in sorted(scores.tracks):
        (root / f"{vid}.oads").write_bytes(write_scores(scores.tracks[vid]))
