import io
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from oadeval.errors import FormatError, MissingReferenceError
from oadeval.scores import (
    ScoreSet,
    ScoreTrack,
    load_score_dir,
    read_scores,
    read_window_scores,
    save_score_dir,
    stream_binary,
    stream_frames,
    write_scores,
    write_window_scores,
)

finite_f32 = st.floats(width=32, allow_nan=False, allow_infinity=False)
score_arrays = hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, min_side=0, max_side=12), elements=finite_f32)


@given(score_arrays)
def test_binary_round_trip_is_bit_exact(values):
    track = ScoreTrack("v", values)
    back = read_scores(write_scores(track), "binary", "v")
    assert back.values.shape == values.shape
    assert back.values.tobytes() == track.values.tobytes()


@given(score_arrays)
def test_csv_round_trip_is_bit_exact(values):
    track = ScoreTrack("v", values)
    back = read_scores(write_scores(track, "csv"), "csv", "v")
    assert back.values.reshape(-1).tobytes() == track.values.reshape(-1).tobytes()


def test_empty_track_is_header_only():
    track = ScoreTrack("v", np.zeros((0, 3), dtype=np.float32))
    data = write_scores(track)
    assert len(data) == 14
    back = read_scores(data)
    assert back.num_frames == 0 and back.num_classes == 3


def test_header_layout_and_exact_payload():
    data = write_scores(ScoreTrack("v", [[0.25]]))
    assert data[:4] == b"OADS"
    assert struct.unpack("<HHIH", data[4:14]) == (1, 0, 1, 1)
    assert data[14:] == struct.pack("<f", 0.25)
    assert read_scores(data).values[0, 0] == 0.25


def test_same_track_written_twice_identical():
    track = ScoreTrack("v", np.random.default_rng(0).random((50, 4), dtype=np.float32))
    assert write_scores(track) == write_scores(track)
    assert write_scores(track, "csv") == write_scores(track, "csv")


def test_short_payload_is_format_error():
    data = write_scores(ScoreTrack("v", np.zeros((10, 2), dtype=np.float32)))
    with pytest.raises(FormatError, match="T=10"):
        read_scores(data[:-8])


@pytest.mark.parametrize("patch", [b"XXXX", None])
def test_bad_magic_or_version(patch):
    data = bytearray(write_scores(ScoreTrack("v", [[1.0]])))
    if patch:
        data[:4] = patch
    else:
        data[4:6] = struct.pack("<H", 9)
    with pytest.raises(FormatError):
        read_scores(bytes(data))


def test_nan_in_binary_is_format_error():
    data = bytearray(write_scores(ScoreTrack("v", [[1.0, 2.0], [3.0, 4.0]])))
    data[14 + 12 : 14 + 16] = struct.pack("<f", float("nan"))
    with pytest.raises(FormatError, match="frame 1, class 1"):
        read_scores(bytes(data))


def test_nan_in_csv_names_coordinates():
    text = b"frame,a,b\n0,0.1,0.2\n1,0.3,nan\n"
    with pytest.raises(FormatError, match="frame 1, class 1") as err:
        read_scores(text, "csv")
    assert err.value.line == 3


def test_csv_header_must_match_catalog():
    with pytest.raises(FormatError):
        read_scores(b"frame,a\n0,1.0\n", "csv", class_names=["b"])


def test_csv_frame_numbers_checked():
    with pytest.raises(FormatError):
        read_scores(b"frame,a\n0,1.0\n2,1.0\n", "csv")


def test_track_rejects_non_finite():
    with pytest.raises(FormatError):
        ScoreTrack("v", [[np.inf]])


def test_stream_frames_order_and_isolation():
    track = ScoreTrack("v", np.arange(6, dtype=np.float32).reshape(3, 2))
    items = list(stream_frames(track))
    assert [t for t, _ in items] == [0, 1, 2]
    row = items[0][1]
    assert row.base is None  # a copy, not a view into the track
    row[:] = -1
    assert track.values[0, 0] == 0


def test_stream_frames_empty():
    assert list(stream_frames(ScoreTrack("v", np.zeros((0, 2))))) == []


def test_stream_binary_reads_prefix_only():
    values = np.arange(20, dtype=np.float32).reshape(10, 2)
    fh = io.BytesIO(write_scores(ScoreTrack("v", values)))
    it = stream_binary(fh)
    t, row = next(it)
    assert t == 0 and row.tolist() == [0.0, 1.0]
    # header (14) plus exactly one row (8) consumed
    assert fh.tell() == 22


def test_stream_binary_truncated():
    data = write_scores(ScoreTrack("v", np.zeros((3, 1))))
    with pytest.raises(FormatError):
        list(stream_binary(io.BytesIO(data[:-2])))


@given(hnp.arrays(np.float32, st.integers(0, 30), elements=finite_f32), st.integers(1, 65535))
def test_window_scores_round_trip(scores, length):
    back, declared = read_window_scores(write_window_scores(scores, length))
    assert declared == length
    assert back.tobytes() == scores.tobytes()


def test_v1_file_reads_as_window_scores_without_length():
    data = write_scores(ScoreTrack("v", [[0.5], [0.25]]))
    values, length = read_window_scores(data)
    assert length is None and values.tolist() == [0.5, 0.25]


def test_v2_file_reads_as_score_track():
    track = read_scores(write_window_scores(np.array([1.0, 2.0]), 20))
    assert track.values.shape == (2, 1)


def test_stream_binary_handles_v2():
    items = list(stream_binary(io.BytesIO(write_window_scores(np.array([1.0, 2.0]), 20))))
    assert [r[0] for _, r in items] == [1.0, 2.0]


def test_score_dir_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    scores = ScoreSet({v: ScoreTrack(v, rng.random((5, 2))) for v in ("ep1", "ep2")})
    save_score_dir(scores, tmp_path)
    back = load_score_dir(tmp_path)
    assert sorted(back.tracks) == ["ep1", "ep2"]
    for v in back.tracks:
        assert back[v].values.tobytes() == scores[v].values.tobytes()


def test_scoreset_missing_video():
    with pytest.raises(MissingReferenceError):
        ScoreSet({})["nope"]


def test_scoreset_rejects_mixed_widths():
    with pytest.raises(FormatError):
        ScoreSet({"a": ScoreTrack("a", np.zeros((2, 1))), "b": ScoreTrack("b", np.zeros((2, 2)))})
