import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oadeval.annotations import ActionInstance, Dataset, MetadataFlags, VideoAnnotation  # noqa: E402
from oadeval.scores import ScoreSet, ScoreTrack  # noqa: E402


def make_dataset(videos, catalog, instances):
    """videos: {id: num_frames or (num_frames, split)}; instances: (vid, cls, s, e[, flags])."""
    anns = {}
    for vid, spec in videos.items():
        frames, split = spec if isinstance(spec, tuple) else (spec, "test")
        anns[vid] = VideoAnnotation(vid, frames, split=split)
    insts = []
    for row in instances:
        flags = row[4] if len(row) > 4 else MetadataFlags()
        insts.append(ActionInstance(row[0], row[1], row[2], row[3], flags))
    return Dataset(tuple(catalog), anns, tuple(insts))


def make_scores(arrays):
    return ScoreSet({vid: ScoreTrack(vid, np.asarray(a, dtype=np.float32).reshape(len(a), -1)) for vid, a in arrays.items()})


@pytest.fixture
def small_dataset():
    return make_dataset(
        {"a": 100, "b": 50},
        ["Drink", "Run"],
        [("a", 0, 5, 7), ("a", 1, 10, 30), ("b", 0, 0, 9)],
    )


# acceptance criteria append (number, title, passed, detail) here
ACCEPTANCE_LINES: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {num:2d} {title}: {detail}")
