import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oadeval.annotations import dataset_stats, frame_labels, serialize_dataset, validate
from oadeval.errors import CapacityError, DomainError
from oadeval.metrics import evaluate_online_all
from oadeval.synth import (
    TVSERIES_CLASSES,
    DetectorModel,
    generate_annotations,
    generate_scores,
    parse_model,
    tvseries_like_dataset,
)


def test_annotations_deterministic():
    a = generate_annotations(42, 3, 1000, 4, 6, (10, 80), flag_rates={"atypical": 0.3})
    b = generate_annotations(42, 3, 1000, 4, 6, (10, 80), flag_rates={"atypical": 0.3})
    assert serialize_dataset(a) == serialize_dataset(b)
    assert serialize_dataset(a) != serialize_dataset(generate_annotations(43, 3, 1000, 4, 6, (10, 80)))


def test_zero_instances():
    ds = generate_annotations(1, 2, 100, 3, 0, (5, 10))
    assert ds.instances == ()
    assert all(c.prevalence == 0 for c in dataset_stats(ds).classes)


def test_duration_longer_than_video_is_capacity_error():
    with pytest.raises(CapacityError):
        generate_annotations(1, 2, 50, 1, 1, (60, 70))


def test_overfull_video_is_capacity_error():
    with pytest.raises(CapacityError):
        generate_annotations(1, 1, 100, 1, 20, (10, 10), max_retries=50)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_generated_datasets_are_valid_and_non_overlapping(seed, exclusive):
    ds = generate_annotations(seed, 3, 400, 3, 4, (5, 40), splits=("train", "test"), exclusive=exclusive)
    assert validate(ds) == []
    for v in ds.videos:
        for c in range(3):
            insts = ds.instances_of(v, c)
            assert frame_labels(ds, v, c).sum() == sum(i.duration for i in insts)
        if exclusive:
            total = sum(frame_labels(ds, v, c).sum() for c in range(3))
            assert total == sum(i.duration for i in ds.instances if i.video_id == v)


def test_splits_round_robin():
    ds = generate_annotations(0, 4, 100, 1, 1, (5, 5), splits=("train", "test"))
    assert [ds.videos[v].split for v in ds.video_ids()] == ["train", "test", "train", "test"]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_separates_exactly(seed):
    ds = generate_annotations(seed, 2, 500, 3, 5, (1, 60))
    scores = generate_scores(ds, DetectorModel("oracle"), seed)
    for c in range(3):
        pos, neg = [], []
        for v in ds.videos:
            lab = frame_labels(ds, v, c)
            col = scores[v].values[:, c]
            pos.append(col[lab])
            neg.append(col[~lab])
        pos, neg = np.concatenate(pos), np.concatenate(neg)
        if len(pos):
            assert pos.min() > neg.max()
            assert pos.min() > 0.5 and pos.max() <= 1.0
        assert neg.min() >= 0 and neg.max() < 0.5


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["oracle", "random", "noisy:0.2", "ramp", "delayed:3"]))
def test_scores_deterministic(seed, model):
    ds = generate_annotations(seed, 2, 300, 2, 3, (5, 30))
    a = generate_scores(ds, parse_model(model), seed)
    b = generate_scores(ds, parse_model(model), seed)
    for v in ds.videos:
        assert a[v].values.tobytes() == b[v].values.tobytes()


def test_per_video_scores_independent_of_other_videos():
    ds = generate_annotations(3, 3, 300, 2, 3, (5, 30))
    full = generate_scores(ds, DetectorModel("random_uniform"), 3)
    only_test = generate_scores(ds, DetectorModel("random_uniform"), 3, split="test")
    assert full["v001"].values.tobytes() == only_test["v001"].values.tobytes()


def test_delayed_zero_is_oracle():
    ds = generate_annotations(6, 2, 500, 2, 5, (5, 50))
    a = generate_scores(ds, DetectorModel("delayed", delay=0), 6)
    b = generate_scores(ds, DetectorModel("oracle"), 6)
    for v in ds.videos:
        assert a[v].values.tobytes() == b[v].values.tobytes()


def test_delayed_hides_the_start():
    ds = generate_annotations(6, 1, 500, 1, 3, (20, 20))
    scores = generate_scores(ds, DetectorModel("delayed", delay=5), 6)
    col = scores["v000"].values[:, 0]
    for inst in ds.instances:
        assert (col[inst.start_frame : inst.start_frame + 5] < 0.5).all()
        assert (col[inst.start_frame + 5 : inst.end_frame + 1] > 0.5).all()


def test_delayed_fraction_only_on_flagged():
    ds = generate_annotations(2, 2, 3000, 1, 30, (20, 20), flag_rates={"truncated_start": 0.5})
    model = DetectorModel("delayed", delay_fraction=0.4, flag="truncated_start")
    scores = generate_scores(ds, model, 2)
    for inst in ds.instances:
        col = scores[inst.video_id].values[inst.start_frame : inst.end_frame + 1, 0]
        hidden = (col < 0.5).sum()
        assert hidden == (8 if inst.flags.truncated_start else 0)


def test_ramp_values():
    ds = generate_annotations(0, 1, 200, 1, 2, (10, 10))
    col = generate_scores(ds, DetectorModel("ramp"), 0)["v000"].values[:, 0]
    for inst in ds.instances:
        assert col[inst.start_frame : inst.end_frame + 1].tolist() == pytest.approx([(k + 1) / 10 for k in range(10)])
    outside = np.ones(200, bool)
    for inst in ds.instances:
        outside[inst.start_frame : inst.end_frame + 1] = False
    assert col[outside].max() <= 0.05


def test_noisy_oracle_is_unclamped():
    ds = generate_annotations(0, 1, 5000, 1, 10, (10, 50))
    col = generate_scores(ds, DetectorModel("noisy_oracle", sigma=1.0), 0)["v000"].values
    assert col.min() < 0 and col.max() > 1


def test_oracle_online_is_perfect():
    ds = generate_annotations(4, 3, 1000, 5, 6, (5, 100))
    rep = evaluate_online_all(ds, generate_scores(ds, DetectorModel("oracle"), 4))
    assert all(r.cap == 1.0 and r.ap == 1.0 for r in rep.results)


@pytest.mark.parametrize(
    "text, model",
    [
        ("oracle", DetectorModel("oracle")),
        ("random", DetectorModel("random_uniform")),
        ("noisy:0.3", DetectorModel("noisy_oracle", sigma=0.3)),
        ("ramp", DetectorModel("ramp")),
        ("delayed:4", DetectorModel("delayed", delay=4)),
        ("delayed:40%@truncated_start", DetectorModel("delayed", delay_fraction=0.4, flag="truncated_start")),
    ],
)
def test_parse_model(text, model):
    assert parse_model(text) == model


@pytest.mark.parametrize("text", ["", "psychic", "noisy:x", "noisy:0", "delayed:-1", "delayed:5@nope"])
def test_parse_model_errors(text):
    with pytest.raises(DomainError):
        parse_model(text)


def test_tvseries_fixture_shape():
    ds = tvseries_like_dataset(0)
    assert ds.catalog == TVSERIES_CLASSES and len(ds.catalog) == 30
    assert len(ds.instances) == 6231
    assert len(ds.videos) == 27
    assert validate(ds) == []
    st_ = dataset_stats(ds)
    assert st_.total_frames == 1_440_000
    assert st_.total_hours == pytest.approx(16.0)
    assert {ds.videos[v].split for v in ds.videos} == {"train", "validation", "test"}
