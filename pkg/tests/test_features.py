"""Context-view matrix construction and vectorization."""

from datetime import datetime

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from roleminer import features, ingest


def _checkin(user, hour, cat="cat_food", lat=40.7, lon=-73.9):
    return ingest.CheckIn(
        user, "p", cat, cat, lat, lon, datetime(2012, 4, 7, hour, 0, 0)
    )


ROOTS = ingest.RootCategoryMap(
    {"cat_food": "Food", "cat_travel": "Travel & Transport"}
)
AXES = dict(
    contexts=[features.time_axis()],
    views=[features.root_view(ingest.DEFAULT_ROOT_LABELS)],
)


def test_counts_land_in_one_cell():
    cs = [_checkin("u1", 17) for _ in range(3)]
    fs = features.build_ufs(cs, root_map=ROOTS, **AXES)
    m = fs.matrix("u1", ("time", "root"))
    food = ingest.DEFAULT_ROOT_LABELS.index("Food")
    assert m.counts[17, food] == 3
    assert m.counts.sum() == 3


def test_user_without_events_is_absent():
    fs = features.build_ufs([], root_map=ROOTS, **AXES)
    assert fs.users() == []


def test_unresolvable_category_skipped_and_counted():
    cs = [_checkin("u1", 17), _checkin("u1", 18, cat="mystery")]
    fs = features.build_ufs(cs, root_map=ROOTS, **AXES)
    assert fs.skipped_events == 1
    assert fs.matrix("u1", ("time", "root")).counts.sum() == 1


def test_unresolvable_category_strict_raises():
    with pytest.raises(features.FeatureError, match="mystery"):
        features.build_ufs(
            [_checkin("u1", 17, cat="mystery")], root_map=ROOTS, strict=True, **AXES
        )


def test_two_pairs_have_expected_shapes():
    cs = [_checkin("u1", 17)]
    homes = ingest.infer_homes(cs)
    fs = features.build_ufs(
        cs,
        contexts=[features.time_axis(), features.distance_axis()],
        views=[features.root_view(ingest.DEFAULT_ROOT_LABELS)],
        root_map=ROOTS,
        homes=homes,
    )
    assert fs.matrix("u1", ("time", "root")).counts.shape == (24, 9)
    assert fs.matrix("u1", ("distance", "root")).counts.shape == (4, 9)
    assert len(fs.pairs) == 2


def test_distance_context_requires_home():
    with pytest.raises(features.FeatureError, match="home"):
        features.build_ufs(
            [_checkin("u1", 17)],
            contexts=[features.distance_axis()],
            views=[features.root_view(ingest.DEFAULT_ROOT_LABELS)],
            root_map=ROOTS,
        )


def _matrix(counts):
    counts = np.asarray(counts, float)
    ctx = features.ContextAxis("time", tuple(f"h{i}" for i in range(counts.shape[0])))
    view = features.ViewAxis("root", tuple(f"v{i}" for i in range(counts.shape[1])))
    return features.FeatureMatrix("u", ctx, view, counts)


def test_normalize_l1():
    m = features.normalize(_matrix([[2.0, 1.0], [1.0, 0.0]]))
    assert m.counts[0, 0] == 0.5
    assert m.counts.sum() == pytest.approx(1.0, abs=1e-12)


def test_normalize_zero_total_flagged():
    m = features.normalize(_matrix([[0.0, 0.0]]))
    assert m.zero_total
    assert (m.counts == 0).all()


def test_normalize_none_is_identity():
    m = _matrix([[2.0, 1.0]])
    assert features.normalize(m, "none") is m


def test_flatten_row_major():
    m = _matrix([[1.0, 2.0], [3.0, 4.0]])
    assert features.flatten(m).tolist() == [1.0, 2.0, 3.0, 4.0]


def test_flatten_length_matches_axes():
    m = _matrix(np.zeros((24, 9)))
    assert features.flatten(m).shape == (216,)


@given(
    hnp.arrays(
        float,
        st.tuples(st.integers(1, 6), st.integers(1, 6)),
        elements=st.floats(0, 1e6),
    )
)
def test_flatten_unflatten_round_trip(counts):
    m = _matrix(counts)
    assert (features.unflatten(features.flatten(m), m.context, m.view) == counts).all()


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 23)), max_size=60))
def test_matrix_total_equals_event_count(events):
    cs = [_checkin(f"u{uid}", hour) for uid, hour in events]
    fs = features.build_ufs(cs, root_map=ROOTS, **AXES)
    from collections import Counter

    per_user = Counter(f"u{uid}" for uid, _ in events)
    for user, expected in per_user.items():
        assert fs.matrix(user, ("time", "root")).counts.sum() == expected


@given(st.permutations(list(range(8))))
def test_build_ufs_order_invariant(order):
    base = [
        _checkin("u1", h, cat=c)
        for h, c in zip(range(8), ["cat_food", "cat_travel"] * 4)
    ]
    shuffled = [base[i] for i in order]
    a = features.build_ufs(base, root_map=ROOTS, **AXES)
    b = features.build_ufs(shuffled, root_map=ROOTS, **AXES)
    assert (
        a.matrix("u1", ("time", "root")).counts
        == b.matrix("u1", ("time", "root")).counts
    ).all()


def test_cell_labels_format():
    labels = features.cell_labels(
        features.time_axis(), features.root_view(ingest.DEFAULT_ROOT_LABELS)
    )
    assert labels[17 * 9 + 2] == "h17|Food"
    assert len(labels) == 216


def test_csv_round_trip(tmp_path):
    cs = [_checkin("u1", 17), _checkin("u1", 5, cat="cat_travel"), _checkin("u2", 3)]
    fs = features.build_ufs(cs, root_map=ROOTS, **AXES)
    path = tmp_path / "f.csv"
    features.write_feature_csv(fs, ("time", "root"), path, mode="l1_global")
    users, labels, X = features.read_feature_csv(path)
    assert users == ["u1", "u2"]
    assert len(labels) == 216
    expected = features.pair_vectors(fs, ("time", "root"), "l1_global")
    assert (X[0] == expected["u1"]).all()
    assert (X[1] == expected["u2"]).all()
