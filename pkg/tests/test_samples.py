import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpre.samples import (
    AccessPath,
    AccessRecord,
    AccessSample,
    DataError,
    SampleConfig,
    corpus_from_csv,
    corpus_to_csv,
    extract_samples,
    flatten_corpus,
    update_corpus,
)
from dpre.topology import Node, SensingType

T = SensingType.TEMPERATURE
H = SensingType.HUMIDITY


def rec(node_id, tti, latency=12, path=AccessPath.CONVENTIONAL):
    return AccessRecord(node_id, tti, path, latency)


def brute_force_samples(records, nodes, cfg):
    """Literal evaluation of the membership predicate, O(n^2)."""
    by_id = {n.id: n for n in nodes}
    out = []
    for i, r in enumerate(records):
        label = by_id[r.node_id]
        feats = []
        for j, other_rec in enumerate(records):
            if j == i or other_rec.node_id == r.node_id:
                continue
            if abs(other_rec.access_tti - r.access_tti) > cfg.time_window:
                continue
            other = by_id[other_rec.node_id]
            same_type = other.sensing_type is label.sensing_type
            dx = other.x - label.x
            dy = other.y - label.y
            if same_type or (dx * dx + dy * dy) ** 0.5 <= cfg.distance_radius:
                feats.append(other.id)
        out.append(AccessSample(label.id, tuple(feats), r.access_tti))
    return out


def test_boundary_inclusion_closed_interval():
    nodes = [
        Node(1, (0.0, 0.0), T, 0),
        Node(2, (100.0, 0.0), T, 0),      # same type, far away
        Node(3, (0.5, 0.0), H, 0),        # different type, exactly at radius
    ]
    cfg = SampleConfig(time_window=5, distance_radius=0.5)
    records = [rec(2, 5), rec(1, 10), rec(3, 15)]
    samples = extract_samples(records, nodes, cfg)
    target = next(s for s in samples if s.label == 1)
    assert sorted(target.features) == [2, 3]


def test_predicate_violation_excluded():
    nodes = [
        Node(1, (0.0, 0.0), T, 0),
        Node(3, (0.5 + 1e-6, 0.0), H, 0),  # just outside the radius
    ]
    cfg = SampleConfig(time_window=5, distance_radius=0.5)
    samples = extract_samples([rec(1, 10), rec(3, 12)], nodes, cfg)
    assert samples[0].features == ()


def test_hand_built_trace_exact():
    nodes = [
        Node(1, (0.0, 0.0), T, 0),
        Node(2, (0.0, 0.5), H, 0),   # within radius of node 1
        Node(3, (10.0, 0.0), T, 0),  # same type as 1, far from both
    ]
    cfg = SampleConfig(time_window=2, distance_radius=1.0)
    records = [rec(1, 2), rec(2, 3), rec(2, 4), rec(3, 5)]
    samples = extract_samples(records, nodes, cfg)
    assert samples == [
        AccessSample(1, (2, 2), 2),   # node 2 accessed twice inside the window
        AccessSample(2, (1,), 3),     # self access at tti 4 is not a feature
        AccessSample(2, (1,), 4),
        AccessSample(3, (), 5),       # node 1's access fell out of the window
    ]
    assert samples == brute_force_samples(records, nodes, cfg)


def test_membership_not_symmetric():
    nodes = [Node(1, (0.0, 0.0), T, 0), Node(2, (3.0, 0.0), T, 0)]
    cfg = SampleConfig(time_window=2, distance_radius=0.5)
    # 2's access at tti 4 is in 1's window [1,5]; 1's access at tti 3 is in 2's
    # window too, but a later access of 1 at tti 7 sees nothing.
    records = [rec(1, 3), rec(2, 4), rec(1, 7)]
    samples = extract_samples(records, nodes, cfg)
    assert samples[0].features == (2,)
    assert samples[1].features == (1,)
    assert samples[2].features == ()


def test_unknown_node_rejected():
    nodes = [Node(1, (0.0, 0.0), T, 0)]
    with pytest.raises(DataError):
        extract_samples([rec(9, 4)], nodes, SampleConfig())


def test_unsorted_records_rejected():
    nodes = [Node(1, (0.0, 0.0), T, 0), Node(2, (0.0, 0.1), T, 0)]
    with pytest.raises(DataError):
        extract_samples([rec(1, 9), rec(2, 3)], nodes, SampleConfig())


@st.composite
def random_trace(draw):
    n_nodes = draw(st.integers(2, 5))
    nodes = [
        Node(i + 1,
             (draw(st.floats(0, 3, allow_nan=False)), draw(st.floats(0, 1, allow_nan=False))),
             draw(st.sampled_from([T, H])), 0)
        for i in range(n_nodes)
    ]
    n_rec = draw(st.integers(1, 12))
    ttis = sorted(draw(st.lists(st.integers(0, 40), min_size=n_rec, max_size=n_rec)))
    records = [rec(draw(st.integers(1, n_nodes)), t) for t in ttis]
    return nodes, records


@given(random_trace())
@settings(max_examples=120, deadline=None)
def test_extraction_matches_brute_force(trace):
    nodes, records = trace
    cfg = SampleConfig(time_window=6, distance_radius=0.8)
    assert extract_samples(records, nodes, cfg) == brute_force_samples(records, nodes, cfg)


def test_update_corpus_appends():
    cfg = SampleConfig()
    corpus = update_corpus([], [AccessSample(1, (), 0)] * 3, cfg)
    assert len(flatten_corpus(corpus)) == 3


def test_update_corpus_eviction_boundary():
    cfg = SampleConfig(retention_epochs=1)
    corpus = update_corpus([], [AccessSample(1, (), 0)], cfg)
    corpus = update_corpus(corpus, [AccessSample(2, (), 99)], cfg)
    flat = flatten_corpus(corpus)
    assert [s.label for s in flat] == [2]


def test_update_corpus_chronological():
    cfg = SampleConfig(retention_epochs=4)
    corpus = []
    for epoch in range(3):
        batch = [AccessSample(1, (), epoch * 100 + k) for k in range(2)]
        corpus = update_corpus(corpus, batch, cfg)
    ttis = [s.tti for s in flatten_corpus(corpus)]
    assert ttis == sorted(ttis)


def test_corpus_csv_roundtrip(tmp_path):
    cfg = SampleConfig()
    corpus = update_corpus([], [AccessSample(4, (1, 2, 2), 17), AccessSample(5, (), 20)], cfg)
    path = tmp_path / "corpus.csv"
    corpus_to_csv(corpus, path)
    assert corpus_from_csv(path) == flatten_corpus(corpus)


def test_label_range_filters_labels_not_features():
    nodes = [Node(1, (0.0, 0.0), T, 0), Node(2, (0.1, 0.0), T, 0)]
    cfg = SampleConfig(time_window=5, distance_radius=0.5)
    records = [rec(2, 8), rec(1, 10)]
    samples = extract_samples(records, nodes, cfg, label_range=(10, 20))
    assert [s.label for s in samples] == [1]
    assert samples[0].features == (2,)  # feature drawn from outside the range
