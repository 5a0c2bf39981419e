import numpy as np
import pytest

from ruleloc.core import (
    BinaryDataset,
    InvalidDatasetError,
    Rule,
    RuleSet,
    bitset_of,
    cover_of_set,
    f1_score,
)
from ruleloc.select import (
    SelectionConfig,
    SelectionTraceRecord,
    alpha_schedule,
    annotate_rule_set,
    select_rule_set,
)

from conftest import random_dataset


def test_alpha_schedule_k2():
    assert alpha_schedule(2, 1.0) == [0.5, 1.0]


def test_alpha_schedule_gamma_zero():
    assert alpha_schedule(5, 0.0) == [1.0] * 5


def test_alpha_schedule_k4():
    assert alpha_schedule(4, 1.0) == pytest.approx(
        [0.421875, 0.5625, 0.75, 1.0], abs=1e-15
    )


def test_alpha_schedule_monotone_ends_at_one():
    for k in (1, 3, 7):
        for gamma in (0.0, 0.3, 1.0):
            sched = alpha_schedule(k, gamma)
            assert sched[-1] == 1.0
            assert all(a <= b + 1e-15 for a, b in zip(sched, sched[1:]))
            assert all(0.0 < a <= 1.0 for a in sched)


def test_alpha_schedule_rejects_bad_gamma():
    with pytest.raises(ValueError):
        alpha_schedule(3, 1.5)
    with pytest.raises(ValueError):
        alpha_schedule(3, -0.1)


def test_toy_selection_with_schedule(toy_dataset):
    rs = select_rule_set(
        toy_dataset, SelectionConfig(max_rules=2, gamma=1.0, max_len=1)
    )
    assert sorted(r.features for r in rs.rules) == [(0,), (1,)]
    cover = cover_of_set(toy_dataset, rs.rules)
    assert (cover & toy_dataset.labels).bit_count() == 20
    assert (cover & ~toy_dataset.labels & toy_dataset.full_mask).bit_count() == 2
    assert f1_score(toy_dataset, rs) == pytest.approx(40 / 42, abs=1e-15)


def test_toy_selection_undistorted_picks_broad_rule_first(toy_dataset):
    trace = []
    select_rule_set(
        toy_dataset,
        SelectionConfig(max_rules=2, gamma=0.0, max_len=1),
        trace=trace.append,
    )
    first = [r for r in trace if r.accepted][0]
    assert first.rule.features == (2,)


def test_zero_positive_dataset_rejected():
    ds = BinaryDataset(4, (0b1111,), 0)
    with pytest.raises(InvalidDatasetError):
        select_rule_set(ds)


def test_perfectly_separable_stops_after_one_rule():
    labels = bitset_of(range(5))
    noise = bitset_of(range(3, 9))
    ds = BinaryDataset(12, (labels, noise), labels)
    rs = select_rule_set(ds, SelectionConfig(max_rules=4, gamma=1.0, max_len=2))
    assert [r.features for r in rs.rules] == [(0,)]


def test_no_positive_coverage_gives_empty_set():
    ds = BinaryDataset(4, (0b1110,), 0b0001)
    rs = select_rule_set(ds, SelectionConfig(max_rules=2, gamma=1.0, max_len=1))
    assert len(rs) == 0
    assert rs.annotated


def test_every_acceptance_improved_the_distorted_objective(toy_dataset):
    records: list[SelectionTraceRecord] = []
    select_rule_set(
        toy_dataset,
        SelectionConfig(max_rules=2, gamma=1.0, max_len=1),
        trace=records.append,
    )
    for rec in records:
        if rec.accepted and rec.iteration > 0:
            assert rec.alpha * rec.pos_gain - rec.cover_gain > 0


def test_annotate_toy(toy_dataset):
    rs = annotate_rule_set(toy_dataset, RuleSet((Rule.of(0), Rule())))
    a_stats, empty_stats = rs.stats
    assert a_stats.precision == pytest.approx(10 / 11, abs=1e-15)
    assert a_stats.recall == pytest.approx(0.5, abs=1e-15)
    assert a_stats.covered == 11
    # empty rule covers all 120 samples
    assert empty_stats.precision == pytest.approx(20 / 120, abs=1e-15)
    assert empty_stats.recall == 1.0
    assert empty_stats.covered == 120


def test_rule_set_size_and_length_caps():
    rng = np.random.default_rng(21)
    for _ in range(10):
        ds = random_dataset(rng, 150, 12)
        sel = SelectionConfig(max_rules=3, gamma=1.0, max_len=2)
        rs = select_rule_set(ds, sel)
        assert len(rs) <= 3
        assert all(len(r.features) <= 2 for r in rs.rules)


def test_positive_cover_grows_monotonically():
    rng = np.random.default_rng(22)
    for _ in range(10):
        ds = random_dataset(rng, 120, 10)
        records = []
        select_rule_set(
            ds,
            SelectionConfig(max_rules=4, gamma=1.0, max_len=2),
            trace=records.append,
        )
        accepted = [r.rule for r in records if r.accepted]
        cover = 0
        for i in range(1, len(accepted) + 1):
            new_cover = cover_of_set(ds, accepted[:i]) & ds.labels
            assert cover & ~new_cover == 0
            cover = new_cover


def test_selection_is_deterministic():
    rng = np.random.default_rng(23)
    ds = random_dataset(rng, 200, 15)
    sel = SelectionConfig(max_rules=4, gamma=1.0, max_len=3)
    first = select_rule_set(ds, sel)
    second = select_rule_set(ds, sel)
    assert first == second


def test_duplicate_rule_guard():
    # one dominant feature; once selected, a regenerated duplicate is rejected
    labels = bitset_of(range(6))
    ds = BinaryDataset(20, (labels | bitset_of([7]),), labels)
    records = []
    rs = select_rule_set(
        ds,
        SelectionConfig(max_rules=3, gamma=0.0, max_len=1),
        trace=records.append,
    )
    assert [r.features for r in rs.rules] == [(0,)]
    reasons = [r.reason for r in records]
    assert any("duplicate" in reason or "covered" in reason for reason in reasons[1:])
