import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleloc.binarize import (
    BinarizationModel,
    FeatureSpec,
    SchemaError,
    describe_rule,
    feature_matrix,
    fit,
    row_feature_masks,
    transform,
)
from ruleloc.core import Rule


def uniform_table(lo=100.0, hi=500.0, n=4001):
    return {"latency": np.linspace(lo, hi, n).tolist()}


def test_fit_quantile_thresholds_uniform():
    model = fit(uniform_table(), [FeatureSpec("latency", bins=3)])
    (col,) = model.columns
    # analytic 1/3 and 2/3 quantiles of Uniform(100, 500)
    assert col.thresholds == pytest.approx((233.3333, 366.6667), abs=0.2)
    assert [f.op for f in model.catalog] == ["<=", ">", "<=", ">"]


def test_fit_constant_column_yields_nothing():
    model = fit({"x": [7.0] * 50}, [FeatureSpec("x", bins=10)])
    assert model.columns[0].thresholds == ()
    assert model.catalog == ()


def test_fit_categorical_one_hot():
    model = fit(
        {"state": ["waiting", "running", "waiting"]},
        [FeatureSpec("state", kind="categorical")],
    )
    assert model.columns[0].categories == ("running", "waiting")
    assert [f.name for f in model.catalog] == [
        "state == running",
        "state == waiting",
    ]


def test_fit_all_missing_column_warns():
    with pytest.warns(UserWarning):
        model = fit({"x": ["", "", ""]}, [FeatureSpec("x", bins=4)])
    assert model.catalog == ()


def test_fit_empty_table_rejected():
    with pytest.raises(ValueError):
        fit({}, [])
    with pytest.raises(ValueError):
        fit({"x": []}, [FeatureSpec("x")])


def test_fit_default_bins_is_100():
    assert FeatureSpec("x").bins == 100
    values = np.linspace(0, 1, 5000).tolist()
    model = fit({"x": values}, [FeatureSpec("x")])
    # 99 interior quantiles, none at the max
    assert len(model.columns[0].thresholds) == 99


def test_transform_directional_pair():
    model = fit(uniform_table(), [FeatureSpec("latency", bins=3)])
    ds = transform(model, {"latency": [150.0]})
    names = {model.catalog[j].name for j in range(ds.d) if ds.coverage[j] & 1}
    assert names == {
        f"latency <= {model.columns[0].thresholds[0]!r}",
        f"latency <= {model.columns[0].thresholds[1]!r}",
    } | set()  # 150 is below both thresholds; the > sides stay unset
    # the > features for both thresholds must be unset
    for j, feat in enumerate(model.catalog):
        if feat.op == ">":
            assert not ds.coverage[j] & 1


def test_transform_boundary_value_satisfies_le():
    model = BinarizationModel.from_json_obj(
        {
            "schema_version": 1,
            "columns": [{"name": "x", "kind": "numeric", "thresholds": [10.0]}],
            "feature_catalog": [
                {"column": "x", "op": "<=", "threshold": 10.0},
                {"column": "x", "op": ">", "threshold": 10.0},
            ],
        }
    )
    ds = transform(model, {"x": [10.0]})
    assert ds.coverage[0] == 1 and ds.coverage[1] == 0


def test_transform_missing_value_sets_nothing():
    model = fit({"x": [1.0, 2.0, 3.0, 4.0]}, [FeatureSpec("x", bins=2)])
    ds = transform(model, {"x": ["", 2.0]})
    assert all(not cov & 1 for cov in ds.coverage)
    assert any(cov & 2 for cov in ds.coverage)


def test_transform_unknown_category_uncovered():
    model = fit({"s": ["a", "b"]}, [FeatureSpec("s", kind="categorical")])
    ds = transform(model, {"s": ["c"]})
    assert all(cov == 0 for cov in ds.coverage)


def test_transform_carries_labels():
    model = fit({"x": [0.0, 1.0, 2.0, 3.0]}, [FeatureSpec("x", bins=2)])
    ds = transform(model, {"x": [0.0, 3.0]}, labels=[1, 0])
    assert ds.labels == 0b01


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_directional_partition_property(seed):
    """At every threshold, (<=) and (>) partition the non-missing rows."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    values = rng.normal(size=n) * float(rng.uniform(0.5, 100))
    missing = rng.random(n) < 0.15
    column = ["" if m else float(v) for v, m in zip(values, missing)]
    present = sum(1 for m in missing if not m)
    if present == 0:
        return
    model = fit({"x": column}, [FeatureSpec("x", bins=int(rng.integers(2, 12)))])
    ds = transform(model, {"x": column})
    present_mask = 0
    for i, m in enumerate(missing):
        if not m:
            present_mask |= 1 << i
    for j in range(0, ds.d, 2):
        le, gt = ds.coverage[j], ds.coverage[j + 1]
        assert le & gt == 0
        assert le | gt == present_mask


def test_thresholds_are_permutation_invariant():
    rng = np.random.default_rng(77)
    values = rng.normal(size=500).tolist()
    spec = [FeatureSpec("x", bins=7)]
    direct = fit({"x": values}, spec)
    shuffled = values[:]
    rng.shuffle(shuffled)
    assert fit({"x": shuffled}, spec).columns == direct.columns


def test_describe_rule_conjunction():
    model = BinarizationModel.from_json_obj(
        {
            "schema_version": 1,
            "columns": [
                {"name": "proc", "kind": "numeric", "thresholds": [23.75]},
                {"name": "count_diff", "kind": "numeric", "thresholds": [1042.45]},
            ],
            "feature_catalog": [
                {"column": "proc", "op": "<=", "threshold": 23.75},
                {"column": "proc", "op": ">", "threshold": 23.75},
                {"column": "count_diff", "op": "<=", "threshold": 1042.45},
                {"column": "count_diff", "op": ">", "threshold": 1042.45},
            ],
        }
    )
    assert (
        describe_rule(model, Rule.of(1, 2))
        == "proc > 23.75 ∧ count_diff <= 1042.45"
    )
    assert describe_rule(model, Rule()) == "TRUE"


def test_describe_rule_merges_intervals():
    model = BinarizationModel.from_json_obj(
        {
            "schema_version": 1,
            "columns": [{"name": "x", "kind": "numeric", "thresholds": [100.0, 200.0]}],
            "feature_catalog": [
                {"column": "x", "op": "<=", "threshold": 100.0},
                {"column": "x", "op": ">", "threshold": 100.0},
                {"column": "x", "op": "<=", "threshold": 200.0},
                {"column": "x", "op": ">", "threshold": 200.0},
            ],
        }
    )
    assert describe_rule(model, Rule.of(1, 2)) == "100.0 < x <= 200.0"
    # several bounds on one side collapse to the tight one
    assert describe_rule(model, Rule.of(0, 2)) == "x <= 100.0"


def test_describe_matches_feature_names_roundtrip():
    rng = np.random.default_rng(3)
    table = {
        "a": rng.normal(size=200).tolist(),
        "s": [str(x) for x in rng.integers(0, 3, size=200)],
    }
    model = fit(
        table, [FeatureSpec("a", bins=4), FeatureSpec("s", kind="categorical")]
    )
    ds = transform(model, table)
    for j, feat in enumerate(model.catalog):
        assert describe_rule(model, Rule.of(j)) == feat.name == ds.feature_names[j]


def test_json_roundtrip():
    rng = np.random.default_rng(4)
    table = {
        "a": rng.normal(size=100).tolist(),
        "s": ["x", "y"] * 50,
    }
    model = fit(
        table, [FeatureSpec("a", bins=5), FeatureSpec("s", kind="categorical")]
    )
    restored = BinarizationModel.from_json(model.to_json())
    assert restored == model
    obj = json.loads(model.to_json())
    assert obj["schema_version"] == 1


def test_transform_missing_column_is_schema_error():
    model = fit({"x": [1.0, 2.0]}, [FeatureSpec("x", bins=2)])
    with pytest.raises(SchemaError):
        transform(model, {"y": [1.0]})


def test_row_feature_masks_match_transform():
    rng = np.random.default_rng(5)
    table = {"a": rng.normal(size=30).tolist()}
    model = fit(table, [FeatureSpec("a", bins=4)])
    ds = transform(model, table)
    masks = row_feature_masks(model, table)
    for i in range(30):
        expected = 0
        for j in range(ds.d):
            if ds.coverage[j] >> i & 1:
                expected |= 1 << j
        assert masks[i] == expected


def test_deterministic_given_same_bytes():
    rng = np.random.default_rng(6)
    table = {"a": rng.normal(size=64).tolist()}
    m1 = fit(table, [FeatureSpec("a", bins=9)])
    m2 = fit(table, [FeatureSpec("a", bins=9)])
    assert m1.to_json() == m2.to_json()
    assert feature_matrix(m1, table).tobytes() == feature_matrix(m2, table).tobytes()
