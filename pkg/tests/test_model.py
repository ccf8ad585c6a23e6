from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from listen.model import (
    AttributeSchema,
    Dataset,
    FeatureVector,
    Item,
    SchemaError,
    WeightVector,
    argmax_index,
    argmax_item,
    build_feature_matrix,
    feature_array,
    feature_layout,
    minmax_array,
    normalize_minmax,
    score,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_layout_numerical_then_one_hot(tiny):
    assert feature_layout(tiny) == ("price", "duration", "airline=AA", "airline=UA", "airline=DL")
    assert feature_layout(tiny, include_categorical=False) == ("price", "duration")


def test_one_hot_rows_sum_to_one(tiny):
    arr, layout = feature_array(tiny)
    onehot = arr[:, [j for j, k in enumerate(layout) if "=" in k]]
    assert np.array_equal(onehot.sum(axis=1), np.ones(4))
    assert arr[1, layout.index("airline=UA")] == 1.0


def test_minmax_constant_column_is_zero():
    arr = np.array([[1.0, 5.0], [3.0, 5.0], [2.0, 5.0]])
    out = minmax_array(arr)
    assert out[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert out[:, 0].tolist() == [0.0, 1.0, 0.5]


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 5)), elements=finite))
def test_minmax_idempotent_and_bounded(arr):
    once = minmax_array(arr)
    assert np.all((once >= 0) & (once <= 1))
    np.testing.assert_allclose(minmax_array(once), once, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.tuples(st.integers(2, 10), st.just(3)), elements=st.floats(-100, 100)),
    arrays(np.float64, 3, elements=st.floats(-1, 1)),
    st.floats(0.01, 50),
)
def test_argmax_invariant_under_positive_scaling(x, w, c):
    # up to float rounding, which can only swap near-tied items
    s = x @ w
    j = argmax_index(x @ (c * w))
    assert s[j] >= s.max() - 1e-9 * (1 + abs(s).max())


def test_argmax_ties_go_to_first():
    assert argmax_index(np.array([1.0, 3.0, 3.0, 2.0])) == 1
    with pytest.raises(ValueError):
        argmax_index(np.array([]))


def test_score_and_argmax_item(tiny):
    vecs, layout = build_feature_matrix(tiny)
    scaled = normalize_minmax(vecs)
    w = WeightVector({k: 0.0 for k in layout} | {"price": -1.0})
    assert argmax_item(w, scaled, tiny.items).id == "f2"
    assert score(w, scaled[3]) == pytest.approx(-1.0)


def test_weight_vector_checks():
    with pytest.raises(SchemaError):
        WeightVector({"a": float("nan")})
    w = WeightVector({"a": 1.0, "b": 2.0})
    with pytest.raises(SchemaError, match="missing"):
        w.as_array(["a", "c"])
    assert w.as_array(["b", "a"]).tolist() == [2.0, 1.0]
    assert WeightVector.from_array([1, 2], ["a", "b"]) == w
    assert WeightVector.zeros(["x"]).weights == {"x": 0.0}


def test_normalize_rejects_mixed_layouts():
    with pytest.raises(SchemaError):
        normalize_minmax([FeatureVector((1.0,), ("a",)), FeatureVector((1.0,), ("b",))])


def test_numerical_attribute_needs_direction():
    with pytest.raises(SchemaError, match="maximize or minimize"):
        AttributeSchema("x", "numerical", "neutral")
    with pytest.raises(SchemaError, match="unknown kind"):
        AttributeSchema("x", "ordinal", "maximize")


def test_dataset_validation_collects_problems(tiny):
    dup = tiny.items + (Item("f1", {"price": 1.0, "duration": 1.0}, {"airline": "AA"}),)
    with pytest.raises(SchemaError, match="duplicate item id 'f1'"):
        Dataset("d", tiny.schema, dup)
    with pytest.raises(SchemaError, match="not an item"):
        Dataset("d", tiny.schema, tiny.items, ground_truth=("zz",))
    with pytest.raises(SchemaError, match="non-finite"):
        Dataset("d", tiny.schema, (Item("a", {"price": float("inf"), "duration": 1.0}),))
    with pytest.raises(SchemaError, match="tie group"):
        Dataset("d", tiny.schema, tiny.items, ground_truth=("f1",), tie_group_size=2)


def test_missing_values_rejected(tiny):
    ds = Dataset("d", tiny.schema, (Item("a", {"price": 1.0}, {"airline": "AA"}),))
    with pytest.raises(SchemaError, match="a.duration"):
        feature_array(ds)


def test_layout_deterministic_across_calls(tiny):
    assert feature_layout(tiny) == feature_layout(tiny)
    assert tiny.index_of("f3") == 2
    assert tiny.top_group() == ("f3",)


def _items(values, cats=None):
    schema = [AttributeSchema("price", "numerical", "minimize")]
    if cats:
        schema.append(AttributeSchema("airline", "categorical"))
    items = tuple(Item(f"i{j}", {"price": float(v)}, {"airline": cats[j]} if cats else {})
                  for j, v in enumerate(values))
    return Dataset("d", tuple(schema), items)


def test_feature_matrix_examples():
    vecs, layout = build_feature_matrix(_items([3, 7]), include_categorical=False)
    assert layout == ("price",) and [v.values for v in vecs] == [(3.0,), (7.0,)]
    vecs, layout = build_feature_matrix(_items([3, 7], ["AA", "UA"]), include_categorical=True)
    assert layout == ("price", "airline=AA", "airline=UA")
    assert [v.values[1:] for v in vecs] == [(1.0, 0.0), (0.0, 1.0)]


@pytest.mark.parametrize("column,expected", [([10, 20, 30], [0, 0.5, 1]), ([5, 5, 5], [0, 0, 0]), ([-1, 1], [0, 1])])
def test_minmax_examples(column, expected):
    assert minmax_array(np.array(column, dtype=float)[:, None])[:, 0].tolist() == expected


def test_score_examples():
    assert score(WeightVector({"a": 1.0, "b": -2.0}), FeatureVector((3.0, 1.0), ("a", "b"))) == 1.0
    assert score(WeightVector({"a": 0.0, "b": 0.0}), FeatureVector((9.0, -4.0), ("a", "b"))) == 0.0
    assert score(WeightVector({"a": 0.5}), FeatureVector((0.4,), ("a",))) == pytest.approx(0.2)
    with pytest.raises(SchemaError):
        score(WeightVector({"a": 1.0}), FeatureVector((1.0,), ("b",)))


def test_argmax_matches_scan():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.random((10, 3))
        w = rng.uniform(-1, 1, 3)
        s = x @ w
        assert argmax_index(s) == max(range(10), key=lambda i: (s[i], -i))
    assert argmax_index(np.array([0.1, 0.9, 0.4])) == 1
    assert argmax_index(np.array([0.5, 0.5])) == 0
