import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volcast.metrics import (NAN_ROW, ForecastSeries, MetricRow, accuracy, aggregate, directions, f1,
                             read_metrics_table_csv, render_table, rmse, score, smape,
                             write_metrics_table_csv)

RMSE_0_0_VS_3_4 = 3.5355339059327378  # sqrt(12.5)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
vectors = st.integers(1, 30).flatmap(lambda n: st.tuples(st.lists(finite, min_size=n, max_size=n),
                                                         st.lists(finite, min_size=n, max_size=n)))
bools = st.integers(1, 40).flatmap(lambda n: st.tuples(st.lists(st.booleans(), min_size=n, max_size=n),
                                                       st.lists(st.booleans(), min_size=n, max_size=n)))


def _series(actual, predicted, previous):
    n = len(actual)
    return ForecastSeries("X", np.arange(n), np.array(actual, float), np.array(predicted, float),
                          np.array(previous, float))


def f1_oracle(a, p):
    tp = sum(x and y for x, y in zip(a, p))
    fp = sum((not x) and y for x, y in zip(a, p))
    fn = sum(x and not y for x, y in zip(a, p))
    if tp == 0:
        return 0.0
    return float(Fraction(2 * tp, 2 * tp + fp + fn))


# --- value metrics -----------------------------------------------------------------

def test_rmse_examples():
    assert rmse([0.2, 0.3], [0.2, 0.3]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(RMSE_0_0_VS_3_4, abs=1e-12)


def test_smape_examples():
    assert smape([0.5, 2.0], [0.5, 2.0]) == 0.0
    assert smape([1.0], [0.0]) == pytest.approx(200.0, abs=1e-12)
    assert smape([1.0], [3.0]) == pytest.approx(100.0, abs=1e-12)
    assert smape([0.0, 1.0], [0.0, 3.0]) == pytest.approx(50.0, abs=1e-12)


def test_value_metric_errors():
    for fn in (rmse, smape):
        with pytest.raises(ValueError):
            fn([], [])
        with pytest.raises(ValueError):
            fn([1.0], [1.0, 2.0])


@settings(max_examples=300, deadline=None)
@given(vectors, st.floats(1e-3, 1e3))
def test_value_metric_symmetries(pair, c):
    a, p = map(np.array, pair)
    assert rmse(a, p) == pytest.approx(rmse(p, a), rel=1e-12)
    assert rmse(c * a, c * p) == pytest.approx(c * rmse(a, p), rel=1e-9, abs=1e-9)
    assert rmse(-c * a, -c * p) == pytest.approx(c * rmse(a, p), rel=1e-9, abs=1e-9)
    assert smape(a, p) == pytest.approx(smape(p, a), rel=1e-12)
    assert smape(c * a, c * p) == pytest.approx(smape(a, p), rel=1e-9, abs=1e-9)


@settings(max_examples=1000, deadline=None)
@given(vectors)
def test_smape_bounded(pair):
    assert 0.0 <= smape(*pair) <= 200.0


# --- direction metrics ----------------------------------------------------------------

def test_directions_examples():
    up_a, up_p = directions(_series([2.0, 1.0], [0.5, 3.0], [1.0, 2.0]))
    assert up_a.tolist() == [True, False] and up_p.tolist() == [False, True]
    up_a, _ = directions(_series([1.0, 1.0], [1.0, 1.0], [1.0, 1.0]))
    assert not up_a.any()
    up_a, up_p = directions(_series([1.2, 0.8, 1.1], [1.2, 0.8, 1.1], [1.0, 1.0, 1.0]))
    np.testing.assert_array_equal(up_a, up_p)


def test_accuracy_examples():
    assert accuracy([True, False], [True, False]) == 1.0
    assert accuracy([True, False], [False, True]) == 0.0
    assert accuracy([True, True, False, False], [True, False, False, True]) == pytest.approx(0.5, abs=1e-12)


def test_f1_examples():
    assert f1([True, False, True], [True, False, True]) == 1.0
    assert f1([True, False], [False, False]) == 0.0
    assert f1([False, False], [False, False]) == 0.0
    a = [True, True, True, False]
    p = [True, True, False, True]  # TP 2, FP 1, FN 1
    assert f1(a, p) == pytest.approx(2 / 3, abs=1e-12)


def test_direction_metric_errors():
    for fn in (accuracy, f1):
        with pytest.raises(ValueError):
            fn([], [])
        with pytest.raises(ValueError):
            fn([True], [True, False])
    with pytest.raises(ValueError):
        _series([], [], [])


@settings(max_examples=300, deadline=None)
@given(bools)
def test_direction_metric_properties(pair):
    a, p = map(np.array, pair)
    assert accuracy(a, p) + accuracy(a, ~p) == pytest.approx(1.0, abs=1e-12)
    value = f1(a, p)
    assert 0.0 <= value <= 1.0
    assert value == pytest.approx(f1_oracle(a.tolist(), p.tolist()), abs=1e-12)
    assert (value == 1.0) == (np.array_equal(a, p) and a.any())


# --- aggregation and tables --------------------------------------------------------------

def test_aggregate_examples():
    row = MetricRow(0.02, 5.0, 0.6, 0.5)
    assert aggregate([row]) == row
    two = aggregate([MetricRow(0.02, 1.0, 0.5, 0.5), MetricRow(0.04, 3.0, 0.7, 0.1)])
    assert two.rmse == pytest.approx(0.03, abs=1e-12)
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_matches_field_means():
    rng = np.random.default_rng(0)
    values = rng.uniform(0, 1, (10, 4))
    agg = aggregate(MetricRow(*v) for v in values)
    np.testing.assert_allclose([agg.rmse, agg.smape, agg.accuracy, agg.f1], values.mean(axis=0),
                               rtol=0, atol=1e-12)


def test_aggregate_skips_failed_rows():
    agg = aggregate([MetricRow(0.1, 1.0, 0.5, 0.5), NAN_ROW])
    assert agg == MetricRow(0.1, 1.0, 0.5, 0.5)
    assert math.isnan(aggregate([NAN_ROW]).rmse)


def test_score_combines_metrics():
    s = _series([1.1, 0.9, 1.3], [1.0, 1.0, 1.2], [1.0, 1.05, 1.0])
    row = score(s)
    up_a, up_p = directions(s)
    assert row == MetricRow(rmse(s.actual, s.predicted), smape(s.actual, s.predicted),
                            accuracy(up_a, up_p), f1(up_a, up_p))


def test_metrics_table_round_trip(tmp_path):
    averaged = {"individual": MetricRow(0.0283, 9.6324, 0.5333, 0.41),
                "arima": MetricRow(0.0261, 5.1, 0.52, 0.3),
                "joint": MetricRow(0.0154, 3.9358, 0.6262, 0.6)}
    write_metrics_table_csv(averaged, tmp_path / "t.csv")
    back = read_metrics_table_csv(tmp_path / "t.csv")
    assert back == averaged
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "metric,individual,arima,joint"


def test_render_table_layout():
    averaged = {k: MetricRow(0.0154, 3.9358, 0.6262, 0.6) for k in ("individual", "arima", "joint")}
    text = render_table(averaged)
    assert "CNN Individual" in text and "CNN Joint" in text and "ARIMA" in text
    assert text.index("Value forecasts") < text.index("RMSE") < text.index("Direction forecasts")
    assert "0.6262" in text
