"""Dashboard figures built from report data."""

import numpy as np
import pandas as pd

import charts


def test_accuracy_by_trial_one_trace_per_method():
    df = pd.DataFrame({"trial": [1, 0, 0, 1], "method": ["forward", "forward", "baseline", "baseline"],
                       "accuracy": [0.7, 0.6, 0.5, 0.55]})
    fig = charts.accuracy_by_trial(df)
    names = [trace.name for trace in fig.data]
    assert sorted(names) == ["baseline", "forward"]
    forward = fig.data[names.index("forward")]
    assert list(forward.x) == [0, 1]
    assert list(forward.y) == [0.6, 0.7]


def test_summary_bars_drop_failed_methods():
    fig = charts.method_summary_bars([
        {"method": "baseline", "mean_accuracy": 0.5, "std_accuracy": 0.02},
        {"method": "revision", "mean_accuracy": None, "std_accuracy": None},
    ])
    shown = [x for trace in fig.data for x in trace.x]
    assert shown == ["baseline"]


def test_heatmap_keeps_values():
    matrix = [[0.5, 0.5], [0.25, 0.75]]
    fig = charts.matrix_heatmap(matrix, title="T")
    np.testing.assert_array_equal(np.asarray(fig.data[0].z), matrix)
    assert fig.data[0].zmin == 0.0 and fig.data[0].zmax == 1.0


def test_diverging_heatmap_is_symmetric():
    fig = charts.matrix_heatmap([[0.02, -0.04], [0.0, 0.01]], diverging=True)
    assert fig.data[0].zmin == -0.04 and fig.data[0].zmax == 0.04


def test_training_curve_skips_missing_column():
    fig = charts.training_curve([{"train_loss": 1.0, "val_loss": 1.1},
                                 {"train_loss": 0.8, "val_loss": 0.9}])
    assert len(fig.data) == 2
    fig = charts.training_curve([{"train_loss": 1.0}])
    assert [trace.name for trace in fig.data] == ["train loss"]
