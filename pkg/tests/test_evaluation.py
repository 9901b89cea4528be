import dataclasses

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis.strategies import floats, lists
from pydantic import ValidationError

from pcn.config import load_config
from pcn.error_handling import ConfigError
from pcn.evaluation import (
    REPORT_COLUMNS,
    EvalSplit,
    PeriodGrid,
    ground_truth_L,
    markable_counts,
    period_grid,
    presignal_gain,
    replay_estimates,
    rmse,
    bias,
    summarize,
    sweep,
    sweep_config,
)
from pcn.protocol import ProtocolParams
from pcn.simcore import run

from conftest import chain_config

TRAIN_20 = EvalSplit(warmup_fraction=0.1, training_fraction=0.2)


def samples(times, rho):
    return pd.DataFrame({"time": times, "rho": rho})


def test_rmse_and_bias_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert bias([1.0, 2.0], [1.0, 2.0]) == 0.0
    actual = np.array([10.0, 20.0, 30.0])
    assert rmse(actual, actual - 5) == pytest.approx(5.0)
    assert bias(actual, actual - 5) == pytest.approx(5.0)
    assert rmse([0.0, 10.0], [3.0, 7.0]) == pytest.approx(3.0)
    assert bias([0.0, 10.0], [3.0, 7.0]) == pytest.approx(0.0)


def test_rmse_and_bias_reject_mismatched_input():
    with pytest.raises(ValueError):
        rmse([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        bias([], [])


@given(lists(floats(min_value=0, max_value=100), min_size=1, max_size=40),
       lists(floats(min_value=0, max_value=100), min_size=1, max_size=40))
def test_rmse_squared_bounds_bias_squared(actual, predicted):
    n = min(len(actual), len(predicted))
    r = rmse(actual[:n], predicted[:n])
    b = bias(actual[:n], predicted[:n])
    assert r >= 0
    assert r ** 2 >= b ** 2 - 1e-9


def test_ground_truth_mean_of_period_samples():
    link = samples([0.2, 0.4, 0.6], [40.0, 60.0, 90.0])
    assert ground_truth_L(link, 0.2, 0.4, 0.2) == 40.0
    assert ground_truth_L(link, 0.2, 0.6, 0.2) == pytest.approx(50.0)
    # before the first publish the link's load factor is 0
    assert ground_truth_L(link, 0.0, 0.4, 0.2) == pytest.approx(20.0)
    assert ground_truth_L(link, 0.4, 0.8, 0.2) == pytest.approx(75.0)
    assert ground_truth_L(link, 0.6, 1.0, 0.2) is None
    with pytest.raises(ValueError):
        ground_truth_L(link, 0.2, 0.5, 0.2)

    constant = samples(np.arange(1, 11) * 0.2, [90.0] * 10)
    assert all(ground_truth_L(constant, 0.2 * j, 0.2 * (j + 2), 0.2) == pytest.approx(90.0)
               for j in range(1, 9))


def test_period_grid():
    grid = period_grid(0.4, 0.2, 100.0, EvalSplit())
    assert grid.first_publish == 50
    assert grid.start == pytest.approx(10.0)
    assert grid.samples_per_period == 2
    assert grid.n_periods == 225
    assert grid.n_training == 25
    assert grid.bounds(0) == pytest.approx((10.0, 10.4))

    whole = period_grid(100.0, 0.2, 100.0, EvalSplit())
    assert whole.n_periods == 0


def test_split_validation():
    with pytest.raises(ValidationError):
        EvalSplit(warmup_fraction=0.6, training_fraction=0.4)
    with pytest.raises(ValidationError):
        EvalSplit(warmup_fraction=-0.1)
    assert EvalSplit().evaluation_fraction == pytest.approx(0.8)


def test_replay_closes_periods_from_ack_log():
    acks = pd.DataFrame({
        "time": [0.1, 0.5, 0.7, 2.5, 3.5],
        "ipid": [0, 0, 31, 32, 0],
        "ecn": [1, 0, 1, 0, 1],
    })
    grid = PeriodGrid(start=0.0, t_p=1.0, samples_per_period=5, first_publish=0,
                      n_periods=3, n_training=0)
    estimates = replay_estimates(acks, grid, ProtocolParams(m=32, hop_count=2))
    assert estimates == [[50.0, 100.0], [50.0, 100.0], [0.0, 100.0]]


@pytest.fixture(scope="module")
def probe_report(probe_only_run):
    return sweep(probe_only_run, [0.2, 0.4], split=TRAIN_20)


def test_sweep_report_layout(probe_report):
    frame = probe_report.to_frame()
    assert list(frame.columns) == REPORT_COLUMNS
    assert len(frame) == 2 * 2 * 2
    assert set(frame["estimator"]) == {"raw", "corrected"}
    assert (probe_report.rows["status"] == "ok").all()
    assert (frame["n_periods"] > 0).all()
    assert (frame["rmse"] ** 2 >= frame["bias"] ** 2 - 1e-9).all()


def test_sweep_is_reproducible(probe_only_run, probe_report):
    again = sweep(probe_only_run, [0.4, 0.2], split=TRAIN_20)
    pd.testing.assert_frame_equal(again.rows, probe_report.rows)


def test_theta_zero_makes_corrected_equal_raw(probe_only_run):
    report = sweep(probe_only_run, [0.4], fixed_theta=0.0)
    rows = report.rows.set_index(["t_p_seconds", "direction", "router_index"])
    raw = rows[rows["estimator"] == "raw"][["rmse", "bias", "n_periods"]]
    corrected = rows[rows["estimator"] == "corrected"][["rmse", "bias", "n_periods"]]
    pd.testing.assert_frame_equal(raw, corrected)


def test_report_cells_are_addressable(probe_report):
    cell = probe_report.cell(0.4, "probe", 2, "corrected")
    assert cell["theta"] > -1 and cell["theta"] < 1
    with pytest.raises(KeyError):
        probe_report.cell(0.8, "probe", 2, "corrected")


def test_period_as_long_as_the_run_is_insufficient(probe_only_run):
    report = sweep(probe_only_run, [60.0])
    assert (report.rows["status"] == "insufficient").all()
    assert report.rows["rmse"].isna().all()
    assert (report.rows["n_periods"] == 0).all()


def test_too_few_training_values_is_insufficient(probe_only_run):
    # 6 s of training at t_P = 1.0 yields 6 values
    report = sweep(probe_only_run, [1.0])
    assert (report.rows["status"] == "insufficient").all()
    assert report.rows["reason"].str.contains("training values").all()
    assert (report.rows["n_periods"] > 0).all()


def test_sweep_rejects_bad_input(probe_only_run):
    with pytest.raises(ConfigError, match="multiple"):
        sweep(probe_only_run, [0.3])
    with pytest.raises(ConfigError):
        sweep(probe_only_run, [])
    with pytest.raises(ConfigError):
        sweep(probe_only_run, [0.4], fixed_theta=1.5)


def test_summarize(probe_report):
    summary = summarize(probe_report).set_index("estimator")
    assert list(summary.index) == ["raw", "corrected"]
    assert summary.loc["raw", "cells"] == 4
    assert 0 <= summary.loc["corrected", "share_beating_raw"] <= 1
    assert np.isnan(summary.loc["raw", "share_beating_raw"])


def test_sweep_config_uses_config_split(write_config):
    text = chain_config(routers=2, duration=40.0, presignal=True,
                        background="model = poisson\nparams = rate=300",
                        extra_simulation="warmup_fraction = 0.05\ntraining_fraction = 0.2")
    report = sweep_config(load_config(write_config(text)), seed=5, tp_list=[0.4])
    assert report.split == EvalSplit(warmup_fraction=0.05, training_fraction=0.2)
    assert (report.rows["status"] == "ok").all()


def test_presignal_multiplies_markable_acks(write_config):
    plain = run(load_config(write_config(chain_config(routers=5, duration=30.0), "plain.ini")), seed=4)
    signalled = run(load_config(write_config(chain_config(routers=5, duration=30.0, presignal=True),
                                             "presignal.ini")), seed=4)
    counts = markable_counts(plain)
    assert list(counts["router_index"]) == [1, 2, 3, 4, 5]

    gain = presignal_gain(signalled, plain)
    assert gain["gain"].between(6.0, 6.8).all()


def test_periods_split_into_training_then_evaluation():
    split = EvalSplit(warmup_fraction=0.1, training_fraction=0.2)
    grid = period_grid(0.4, 0.2, 60.0, split)
    assert grid.start >= split.warmup_fraction * 60.0 - 1e-9
    training_end = grid.bounds(grid.n_training - 1)[1]
    assert training_end == pytest.approx((split.warmup_fraction + split.training_fraction) * 60.0)
    n_eval = grid.n_periods - grid.n_training
    assert n_eval * grid.t_p == pytest.approx(split.evaluation_fraction * 60.0)


def test_scores_ignore_warmup_and_training_segments(probe_only_run, probe_report):
    grid = period_grid(0.4, 0.2, probe_only_run.duration, TRAIN_20)
    scoring_start = grid.bounds(grid.n_training)[0]

    # ground truth before scoring starts never reaches the scores
    truth = probe_only_run.ground_truth.copy()
    truth.loc[truth["time"] < scoring_start - 1e-6, "rho"] = 1e6
    # ACKs received during warm-up feed neither theta nor the scores
    acks = probe_only_run.acks.copy()
    warmup = acks["time"] < grid.start - 1e-6
    acks.loc[warmup, "ecn"] = 1 - acks.loc[warmup, "ecn"]
    assert warmup.any()

    altered = dataclasses.replace(probe_only_run, ground_truth=truth, acks=acks)
    report = sweep(altered, [0.2, 0.4], split=TRAIN_20)
    pd.testing.assert_frame_equal(report.rows, probe_report.rows)

    ok = probe_report.rows[probe_report.rows["t_p_seconds"] == 0.4]
    assert (ok["n_periods"] <= grid.n_periods - grid.n_training).all()
