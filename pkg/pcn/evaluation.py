#!/usr/bin/env python3
"""
Experiment harness - splits a run into warm-up, training and evaluation
segments, computes the ground-truth period load L_l from the routers' samples
and scores the raw and ARIMA-corrected estimators per router and direction
over a sweep of estimation periods t_P.

Every t_P value replays the same run's ACK log through the source-side
period closing, so the estimator comparison does not depend on traffic
randomness.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .config import SimConfig, is_multiple
from .error_handling import (
    ConfigError,
    SeriesTooShortError,
    capture_cell_results,
    handle_cell_results,
)
from .forecast import MIN_TRAINING_LENGTH, fit_arima011, forecast_series
from .protocol import PacketHeader, ProtocolParams, TallyTable, close_period, on_ack
from .simcore import RunArtifacts, run
from .task_manager import distribute_tasks

logger = logging.getLogger(__name__)

DEFAULT_TP_LIST = (0.2, 0.4, 0.8, 1.6, 3.2)
MIN_EVAL_PERIODS = 10
ESTIMATORS = ("raw", "corrected")
REPORT_COLUMNS = ["t_p_seconds", "direction", "router_index", "estimator", "rmse", "bias",
                  "n_periods"]
GRID_EPSILON = 1e-9


class EvalSplit(BaseModel):
    """Fractions of the run discarded as warm-up and used for training."""
    model_config = ConfigDict(frozen=True)

    warmup_fraction: float = Field(default=0.10, ge=0)
    training_fraction: float = Field(default=0.10, ge=0)

    @model_validator(mode="after")
    def _check_sum(self) -> "EvalSplit":
        if self.warmup_fraction + self.training_fraction >= 1:
            raise ValueError("warmup_fraction + training_fraction must be below 1")
        return self

    @property
    def evaluation_fraction(self) -> float:
        return 1.0 - self.warmup_fraction - self.training_fraction


@dataclass
class EvalReport:
    """Long-format sweep results, one row per (t_P, direction, router, estimator)."""
    rows: pd.DataFrame
    split: EvalSplit
    tp_list: List[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return self.rows[REPORT_COLUMNS].copy()

    def write_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        logger.info(f"Report with {len(self.rows)} rows written to {path}")

    def cell(self, t_p: float, direction: str, router_index: int, estimator: str) -> pd.Series:
        rows = self.rows
        match = rows[np.isclose(rows["t_p_seconds"], t_p) & (rows["direction"] == direction)
                     & (rows["router_index"] == router_index) & (rows["estimator"] == estimator)]
        if len(match) != 1:
            raise KeyError(f"no report cell for t_P={t_p} {direction} router {router_index} {estimator}")
        return match.iloc[0]


def _check_pair(actual: Sequence[float], predicted: Sequence[float]) -> np.ndarray:
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape or actual.ndim != 1:
        raise ValueError(f"length mismatch: {actual.shape} vs {predicted.shape}")
    if len(actual) < 1:
        raise ValueError("at least one pair is required")
    return actual - predicted


def rmse(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """sqrt(sum((L - L_hat)^2) / N)"""
    errors = _check_pair(actual, predicted)
    return float(np.sqrt(np.mean(errors ** 2)))


def bias(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """sum(L - L_hat) / N; positive when the estimator underestimates."""
    return float(np.mean(_check_pair(actual, predicted)))


def rho_by_publish_index(samples: pd.DataFrame, t_rho: float) -> np.ndarray:
    """
    Published load factors of one link indexed by publish instant p = time / t_rho

    Index 0 is the load factor before the first publish, which is 0. Missing
    publishes are NaN.
    """
    if samples.empty:
        return np.zeros(1)
    index = np.rint(samples["time"].to_numpy(dtype=float) / t_rho).astype(int)
    rho = np.full(int(index.max()) + 1, np.nan)
    rho[0] = 0.0
    rho[index] = samples["rho"].to_numpy(dtype=float)
    return rho


def ground_truth_L(samples: pd.DataFrame, period_start: float, period_end: float,
                   t_rho: float) -> Optional[float]:
    """
    Mean load factor of one link over [period_start, period_end)

    Args:
        samples: The link's ground-truth rows (time, rho)
        period_start: Period start, a multiple of t_rho
        period_end: Period end, a multiple of t_rho
        t_rho: Load factor window

    Returns:
        Mean of the k = (end - start) / t_rho samples published in the
        period, or None when the period runs past the last sample
    """
    if not is_multiple(period_end - period_start, t_rho):
        raise ValueError(f"period [{period_start}, {period_end}) is not a multiple of t_rho={t_rho}")
    rho = rho_by_publish_index(samples, t_rho)
    first = int(round(period_start / t_rho))
    return _window_mean(rho, first, int(round(period_end / t_rho)) - first)


def _window_mean(rho: np.ndarray, first: int, k: int) -> Optional[float]:
    window = rho[first:first + k]
    if len(window) < k or np.isnan(window).any():
        return None
    return float(window.mean())


@dataclass(frozen=True)
class PeriodGrid:
    """Estimation periods of one t_P over a run."""
    start: float
    t_p: float
    samples_per_period: int
    first_publish: int
    n_periods: int
    n_training: int

    def bounds(self, j: int) -> tuple:
        return self.start + j * self.t_p, self.start + (j + 1) * self.t_p


def period_grid(t_p: float, t_rho: float, duration: float, split: EvalSplit) -> PeriodGrid:
    """Periods start at the first publish instant at or after warm-up end."""
    k = int(round(t_p / t_rho))
    first_publish = int(math.ceil(split.warmup_fraction * duration / t_rho - GRID_EPSILON))
    start = first_publish * t_rho
    n_periods = max(0, int(math.floor((duration - start) / t_p + GRID_EPSILON)))
    n_training = int(math.floor(split.training_fraction * duration / t_p + GRID_EPSILON))
    return PeriodGrid(start=start, t_p=t_p, samples_per_period=k, first_publish=first_publish,
                      n_periods=n_periods, n_training=min(n_training, n_periods))


def replay_estimates(acks: pd.DataFrame, grid: PeriodGrid,
                     params: ProtocolParams) -> List[List[Optional[float]]]:
    """
    Rebuild one source's per-period estimates from its ACK log

    ACKs belong to the period their receive time falls in.

    Args:
        acks: The source's ACK log (time, ipid, ecn)
        grid: Period grid to close periods on
        params: The source's protocol parameters

    Returns:
        Per-period estimate lists, routers 1..hop_count
    """
    times = acks["time"].to_numpy(dtype=float)
    period = np.floor((times - grid.start) / grid.t_p + GRID_EPSILON).astype(int)
    keep = (times >= grid.start - GRID_EPSILON) & (period >= 0) & (period < grid.n_periods)
    period = period[keep]
    ipids = acks["ipid"].to_numpy(dtype=int)[keep]
    ecns = acks["ecn"].to_numpy(dtype=int)[keep]
    order = np.argsort(period, kind="stable")

    table = TallyTable(params=params)
    estimates: List[List[Optional[float]]] = []
    previous: Optional[List[Optional[float]]] = None
    cursor = 0
    for j in range(grid.n_periods):
        while cursor < len(order) and period[order[cursor]] == j:
            i = order[cursor]
            ipid = int(ipids[i])
            on_ack(table, PacketHeader(ipid=ipid, ttl=params.m, ecn=bool(ecns[i]),
                                       is_ack=True, echo_of=ipid))
            cursor += 1
        previous = close_period(table, previous)
        estimates.append(previous)
    return estimates


@dataclass
class SweepCell:
    """Everything one t_P evaluation needs, picklable for Ray workers."""
    t_p: float
    t_rho: float
    duration: float
    split: EvalSplit
    flows: Dict[str, Dict[str, Any]]
    ground_truth: pd.DataFrame
    acks: pd.DataFrame
    fixed_theta: Optional[float] = None


def _row(cell: SweepCell, source_id: str, flow: Dict[str, Any], router: int, estimator: str,
         **values: Any) -> Dict[str, Any]:
    row = {
        "t_p_seconds": cell.t_p,
        "direction": flow["direction"],
        "source_id": source_id,
        "router_index": router,
        "estimator": estimator,
        "rmse": float("nan"),
        "bias": float("nan"),
        "n_periods": 0,
        "theta": float("nan"),
        "status": "ok",
        "reason": "",
    }
    row.update(values)
    return row


def _score_router(cell: SweepCell, grid: PeriodGrid, source_id: str, flow: Dict[str, Any],
                  router: int, e: List[Optional[float]], truth: List[Optional[float]]
                  ) -> List[Dict[str, Any]]:
    n_eval = grid.n_periods - grid.n_training
    if n_eval < MIN_EVAL_PERIODS:
        reason = f"{n_eval} evaluation periods, need {MIN_EVAL_PERIODS}"
        return [_row(cell, source_id, flow, router, est, n_periods=max(n_eval, 0),
                     status="insufficient", reason=reason) for est in ESTIMATORS]

    if cell.fixed_theta is not None:
        theta = cell.fixed_theta
    else:
        training = [v for v in e[:grid.n_training] if v is not None]
        try:
            theta = fit_arima011(training)
        except SeriesTooShortError:
            reason = f"{len(training)} training values, need {MIN_TRAINING_LENGTH}"
            return [_row(cell, source_id, flow, router, est, n_periods=n_eval,
                         status="insufficient", reason=reason) for est in ESTIMATORS]

    predictions = {"raw": forecast_series(0.0, e), "corrected": forecast_series(theta, e)}
    actual: List[float] = []
    predicted: Dict[str, List[float]] = {est: [] for est in ESTIMATORS}
    for j in range(max(grid.n_training, 1), grid.n_periods):
        raw, corrected = predictions["raw"][j - 1], predictions["corrected"][j - 1]
        if truth[j] is None or raw is None or corrected is None:
            continue
        actual.append(truth[j])
        predicted["raw"].append(raw)
        predicted["corrected"].append(corrected)

    if not actual:
        return [_row(cell, source_id, flow, router, est, theta=theta, status="insufficient",
                     reason="no period with both a prediction and ground truth")
                for est in ESTIMATORS]
    return [_row(cell, source_id, flow, router, est, theta=theta, n_periods=len(actual),
                 rmse=rmse(actual, predicted[est]), bias=bias(actual, predicted[est]))
            for est in ESTIMATORS]


def evaluate_cell(cell: SweepCell) -> List[Dict[str, Any]]:
    """
    Score both estimators for every PCN flow and router at one t_P

    Args:
        cell: The t_P value and the run data it is evaluated on

    Returns:
        Report rows ordered by direction, router and estimator
    """
    grid = period_grid(cell.t_p, cell.t_rho, cell.duration, cell.split)
    logger.debug(
        f"t_P={cell.t_p}: {grid.n_periods} periods from {grid.start:.3f}s, "
        f"{grid.n_training} for training"
    )
    rho = {link_id: rho_by_publish_index(frame, cell.t_rho)
           for link_id, frame in cell.ground_truth.groupby("link_id", sort=True)}

    rows: List[Dict[str, Any]] = []
    for source_id, flow in sorted(cell.flows.items(), key=lambda kv: (kv[1]["direction"], kv[0])):
        params = ProtocolParams(m=flow["m"], presignal=flow["presignal"], hop_count=flow["hop_count"])
        acks = cell.acks[cell.acks["source_id"] == source_id]
        estimates = replay_estimates(acks, grid, params)

        for router in range(1, flow["hop_count"] + 1):
            link_rho = rho.get(flow["router_links"][router - 1], np.zeros(1))
            truth = [_window_mean(link_rho, grid.first_publish + j * grid.samples_per_period,
                                  grid.samples_per_period) for j in range(grid.n_periods)]
            e = [period[router - 1] for period in estimates]
            rows.extend(_score_router(cell, grid, source_id, flow, router, e, truth))
    return rows


def _check_tp_list(tp_list: Sequence[float], t_rho: float) -> List[float]:
    if not tp_list:
        raise ConfigError("empty t_P list")
    for t_p in tp_list:
        if not is_multiple(t_p, t_rho):
            raise ConfigError(f"t_P={t_p} is not a multiple of t_rho={t_rho}")
    return sorted(set(float(t_p) for t_p in tp_list))


def sweep(artifacts: RunArtifacts, tp_list: Sequence[float] = DEFAULT_TP_LIST,
          split: Optional[EvalSplit] = None, fixed_theta: Optional[float] = None,
          ray_address: Optional[str] = None) -> EvalReport:
    """
    Evaluate raw and corrected estimators of one run over several t_P values

    Args:
        artifacts: The run to evaluate
        tp_list: Estimation periods in seconds, multiples of t_rho
        split: Warm-up and training fractions
        fixed_theta: Use this theta instead of fitting per (source, router)
        ray_address: Distribute t_P cells over Ray when set

    Returns:
        EvalReport with one row per (t_P, direction, router, estimator)
    """
    split = split or EvalSplit()
    tp_values = _check_tp_list(tp_list, artifacts.t_rho)
    if fixed_theta is not None and not -1.0 < fixed_theta < 1.0:
        raise ConfigError(f"fixed theta {fixed_theta} outside (-1, 1)")
    if not artifacts.flows:
        raise ConfigError("run has no PCN flows to evaluate")

    ground_truth = artifacts.ground_truth[["time", "link_id", "rho"]]
    acks = artifacts.acks[["time", "source_id", "ipid", "ecn"]]
    cells = [SweepCell(t_p=t_p, t_rho=artifacts.t_rho, duration=artifacts.duration, split=split,
                       flows=artifacts.flows, ground_truth=ground_truth, acks=acks,
                       fixed_theta=fixed_theta) for t_p in tp_values]

    logger.info(f"Sweeping t_P over {tp_values} ({len(artifacts.flows)} PCN flows)")

    def progress(completed: int, total: int) -> None:
        logger.info(f"Progress: {completed}/{total} t_P values evaluated")

    results = distribute_tasks(evaluate_cell, cells, ray_address=ray_address,
                               progress_callback=progress)
    rows = [row for cell_rows in results for row in cell_rows]
    handle_cell_results(capture_cell_results(rows))
    return EvalReport(rows=pd.DataFrame(rows), split=split, tp_list=tp_values)


def sweep_config(sim_config: SimConfig, seed: int, tp_list: Sequence[float] = DEFAULT_TP_LIST,
                 **kwargs: Any) -> EvalReport:
    """Simulate a config once, then sweep t_P over its logs."""
    split = kwargs.pop("split", None)
    if split is None:
        try:
            split = EvalSplit(warmup_fraction=sim_config.simulation.warmup_fraction,
                              training_fraction=sim_config.simulation.training_fraction)
        except ValidationError as e:
            raise ConfigError("invalid evaluation split", cause=e)
    return sweep(run(sim_config, seed), tp_list, split=split, **kwargs)


def markable_counts(artifacts: RunArtifacts) -> pd.DataFrame:
    """Markable ACKs per (source, router) over the whole run."""
    rows = []
    acks = artifacts.acks
    for source_id, flow in sorted(artifacts.flows.items()):
        attributed = acks.loc[acks["source_id"] == source_id, "router_index"].to_numpy(dtype=int)
        counts = np.bincount(attributed, minlength=flow["hop_count"] + 1)
        for router in range(1, flow["hop_count"] + 1):
            rows.append({"source_id": source_id, "direction": flow["direction"],
                         "router_index": router, "markable_acks": int(counts[router])})
    return pd.DataFrame(rows, columns=["source_id", "direction", "router_index", "markable_acks"])


def presignal_gain(with_presignal: RunArtifacts, without_presignal: RunArtifacts) -> pd.DataFrame:
    """
    Per-router ratio of markable ACKs between a presignalled run and a plain one

    Args:
        with_presignal: Run with presignalling on
        without_presignal: Same config and seed with presignalling off

    Returns:
        Frame keyed by source and router with both counts and their ratio
    """
    on = markable_counts(with_presignal)
    off = markable_counts(without_presignal)
    merged = on.merge(off, on=["source_id", "direction", "router_index"],
                      suffixes=("_presignal", "_plain"))
    plain = merged["markable_acks_plain"].replace(0, np.nan)
    merged["gain"] = merged["markable_acks_presignal"] / plain
    return merged


def summarize(report: EvalReport) -> pd.DataFrame:
    """
    Headline numbers per estimator

    mean_rmse and max_abs_bias over evaluated cells, the share of cells with
    |bias| < 1 and, for the corrected estimator, the share of cells where it
    beats raw.
    """
    rows = report.rows[report.rows["status"] == "ok"]
    keys = ["t_p_seconds", "direction", "router_index"]
    raw = rows[rows["estimator"] == "raw"].set_index(keys)["rmse"]
    corrected = rows[rows["estimator"] == "corrected"].set_index(keys)["rmse"]
    wins = (corrected < raw.reindex(corrected.index)).mean() if len(corrected) else float("nan")

    summary = []
    for estimator in ESTIMATORS:
        cells = rows[rows["estimator"] == estimator]
        summary.append({
            "estimator": estimator,
            "cells": len(cells),
            "mean_rmse": float(cells["rmse"].mean()) if len(cells) else float("nan"),
            "max_abs_bias": float(cells["bias"].abs().max()) if len(cells) else float("nan"),
            "share_abs_bias_below_one": float((cells["bias"].abs() < 1).mean()) if len(cells) else float("nan"),
            "share_beating_raw": float(wins) if estimator == "corrected" else float("nan"),
        })
    return pd.DataFrame(summary)
