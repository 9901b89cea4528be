#!/usr/bin/env python3
"""
Time series tooling for the per-router estimate series e_l - differencing,
ACF/PACF diagnostics with 95% significance bands, ARIMA(0,1,1) fitting by
conditional sum of squares and the clipped one-step predictor.

The IMA(1,1) model is e_t = e_{t-1} + eps_t + theta * eps_{t-1}; its one-step
forecast is e_t + theta * eps_t. theta = 0 gives the crude estimator that
predicts the next period with the last observation.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar
from scipy.signal import lfilter
from statsmodels.tsa.stattools import acf as sm_acf
from statsmodels.tsa.stattools import levinson_durbin

from .error_handling import DegenerateSeriesError, SeriesTooShortError

logger = logging.getLogger(__name__)

MIN_TRAINING_LENGTH = 20
THETA_BOUND = 0.99
GRID_STEP = 0.01
BAND_Z = 1.96


@dataclass(frozen=True)
class Series:
    values: np.ndarray
    start_period: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("series must be one-dimensional with at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


SeriesLike = Union[Series, Sequence[float], np.ndarray]


def _values(series: SeriesLike) -> np.ndarray:
    if isinstance(series, Series):
        return series.values
    return Series(np.asarray(series, dtype=float)).values


@dataclass
class ForecastState:
    theta: float = 0.0
    last_forecast: float = 0.0
    last_residual: float = 0.0
    initialized: bool = False

    def __post_init__(self):
        if not -1.0 < self.theta < 1.0:
            raise ValueError(f"MA(1) coefficient {self.theta} not invertible")


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    values: np.ndarray
    band: float

    def to_frame(self, name: str = "value") -> pd.DataFrame:
        return pd.DataFrame({"lag": self.lags, name: self.values, "band": self.band})


def difference(series: SeriesLike, d: int = 1) -> Series:
    """
    d-fold first differences

    Args:
        series: Input series
        d: Differencing order (>= 0)

    Returns:
        Series shorter by d, starting d periods later
    """
    values = _values(series)
    start = series.start_period if isinstance(series, Series) else 0
    if d < 0:
        raise ValueError(f"differencing order must be nonnegative, got {d}")
    if len(values) <= d:
        raise SeriesTooShortError(f"series of length {len(values)} too short to difference {d} times")
    return Series(np.diff(values, n=d) if d else values.copy(), start_period=start + d)


def _check_diagnostic_input(values: np.ndarray, max_lag: int) -> None:
    if max_lag < 0:
        raise ValueError(f"max_lag must be nonnegative, got {max_lag}")
    if len(values) <= max_lag:
        raise SeriesTooShortError(f"series of length {len(values)} too short for {max_lag} lags")
    if np.ptp(values) == 0.0:
        raise DegenerateSeriesError("series has zero sample variance")


def acf(series: SeriesLike, max_lag: int) -> AcfResult:
    """
    Sample autocorrelations (divisor n, overall mean) for lags 0..max_lag

    Args:
        series: Input series
        max_lag: Largest lag

    Returns:
        AcfResult with the 1.96/sqrt(n) band
    """
    values = _values(series)
    _check_diagnostic_input(values, max_lag)
    rho = sm_acf(values, nlags=max_lag, adjusted=False, fft=False)
    return AcfResult(lags=np.arange(max_lag + 1), values=np.asarray(rho),
                     band=BAND_Z / np.sqrt(len(values)))


def pacf(series: SeriesLike, max_lag: int) -> AcfResult:
    """Partial autocorrelations by Durbin-Levinson on the sample ACF."""
    result = acf(series, max_lag)
    if max_lag == 0:
        return result
    _, _, partial, _, _ = levinson_durbin(result.values, nlags=max_lag, isacov=True)
    return AcfResult(lags=result.lags, values=np.asarray(partial), band=result.band)


def css(theta: float, training: SeriesLike) -> float:
    """Conditional sum of squares of the one-step residuals, eps_0 = 0."""
    d = np.diff(_values(training))
    residuals = lfilter([1.0], [1.0, theta], d)
    return float(np.dot(residuals, residuals))


def fit_arima011(training: SeriesLike) -> float:
    """
    Fit the MA(1) coefficient of an ARIMA(0,1,1) model by CSS

    Grid search over (-0.99, 0.99) in steps of 0.01, then a bounded scalar
    refinement around the best grid point. A constant series fits every
    theta equally and returns 0.

    Args:
        training: Training segment of the estimate series

    Returns:
        Fitted theta
    """
    values = _values(training)
    if len(values) < MIN_TRAINING_LENGTH:
        raise SeriesTooShortError(
            f"training series of length {len(values)} shorter than {MIN_TRAINING_LENGTH}"
        )
    if np.ptp(values) == 0.0:
        return 0.0

    grid = np.round(np.arange(-THETA_BOUND, THETA_BOUND + GRID_STEP / 2, GRID_STEP), 2)
    surface = np.array([css(theta, values) for theta in grid])
    # lowest CSS first, ties resolved toward theta = 0
    best = int(np.lexsort((np.abs(grid), surface))[0])
    theta, best_css = float(grid[best]), float(surface[best])

    lower = max(-THETA_BOUND, theta - GRID_STEP)
    upper = min(THETA_BOUND, theta + GRID_STEP)
    refined = minimize_scalar(lambda t: css(t, values), bounds=(lower, upper),
                              method="bounded", options={"xatol": 1e-6})
    if refined.success and refined.fun < best_css:
        theta = float(refined.x)

    logger.debug(f"ARIMA(0,1,1) fit on {len(values)} values: theta={theta:.4f}")
    return theta


def forecast_next(state: ForecastState, observation: Optional[float]) -> Optional[float]:
    """
    Feed one observation and predict the next period, clipped to [0, 100]

    A missing observation (no estimate seen yet) leaves the state untouched
    and yields no prediction. The first observation is its own forecast.

    Args:
        state: Per-router forecaster state (mutated)
        observation: Latest estimate e_l

    Returns:
        Prediction for the next period, or None
    """
    if observation is None:
        return None
    if not state.initialized:
        state.last_forecast = observation
        state.last_residual = 0.0
        state.initialized = True
        return min(max(observation, 0.0), 100.0)

    residual = observation - state.last_forecast
    prediction = observation + state.theta * residual
    state.last_residual = residual
    state.last_forecast = prediction
    return min(max(prediction, 0.0), 100.0)


def forecast_series(theta: float, observations: Sequence[Optional[float]]) -> List[Optional[float]]:
    """Run a fresh forecaster over a series; element k predicts period k + 1."""
    state = ForecastState(theta=theta)
    return [forecast_next(state, obs) for obs in observations]
