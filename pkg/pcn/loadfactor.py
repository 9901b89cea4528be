#!/usr/bin/env python3
"""
Router-local load factor over fixed t_rho windows.

    raw_rho = 100 * (lambda + kappa_q * qhat) / (gamma * C * t_rho)

lambda counts packets offered to the link in the window and qhat is the
persistent queue, an EWMA of the instantaneous queue sampled on a fixed tick.
The published value is clipped to [0, 100] after an optional affine map.
"""

import logging
from dataclasses import dataclass
from typing import List

from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoadWindowStats:
    lambda_: int
    qhat: float
    window_index: int

    def __post_init__(self):
        if self.lambda_ < 0 or self.qhat < 0:
            raise ValueError(f"negative window statistics: lambda={self.lambda_}, qhat={self.qhat}")


class LoadFactorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa_q: float = Field(default=0.5, gt=0)
    gamma: float = Field(default=0.98, gt=0, le=1)
    capacity: float = Field(gt=0)
    t_rho: float = Field(default=0.2, gt=0)
    transform_a: float = 1.0
    transform_b: float = 0.0


@dataclass(frozen=True)
class LoadFactorSample:
    rho: float
    window_index: int
    raw_rho: float
    lambda_: int = 0
    qhat: float = 0.0


def compute_load_factor(stats: LoadWindowStats, cfg: LoadFactorConfig) -> LoadFactorSample:
    """
    Load factor of one window

    Args:
        stats: Packet count and persistent queue of the window
        cfg: Link constants

    Returns:
        Sample holding the clipped percentage and the unclipped value
    """
    raw = 100.0 * (stats.lambda_ + cfg.kappa_q * stats.qhat) / (cfg.gamma * cfg.capacity * cfg.t_rho)
    raw = cfg.transform_a * raw + cfg.transform_b
    rho = min(max(raw, 0.0), 100.0)
    return LoadFactorSample(rho=rho, window_index=stats.window_index, raw_rho=raw,
                            lambda_=stats.lambda_, qhat=stats.qhat)


def update_persistent_queue(qhat_prev: float, instantaneous_queue_len: float,
                            smoothing_weight: float) -> float:
    """One low-pass step: (1 - w) * qhat_prev + w * q."""
    if not 0.0 < smoothing_weight <= 1.0:
        raise ValueError(f"smoothing weight {smoothing_weight} outside (0, 1]")
    return (1.0 - smoothing_weight) * qhat_prev + smoothing_weight * instantaneous_queue_len


class LinkLoadMonitor:
    """
    Load factor state of one router output link

    The simulator calls record_arrival for every packet offered to the link,
    sample_queue on every persistent-queue tick and close_window at each t_rho
    boundary. The latest published rho is what the router marks with.
    """

    def __init__(self, link_id: str, cfg: LoadFactorConfig, smoothing_weight: float = 0.125):
        self.link_id = link_id
        self.cfg = cfg
        self.smoothing_weight = smoothing_weight
        self.arrivals = 0
        self.qhat = 0.0
        self.max_queue_seen = 0
        self.window_index = 0
        self.current_rho = 0.0
        self.samples: List[LoadFactorSample] = []

    def record_arrival(self) -> None:
        self.arrivals += 1

    def sample_queue(self, queue_len: int) -> None:
        self.max_queue_seen = max(self.max_queue_seen, queue_len)
        self.qhat = update_persistent_queue(self.qhat, queue_len, self.smoothing_weight)

    def close_window(self) -> LoadFactorSample:
        stats = LoadWindowStats(lambda_=self.arrivals, qhat=self.qhat, window_index=self.window_index)
        sample = compute_load_factor(stats, self.cfg)
        logger.debug(
            f"{self.link_id} window {self.window_index}: lambda={self.arrivals} "
            f"qhat={self.qhat:.3f} rho={sample.rho:.2f}"
        )
        self.samples.append(sample)
        self.current_rho = sample.rho
        self.arrivals = 0
        self.window_index += 1
        return sample
