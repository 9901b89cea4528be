#!/usr/bin/env python3
"""
Background traffic traces - the on-disk trace format, its loader and the
synthetic generators used in place of captured traffic.

Trace format: one packet per line, "arrival_time_seconds size_bytes",
whitespace separated; lines starting with '#' and blank lines are ignored.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Union

import numpy as np

from .error_handling import TraceFormatError

logger = logging.getLogger(__name__)

MODELS = ("poisson", "onoff-mmpp")
DEFAULT_PACKET_SIZE = 1000

# Required and optional parameters per model
MODEL_PARAMS = {
    "poisson": {"required": ("rate",), "optional": {}},
    "onoff-mmpp": {
        "required": ("on_rate", "off_rate", "mean_on", "mean_off"),
        "optional": {},
    },
}


@dataclass
class TraceFlow:
    """Open-loop packet schedule: arrival offsets (s) and sizes (bytes)."""
    times: np.ndarray
    sizes: np.ndarray
    source: Optional[str] = None
    sink: Optional[str] = None

    def __len__(self) -> int:
        return len(self.times)


def load_trace(path: Union[str, os.PathLike], source: Optional[str] = None,
               sink: Optional[str] = None) -> TraceFlow:
    """
    Read a trace file

    Args:
        path: Trace file
        source: Node the flow enters at
        sink: Node the flow leaves at

    Returns:
        TraceFlow with times shifted so the first arrival is at 0
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise TraceFormatError("trace file not found", source=path)

    times = []
    sizes = []
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise TraceFormatError(f"expected 'time size', got {len(fields)} fields",
                                       source=path, line=lineno)
            try:
                t = float(fields[0])
                size = float(fields[1])
            except ValueError as e:
                raise TraceFormatError("unparseable number", source=path, line=lineno, cause=e)
            if not math.isfinite(t) or not math.isfinite(size):
                raise TraceFormatError("non-finite value", source=path, line=lineno)
            if size <= 0 or size != int(size):
                raise TraceFormatError(f"packet size must be a positive integer, got {fields[1]}",
                                       source=path, line=lineno)
            if times and t < times[-1]:
                raise TraceFormatError(
                    f"timestamp {t} earlier than previous {times[-1]}", source=path, line=lineno
                )
            times.append(t)
            sizes.append(int(size))

    if not times:
        raise TraceFormatError("trace holds no packets", source=path)

    arr = np.asarray(times, dtype=float)
    logger.debug(f"Loaded {len(arr)} packets from {path}")
    return TraceFlow(times=arr - arr[0], sizes=np.asarray(sizes, dtype=np.int64),
                     source=source, sink=sink)


def write_trace(trace: TraceFlow, path: Union[str, os.PathLike],
                header: Optional[str] = None) -> None:
    """Write a trace in the on-disk format, one packet per line."""
    with open(path, "w") as f:
        if header:
            for line in header.splitlines():
                f.write(f"# {line}\n")
        for t, size in zip(trace.times, trace.sizes):
            f.write(f"{t:.9f} {int(size)}\n")


def parse_model_params(text: str) -> Dict[str, float]:
    """Parse 'key=value,key=value' into floats."""
    params: Dict[str, float] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        if "=" not in item:
            raise ValueError(f"parameter '{item}' is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        params[key] = float(value)
    return params


def validate_model_params(model: str, params: Mapping[str, float]) -> None:
    if model not in MODELS:
        raise ValueError(f"unknown traffic model '{model}', expected one of {', '.join(MODELS)}")
    spec = MODEL_PARAMS[model]
    missing = [key for key in spec["required"] if key not in params]
    if missing:
        raise ValueError(f"{model} requires parameters: {', '.join(missing)}")
    unknown = set(params) - set(spec["required"]) - set(spec["optional"])
    if unknown:
        raise ValueError(f"unknown {model} parameters: {', '.join(sorted(unknown))}")
    if model == "poisson":
        if params["rate"] <= 0:
            raise ValueError("poisson rate must be positive")
    else:
        if params["on_rate"] <= 0 or params["off_rate"] < 0:
            raise ValueError("onoff-mmpp needs on_rate > 0 and off_rate >= 0")
        if params["mean_on"] <= 0 or params["mean_off"] <= 0:
            raise ValueError("onoff-mmpp dwell means must be positive")


def _poisson_arrivals(rng: np.random.Generator, rate: float, start: float, end: float) -> np.ndarray:
    # given the count, Poisson arrivals in an interval are uniform order statistics
    n = rng.poisson(rate * (end - start))
    return np.sort(rng.uniform(start, end, n))


def gen_synthetic_trace(model: str, params: Mapping[str, float], duration: float, seed: int,
                        size: int = DEFAULT_PACKET_SIZE, source: Optional[str] = None,
                        sink: Optional[str] = None) -> TraceFlow:
    """
    Generate an open-loop trace

    poisson: homogeneous arrivals at `rate` packets/s.
    onoff-mmpp: two-state Markov-modulated Poisson process starting ON;
    exponential dwell times with means `mean_on`/`mean_off` seconds and
    arrival rates `on_rate`/`off_rate` packets/s.

    Args:
        model: 'poisson' or 'onoff-mmpp'
        params: Model parameters
        duration: Trace length in seconds
        seed: Seed of the generator
        size: Packet size in bytes
        source: Node the flow enters at
        sink: Node the flow leaves at

    Returns:
        Deterministic TraceFlow for the given seed
    """
    validate_model_params(model, params)
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    if size <= 0:
        raise ValueError(f"packet size must be positive, got {size}")

    rng = np.random.default_rng(seed)
    if model == "poisson":
        times = _poisson_arrivals(rng, params["rate"], 0.0, duration)
    else:
        chunks = []
        t, on = 0.0, True
        while t < duration:
            dwell = rng.exponential(params["mean_on"] if on else params["mean_off"])
            end = min(t + dwell, duration)
            rate = params["on_rate"] if on else params["off_rate"]
            if rate > 0 and end > t:
                chunks.append(_poisson_arrivals(rng, rate, t, end))
            t, on = end, not on
        times = np.concatenate(chunks) if chunks else np.empty(0)

    logger.debug(f"Generated {len(times)} packets ({model}, seed {seed}, {duration}s)")
    return TraceFlow(times=times, sizes=np.full(len(times), int(size), dtype=np.int64),
                     source=source, sink=sink)
