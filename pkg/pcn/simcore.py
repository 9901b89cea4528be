#!/usr/bin/env python3
"""
Deterministic discrete-event simulator for PCN experiments.

Routers forward packets over FIFO drop-tail links serviced at C packets/s,
publish a load factor per output link every t_rho and mark PCN data packets
they find markable. Background flows replay open-loop traces; PCN flows are
fixed-rate probe streams acknowledged packet by packet, whose sources tally
the echoed marks per router and close an estimation period every t_P.

Events are ordered by time and then by insertion sequence, and every random
stream is derived from the master seed by a fixed label, so a config and a
seed determine the run bit for bit.
"""

import hashlib
import heapq
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import BackgroundFlowSpec, PcnFlowSpec, SimConfig
from .error_handling import SeriesTooShortError
from .forecast import ForecastState, fit_arima011, forecast_next
from .loadfactor import LinkLoadMonitor
from .protocol import (
    PacketHeader,
    SourceState,
    TallyTable,
    attribute_router,
    close_period,
    forward,
    make_ack,
    next_data_header,
    on_ack,
    router_mark,
)
from .traces import TraceFlow, gen_synthetic_trace, load_trace

logger = logging.getLogger(__name__)

# Event kinds
ARRIVAL = 0
PROBE_SEND = 1
BACKGROUND_SEND = 2
QHAT_TICK = 3
WINDOW_TICK = 4
PERIOD_TICK = 5

TIME_EPSILON = 1e-9


def derive_seed(master_seed: int, label: str) -> np.random.SeedSequence:
    """Seed sequence of the stream named `label`; independent of other labels."""
    key = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(key,))


def stream(master_seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, label))


def stream_seed(master_seed: int, label: str) -> int:
    """Integer seed for APIs that take one, derived like stream()."""
    return int(derive_seed(master_seed, label).generate_state(1, dtype=np.uint64)[0])


class EventQueue:
    """Time-ordered pending events; ties resolve by insertion order."""

    def __init__(self):
        self._heap: List[Tuple[float, int, int, Any]] = []
        self._seq = 0
        self.now = 0.0

    def push(self, time: float, kind: int, payload: Any = None) -> None:
        if time < self.now - TIME_EPSILON:
            raise ValueError(f"event at {time} scheduled in the past (now {self.now})")
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Tuple[float, int, Any]:
        time, _, kind, payload = heapq.heappop(self._heap)
        self.now = time
        return time, kind, payload

    def __len__(self) -> int:
        return len(self._heap)


class Packet:
    __slots__ = ("flow", "path", "hop", "header", "size")

    def __init__(self, flow: str, path: Tuple[str, ...], header: Optional[PacketHeader], size: int):
        self.flow = flow
        self.path = path
        self.hop = 0
        self.header = header
        self.size = size


class Link:
    """
    FIFO drop-tail output link

    The queue holds the packet in service. Departure instants are fixed on
    enqueue; a packet counts as dequeued once its departure instant has passed.
    """

    def __init__(self, link_id: str, capacity: float, delay: float, queue_limit: int,
                 monitor: Optional[LinkLoadMonitor] = None):
        self.link_id = link_id
        self.capacity = capacity
        self.delay = delay
        self.queue_limit = queue_limit
        self.service_time = 1.0 / capacity
        self.monitor = monitor
        self.departures: Deque[float] = deque()
        self.last_departure = 0.0
        self.enqueued = 0
        self.dequeued = 0
        self.dropped = 0

    def sync(self, now: float) -> None:
        departures = self.departures
        while departures and departures[0] <= now:
            departures.popleft()
            self.dequeued += 1

    def queue_len(self, now: float) -> int:
        self.sync(now)
        return len(self.departures)

    def enqueue(self, now: float) -> Optional[float]:
        """
        Offer one packet to the link

        Args:
            now: Arrival instant

        Returns:
            Departure instant, or None when the packet is dropped
        """
        self.sync(now)
        self.enqueued += 1
        if self.monitor is not None:
            self.monitor.record_arrival()
        if len(self.departures) >= self.queue_limit:
            self.dropped += 1
            return None
        departure = max(now, self.last_departure) + self.service_time
        self.departures.append(departure)
        self.last_departure = departure
        return departure

    def accounting(self) -> Dict[str, Any]:
        return {
            "link_id": self.link_id,
            "enqueued": self.enqueued,
            "dequeued": self.dequeued,
            "dropped": self.dropped,
            "queued": len(self.departures),
        }


class PcnSource:
    """
    Fixed-rate PCN probe source with its per-router estimator

    Runs the crude estimator (theta = 0) until the training segment is over,
    then fits theta per router on the training-segment estimates, unless the
    flow pins theta.
    """

    def __init__(self, spec: PcnFlowSpec, config: SimConfig):
        self.spec = spec
        self.source_id = spec.name
        self.params = config.protocol_params(spec)
        self.hop_count = self.params.hop_count
        self.path = tuple(spec.path)
        self.ack_path = tuple(reversed(spec.path))
        self.router_links = config.router_links(spec.path)
        self.state = SourceState(params=self.params)
        self.tally = TallyTable(params=self.params)
        self.estimates: List[Optional[float]] = [None] * self.hop_count
        theta = spec.fixed_theta if spec.fixed_theta is not None else 0.0
        self.forecasters = [ForecastState(theta=theta) for _ in range(self.hop_count)]
        self.trained = spec.fixed_theta is not None
        self.training: List[List[Optional[float]]] = []
        self.sent = 0
        self.acked = 0
        self.estimate_rows: List[Tuple] = []
        self.ack_rows: List[Tuple] = []

    def emit(self) -> Packet:
        self.sent += 1
        return Packet(self.source_id, self.path, next_data_header(self.state), 0)

    def receive_ack(self, now: float, ack: PacketHeader) -> None:
        self.acked += 1
        on_ack(self.tally, ack, self.params)
        router = attribute_router(ack.echo_of, self.params.m, self.hop_count).router
        self.ack_rows.append((now, self.source_id, ack.echo_of, int(ack.ecn),
                              router if router is not None else 0))

    def close_period(self, now: float, warmup_end: float, training_end: float) -> None:
        counts = [(self.tally.tallies[i].markable_acks, self.tally.tallies[i].marked_acks)
                  for i in range(1, self.hop_count + 1)]
        self.estimates = close_period(self.tally, self.estimates)
        predictions = [forecast_next(state, e) for state, e in zip(self.forecasters, self.estimates)]

        for i, (e, l_hat, (markable, marked)) in enumerate(zip(self.estimates, predictions, counts), 1):
            self.estimate_rows.append((now, self.source_id, i, e, l_hat, markable, marked))

        if self.trained:
            return
        if now > warmup_end + TIME_EPSILON and now <= training_end + TIME_EPSILON:
            self.training.append(list(self.estimates))
        if now >= training_end - TIME_EPSILON:
            self._fit()

    def _fit(self) -> None:
        self.trained = True
        for i, state in enumerate(self.forecasters):
            series = [row[i] for row in self.training if row[i] is not None]
            try:
                state.theta = fit_arima011(series)
            except SeriesTooShortError as e:
                logger.warning(f"{self.source_id} router {i + 1}: keeping theta=0 ({e.message})")
                continue
            logger.info(f"{self.source_id} router {i + 1}: fitted theta={state.theta:.3f}")

    def metadata(self) -> Dict[str, Any]:
        return {
            "direction": self.spec.label,
            "hop_count": self.hop_count,
            "m": self.params.m,
            "presignal": self.params.presignal,
            "rate": self.spec.rate,
            "start": self.spec.start,
            "router_links": list(self.router_links),
            "thetas": [state.theta for state in self.forecasters],
        }


@dataclass
class BackgroundSource:
    name: str
    path: Tuple[str, ...]
    trace: TraceFlow
    start: float
    index: int = 0
    delivered: int = 0

    def next_time(self) -> Optional[float]:
        if self.index >= len(self.trace):
            return None
        return self.start + float(self.trace.times[self.index])


@dataclass
class RunArtifacts:
    """Logs of one run: ground truth, estimates, link accounting, ACK log."""
    ground_truth: pd.DataFrame
    estimates: pd.DataFrame
    accounting: pd.DataFrame
    acks: pd.DataFrame
    flows: Dict[str, Dict[str, Any]]
    t_rho: float
    duration: float
    seed: int
    counters: Dict[str, int] = field(default_factory=dict)


GROUND_TRUTH_COLUMNS = ["time", "window_index", "link_id", "rho", "raw_rho", "lambda", "qhat"]
ESTIMATE_COLUMNS = ["period_end_time", "source_id", "router_index", "e_raw", "l_hat",
                    "markable_acks", "marked_acks"]
ACK_COLUMNS = ["time", "source_id", "ipid", "ecn", "router_index"]
ACCOUNTING_COLUMNS = ["link_id", "enqueued", "dequeued", "dropped", "queued"]


class Simulation:
    """One simulation of a SimConfig under a master seed."""

    def __init__(self, config: SimConfig, seed: int):
        self.config = config
        self.seed = seed
        self.params = config.simulation
        self.end = self.params.duration
        self.queue = EventQueue()
        self.routers = set(config.routers)

        self.links: Dict[Tuple[str, str], Link] = {}
        self.monitored: List[Link] = []
        for spec in config.links:
            monitor = None
            if spec.src in self.routers:
                monitor = LinkLoadMonitor(spec.link_id, self.params.load_factor_config(spec.capacity),
                                          smoothing_weight=self.params.qhat_weight)
            link = Link(spec.link_id, spec.capacity, spec.delay, spec.queue_limit, monitor)
            self.links[(spec.src, spec.dst)] = link
            if monitor is not None:
                self.monitored.append(link)

        self.router_rngs = {router: stream(seed, f"router:{router}") for router in config.routers}
        self.sources = {flow.name: PcnSource(flow, config) for flow in config.pcn_flows}
        self.background = [self._background_source(flow) for flow in config.background_flows]

        self.ground_truth_rows: List[Tuple] = []
        self.counters = {"delivered_background": 0, "delivered_data": 0, "dropped_pcn": 0,
                         "dropped_background": 0}

    def _background_source(self, flow: BackgroundFlowSpec) -> BackgroundSource:
        if flow.trace is not None:
            trace = load_trace(self.config.resolve(flow.trace), flow.source, flow.sink)
        else:
            trace = gen_synthetic_trace(flow.model, flow.params, self.end - flow.start,
                                        seed=stream_seed(self.seed, f"background:{flow.name}"),
                                        size=flow.size, source=flow.source, sink=flow.sink)
        logger.debug(f"Background flow {flow.name}: {len(trace)} packets")
        return BackgroundSource(flow.name, tuple(flow.path), trace, flow.start)

    def _schedule(self, time: float, kind: int, payload: Any = None) -> None:
        if time <= self.end + TIME_EPSILON:
            self.queue.push(time, kind, payload)

    def _forward(self, now: float, packet: Packet) -> None:
        node = packet.path[packet.hop]
        link = self.links[(node, packet.path[packet.hop + 1])]
        header = packet.header
        if header is not None and not header.is_ack and node in self.routers:
            source = self.sources[packet.flow]
            header = router_mark(header, link.monitor.current_rho, self.router_rngs[node],
                                 source.params.m)
            packet.header = forward(header)
        departure = link.enqueue(now)
        if departure is None:
            if header is None:
                self.counters["dropped_background"] += 1
            else:
                self.counters["dropped_pcn"] += 1
            return
        packet.hop += 1
        self._schedule(departure + link.delay, ARRIVAL, packet)

    def _deliver(self, now: float, packet: Packet) -> None:
        header = packet.header
        if header is None:
            self.counters["delivered_background"] += 1
            return
        source = self.sources[packet.flow]
        if header.is_ack:
            source.receive_ack(now, header)
            return
        self.counters["delivered_data"] += 1
        ack = Packet(packet.flow, source.ack_path, make_ack(header, source.params.m), 0)
        self._forward(now, ack)

    def _prime(self) -> None:
        self._schedule(self.params.qhat_tick, QHAT_TICK, 1)
        self._schedule(self.params.t_rho, WINDOW_TICK, 1)
        for source in self.sources.values():
            self._schedule(source.spec.start, PROBE_SEND, (source, 0))
            self._schedule(source.spec.start + self.params.t_p, PERIOD_TICK, (source, 1))
        for bg in self.background:
            first = bg.next_time()
            if first is not None:
                self._schedule(first, BACKGROUND_SEND, bg)

    def _on_qhat_tick(self, now: float, k: int) -> None:
        for link in self.monitored:
            link.monitor.sample_queue(link.queue_len(now))
        self._schedule((k + 1) * self.params.qhat_tick, QHAT_TICK, k + 1)

    def _on_window_tick(self, now: float, p: int) -> None:
        for link in self.monitored:
            sample = link.monitor.close_window()
            self.ground_truth_rows.append((now, sample.window_index, link.link_id, sample.rho,
                                           sample.raw_rho, sample.lambda_, sample.qhat))
        self._schedule((p + 1) * self.params.t_rho, WINDOW_TICK, p + 1)

    def run(self) -> RunArtifacts:
        logger.info(
            f"Simulating {self.end}s: {len(self.links)} links, {len(self.sources)} PCN flows, "
            f"{len(self.background)} background flows, seed {self.seed}"
        )
        self._prime()
        queue = self.queue
        end = self.end + TIME_EPSILON
        warmup_end = self.params.warmup_end
        training_end = self.params.training_end

        while queue:
            if queue.peek_time() > end:
                break
            now, kind, payload = queue.pop()
            if kind == ARRIVAL:
                if payload.hop == len(payload.path) - 1:
                    self._deliver(now, payload)
                else:
                    self._forward(now, payload)
            elif kind == BACKGROUND_SEND:
                bg = payload
                size = int(bg.trace.sizes[bg.index])
                bg.index += 1
                self._forward(now, Packet(bg.name, bg.path, None, size))
                following = bg.next_time()
                if following is not None:
                    self._schedule(following, BACKGROUND_SEND, bg)
            elif kind == PROBE_SEND:
                source, k = payload
                self._forward(now, source.emit())
                self._schedule(source.spec.start + (k + 1) / source.spec.rate, PROBE_SEND,
                               (source, k + 1))
            elif kind == QHAT_TICK:
                self._on_qhat_tick(now, payload)
            elif kind == WINDOW_TICK:
                self._on_window_tick(now, payload)
            elif kind == PERIOD_TICK:
                source, l = payload
                source.close_period(now, warmup_end, training_end)
                self._schedule(source.spec.start + (l + 1) * self.params.t_p, PERIOD_TICK,
                               (source, l + 1))

        for link in self.links.values():
            link.sync(self.end)
        return self._artifacts()

    def _artifacts(self) -> RunArtifacts:
        estimate_rows = [row for source in self.sources.values() for row in source.estimate_rows]
        ack_rows = [row for source in self.sources.values() for row in source.ack_rows]
        accounting = [link.accounting() for link in self.links.values()]

        for source in self.sources.values():
            logger.info(f"PCN flow {source.source_id}: sent {source.sent}, ACKs {source.acked}")
        logger.info(f"Run finished: {self.counters}")

        return RunArtifacts(
            ground_truth=pd.DataFrame(self.ground_truth_rows, columns=GROUND_TRUTH_COLUMNS),
            estimates=pd.DataFrame(estimate_rows, columns=ESTIMATE_COLUMNS),
            accounting=pd.DataFrame(accounting, columns=ACCOUNTING_COLUMNS),
            acks=pd.DataFrame(ack_rows, columns=ACK_COLUMNS),
            flows={name: source.metadata() for name, source in self.sources.items()},
            t_rho=self.params.t_rho,
            duration=self.end,
            seed=self.seed,
            counters=dict(self.counters),
        )


def run(sim_config: SimConfig, seed: int) -> RunArtifacts:
    """
    Simulate a config until its end time

    Args:
        sim_config: Validated config
        seed: Master seed

    Returns:
        RunArtifacts of the run
    """
    return Simulation(sim_config, seed).run()
