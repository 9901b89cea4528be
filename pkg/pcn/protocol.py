#!/usr/bin/env python3
"""
PCN header arithmetic - source header generation, the stateless router
marking rule, the receiver echo and source-side attribution of ACKs to the
router that could have marked them.

A packet is markable by the router at which TTL mod M equals IPid mod M,
evaluated on the TTL the packet arrives with. On an h-hop path router i sees
TTL M-(i-1), so for h <= M at most one router can mark any given packet.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

IPID_MODULUS = 1 << 16
DEFAULT_M = 32


@dataclass(frozen=True)
class PacketHeader:
    """The wire-visible PCN state of one packet."""
    ipid: int
    ttl: int
    ecn: bool = False
    is_ack: bool = False
    echo_of: Optional[int] = None


class ProtocolParams(BaseModel):
    """Per-connection PCN parameters."""
    model_config = ConfigDict(frozen=True)

    m: int = Field(default=DEFAULT_M, ge=1)
    presignal: bool = False
    hop_count: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_presignal(self) -> "ProtocolParams":
        if self.presignal:
            if self.hop_count is None:
                raise ValueError("presignal requires a known hop_count")
            if self.hop_count > self.m:
                raise ValueError(f"presignal hop_count {self.hop_count} exceeds M={self.m}")
        return self

    @property
    def tracked_routers(self) -> int:
        """Number of router slots the source keeps tallies for."""
        return self.hop_count if self.hop_count is not None else self.m


@dataclass
class SourceState:
    """Sender-side header state: the previous IPid and the presignal cursor."""
    params: ProtocolParams
    prev_ipid: int = IPID_MODULUS - 1
    cursor: int = 0


@dataclass
class RouterTally:
    router_index: int
    markable_acks: int = 0
    marked_acks: int = 0
    period_index: int = 0


@dataclass
class TallyTable:
    """Per-router tallies of one source for the current estimation period."""
    params: ProtocolParams
    period_index: int = 0
    tallies: Dict[int, RouterTally] = field(default_factory=dict)
    ignored_acks: int = 0

    def __post_init__(self):
        if not self.tallies:
            self.tallies = {
                i: RouterTally(router_index=i, period_index=self.period_index)
                for i in range(1, self.params.tracked_routers + 1)
            }


class Attribution(NamedTuple):
    router: Optional[int]
    ambiguous: bool = False


def arrival_ttl(router_index: int, m: int) -> int:
    """TTL seen by the router_index-th router of a path (1-based)."""
    return m - (router_index - 1)


def markable_residues(hop_count: int, m: int) -> List[int]:
    """IPid residues mod M markable by routers 1..hop_count, in router order."""
    return [arrival_ttl(i, m) % m for i in range(1, hop_count + 1)]


def next_data_header(source_state: SourceState) -> PacketHeader:
    """
    Emit the header of the next data packet and advance the source state

    With presignalling the IPid walks the markable residues cyclically so every
    packet has a marker on the path; the multiple of M in front of the residue
    wraps before 2^16 so the residue survives the IPid wrap.

    Args:
        source_state: The sending source's header state (mutated)

    Returns:
        Fresh unmarked header with TTL = M
    """
    params = source_state.params
    m = params.m
    if params.presignal:
        residues = markable_residues(params.hop_count, m)
        cycle, slot = divmod(source_state.cursor, len(residues))
        blocks = max(1, IPID_MODULUS // m)
        ipid = ((cycle % blocks) * m + residues[slot]) % IPID_MODULUS
        source_state.cursor += 1
    else:
        ipid = (source_state.prev_ipid + 1) % IPID_MODULUS
    source_state.prev_ipid = ipid
    return PacketHeader(ipid=ipid, ttl=m, ecn=False)


def is_markable(ttl: int, ipid: int, m: int) -> bool:
    """True iff TTL mod M == IPid mod M."""
    return ttl % m == ipid % m


def router_mark(header: PacketHeader, load_factor: float, rng: np.random.Generator,
                m: int = DEFAULT_M) -> PacketHeader:
    """
    Apply the router marking rule to a data packet

    The random draw is only taken for markable packets. ACK headers pass
    through untouched since their ECN bit carries the echo.

    Args:
        header: Header as it arrives at the router (TTL not yet decremented)
        load_factor: Current load factor of the outgoing link, in [0, 100]
        rng: Router's random stream
        m: Router-slot modulus

    Returns:
        The header, with ECN set if the router marked it
    """
    if not 0.0 <= load_factor <= 100.0:
        raise ValueError(f"load factor {load_factor} outside [0, 100]")
    if header.is_ack or header.ecn:
        return header
    if not is_markable(header.ttl, header.ipid, m):
        return header
    if rng.random() < load_factor / 100.0:
        return PacketHeader(ipid=header.ipid, ttl=header.ttl, ecn=True,
                            is_ack=False, echo_of=header.echo_of)
    return header


def forward(header: PacketHeader) -> PacketHeader:
    """Forwarding step: decrement TTL after the marking decision."""
    return PacketHeader(ipid=header.ipid, ttl=max(header.ttl - 1, 0), ecn=header.ecn,
                        is_ack=header.is_ack, echo_of=header.echo_of)


def make_ack(data_header: PacketHeader, m: int = DEFAULT_M) -> PacketHeader:
    """Receiver echo: one ACK per data packet carrying its ECN bit."""
    return PacketHeader(ipid=data_header.ipid, ttl=m, ecn=data_header.ecn,
                        is_ack=True, echo_of=data_header.ipid)


def attribute_router(ipid: int, m: int, hop_count: int) -> Attribution:
    """
    Find the router for which a packet with this IPid was markable

    Router i matches when (i - 1) = -IPid (mod M); the smallest such i is
    returned. On paths longer than M a second router can match, which is
    flagged as ambiguous.

    Args:
        ipid: IPid echoed by the ACK
        m: Router-slot modulus
        hop_count: Number of routers on the path

    Returns:
        Attribution with the router index, or None when no real router matches
    """
    first = (-ipid) % m + 1
    if first > hop_count:
        return Attribution(router=None)
    return Attribution(router=first, ambiguous=first + m <= hop_count)


def on_ack(tally_table: TallyTable, ack: PacketHeader,
           params: Optional[ProtocolParams] = None) -> TallyTable:
    """
    Tally one returning ACK against the router it is attributed to

    Args:
        tally_table: Source tallies for the current period (mutated)
        ack: The returning ACK
        params: Protocol parameters, defaults to the table's own

    Returns:
        The updated tally table
    """
    params = params or tally_table.params
    ipid = ack.echo_of if ack.echo_of is not None else ack.ipid
    attribution = attribute_router(ipid, params.m, params.tracked_routers)
    if attribution.router is None:
        tally_table.ignored_acks += 1
        return tally_table
    tally = tally_table.tallies[attribution.router]
    tally.markable_acks += 1
    if ack.ecn:
        tally.marked_acks += 1
    return tally_table


def close_period(tally_table: TallyTable,
                 previous_estimates: Optional[Sequence[Optional[float]]] = None
                 ) -> List[Optional[float]]:
    """
    Turn the period's tallies into per-router estimates e (percent)

    Routers without samples carry the previous estimate forward; None means
    no estimate has been seen yet. The table is reset for the next period.

    Args:
        tally_table: Source tallies (reset in place)
        previous_estimates: Estimates of the previous period, router order

    Returns:
        Estimates for routers 1..n in order
    """
    n = tally_table.params.tracked_routers
    previous = list(previous_estimates) if previous_estimates is not None else [None] * n
    estimates: List[Optional[float]] = []
    for i in range(1, n + 1):
        tally = tally_table.tallies[i]
        if tally.markable_acks > 0:
            estimates.append(100.0 * tally.marked_acks / tally.markable_acks)
        else:
            estimates.append(previous[i - 1])

    tally_table.period_index += 1
    for i in range(1, n + 1):
        tally_table.tallies[i] = RouterTally(router_index=i, period_index=tally_table.period_index)
    return estimates


def bottleneck_router(estimates: Sequence[Optional[float]]) -> Optional[int]:
    """Router (1-based) with the largest estimate; lowest index wins ties."""
    best: Optional[int] = None
    best_value = -1.0
    for i, value in enumerate(estimates, start=1):
        if value is not None and value > best_value:
            best, best_value = i, value
    return best
