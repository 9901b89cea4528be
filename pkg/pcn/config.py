#!/usr/bin/env python3
"""
Simulation config - pydantic models for topology, flows and timing constants,
and the loader for the INI-style config file (grammar in README.md).
"""

import configparser
import logging
import os
import re
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .error_handling import ConfigError
from .loadfactor import LoadFactorConfig
from .protocol import DEFAULT_M, ProtocolParams
from .traces import DEFAULT_PACKET_SIZE, parse_model_params, validate_model_params

logger = logging.getLogger(__name__)

NODE_NAME = re.compile(r"^[A-Za-z0-9_]+$")
MULTIPLE_TOLERANCE = 1e-9


def is_multiple(value: float, base: float) -> bool:
    """True when value is a positive integer multiple of base."""
    ratio = value / base
    return round(ratio) >= 1 and abs(ratio - round(ratio)) < MULTIPLE_TOLERANCE * max(1.0, ratio)


class SimulationParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    duration: float = Field(gt=0)
    t_rho: float = Field(default=0.2, gt=0)
    t_p: float = Field(default=0.4, gt=0)
    qhat_tick: float = Field(default=0.01, gt=0)
    qhat_weight: float = Field(default=0.125, gt=0, le=1)
    kappa_q: float = Field(default=0.5, gt=0)
    gamma: float = Field(default=0.98, gt=0, le=1)
    transform_a: float = 1.0
    transform_b: float = 0.0
    warmup_fraction: float = Field(default=0.10, ge=0)
    training_fraction: float = Field(default=0.10, ge=0)
    max_probe_fraction: float = Field(default=0.10, gt=0)

    @model_validator(mode="after")
    def _check_timing(self) -> "SimulationParams":
        if self.warmup_fraction + self.training_fraction >= 1:
            raise ValueError("warmup_fraction + training_fraction must be below 1")
        if not is_multiple(self.t_p, self.t_rho):
            raise ValueError(f"t_p={self.t_p:g} is not a multiple of t_rho={self.t_rho:g}")
        return self

    @property
    def warmup_end(self) -> float:
        return self.warmup_fraction * self.duration

    @property
    def training_end(self) -> float:
        return (self.warmup_fraction + self.training_fraction) * self.duration

    def load_factor_config(self, capacity: float) -> LoadFactorConfig:
        return LoadFactorConfig(kappa_q=self.kappa_q, gamma=self.gamma, capacity=capacity,
                                t_rho=self.t_rho, transform_a=self.transform_a,
                                transform_b=self.transform_b)


class LinkSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    src: str
    dst: str
    capacity: float = Field(gt=0)
    delay: float = Field(ge=0)
    queue_limit: int = Field(ge=1)

    @property
    def link_id(self) -> str:
        return f"{self.src}-{self.dst}"


class FlowSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    path: List[str] = Field(min_length=2)
    start: float = Field(default=0.0, ge=0)

    @field_validator("path")
    @classmethod
    def _loop_free(cls, path: List[str]) -> List[str]:
        if len(set(path)) != len(path):
            raise ValueError(f"path {','.join(path)} visits a node twice")
        return path

    @property
    def source(self) -> str:
        return self.path[0]

    @property
    def sink(self) -> str:
        return self.path[-1]


class PcnFlowSpec(FlowSpec):
    rate: float = Field(gt=0)
    m: int = Field(default=DEFAULT_M, ge=1)
    presignal: bool = False
    direction: Optional[str] = None
    fixed_theta: Optional[float] = Field(default=None, gt=-1, lt=1)

    @property
    def label(self) -> str:
        return self.direction or self.name


class BackgroundFlowSpec(FlowSpec):
    trace: Optional[str] = None
    model: Optional[str] = None
    params: Dict[str, float] = Field(default_factory=dict)
    size: int = Field(default=DEFAULT_PACKET_SIZE, gt=0)

    @model_validator(mode="after")
    def _check_source(self) -> "BackgroundFlowSpec":
        if (self.trace is None) == (self.model is None):
            raise ValueError(f"background flow {self.name} needs exactly one of trace or model")
        if self.model is not None:
            validate_model_params(self.model, self.params)
        return self


class SimConfig(BaseModel):
    """Topology, flows and constants of one simulation."""
    model_config = ConfigDict(frozen=True)

    simulation: SimulationParams
    hosts: List[str]
    routers: List[str] = Field(min_length=1)
    links: List[LinkSpec] = Field(min_length=1)
    pcn_flows: List[PcnFlowSpec] = Field(default_factory=list)
    background_flows: List[BackgroundFlowSpec] = Field(default_factory=list)
    base_dir: str = "."

    @model_validator(mode="after")
    def _check_topology(self) -> "SimConfig":
        nodes = self.hosts + self.routers
        for name in nodes:
            if not NODE_NAME.match(name):
                raise ValueError(f"invalid node name '{name}'")
        if len(set(nodes)) != len(nodes):
            raise ValueError("node names must be unique across hosts and routers")

        known = set(nodes)
        seen = set()
        for link in self.links:
            for end in (link.src, link.dst):
                if end not in known:
                    raise ValueError(f"link {link.link_id} references unknown node '{end}'")
            if link.src == link.dst:
                raise ValueError(f"link {link.link_id} is a self loop")
            if link.link_id in seen:
                raise ValueError(f"duplicate link {link.link_id}")
            seen.add(link.link_id)

        names = [f.name for f in self.pcn_flows] + [f.name for f in self.background_flows]
        if len(set(names)) != len(names):
            raise ValueError("flow names must be unique")
        labels = [f.label for f in self.pcn_flows]
        if len(set(labels)) != len(labels):
            raise ValueError("PCN flow direction labels must be unique")

        for flow in list(self.pcn_flows) + list(self.background_flows):
            self._check_path(flow, seen)

        capacities = {link.link_id: link.capacity for link in self.links}
        hosts = set(self.hosts)
        for flow in self.pcn_flows:
            if flow.source not in hosts or flow.sink not in hosts:
                raise ValueError(f"PCN flow {flow.name} must run between hosts")
            reverse = list(reversed(flow.path))
            for a, b in zip(reverse, reverse[1:]):
                if f"{a}-{b}" not in seen:
                    raise ValueError(f"PCN flow {flow.name} has no reverse link {a}-{b} for ACKs")
            hops = len(self.routers_on(flow.path))
            if hops > flow.m:
                raise ValueError(f"PCN flow {flow.name} crosses {hops} routers, more than M={flow.m}")
            bottleneck = min(capacities[f"{a}-{b}"] for a, b in zip(flow.path, flow.path[1:]))
            if flow.rate > self.simulation.max_probe_fraction * bottleneck:
                raise ValueError(
                    f"PCN flow {flow.name} rate {flow.rate} exceeds "
                    f"{self.simulation.max_probe_fraction:g} of path capacity {bottleneck}"
                )
        return self

    def _check_path(self, flow: FlowSpec, link_ids: set) -> None:
        known = set(self.hosts) | set(self.routers)
        for node in flow.path:
            if node not in known:
                raise ValueError(f"flow {flow.name} references unknown node '{node}'")
        for a, b in zip(flow.path, flow.path[1:]):
            if f"{a}-{b}" not in link_ids:
                raise ValueError(f"flow {flow.name} uses missing link {a}-{b}")
        if not self.routers_on(flow.path):
            raise ValueError(f"flow {flow.name} crosses no router")

    def routers_on(self, path: List[str]) -> List[str]:
        routers = set(self.routers)
        return [node for node in path if node in routers]

    def router_links(self, path: List[str]) -> List[str]:
        """Outgoing link id of each router on the path, router order."""
        routers = set(self.routers)
        return [f"{a}-{b}" for a, b in zip(path, path[1:]) if a in routers]

    def protocol_params(self, flow: PcnFlowSpec) -> ProtocolParams:
        return ProtocolParams(m=flow.m, presignal=flow.presignal,
                              hop_count=len(self.routers_on(flow.path)))

    def resolve(self, relative: str) -> str:
        return relative if os.path.isabs(relative) else os.path.join(self.base_dir, relative)


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _section_items(parser: configparser.ConfigParser, section: str) -> Dict[str, str]:
    return {key: value for key, value in parser.items(section)}


def _parse_link_sections(parser: configparser.ConfigParser) -> List[dict]:
    links = []
    for section in parser.sections():
        if not section.startswith("link:"):
            continue
        name = section.split(":", 1)[1].strip()
        if name.count("-") != 1:
            raise ConfigError(f"link section '{section}' must be named link:<src>-<dst>")
        src, dst = (part.strip() for part in name.split("-"))
        items = _section_items(parser, section)
        bidirectional = parser.getboolean(section, "bidirectional", fallback=False)
        items.pop("bidirectional", None)
        links.append({"src": src, "dst": dst, **items})
        if bidirectional:
            links.append({"src": dst, "dst": src, **items})
    return links


def _parse_flow_sections(parser: configparser.ConfigParser, prefix: str) -> List[dict]:
    flows = []
    for section in parser.sections():
        if not section.startswith(prefix + ":"):
            continue
        items = _section_items(parser, section)
        items["name"] = section.split(":", 1)[1].strip()
        items["path"] = _split_list(items.get("path", ""))
        if prefix == "background" and "params" in items:
            try:
                items["params"] = parse_model_params(items["params"])
            except ValueError as e:
                raise ConfigError(f"bad params in [{section}]: {e}")
        if prefix == "pcn" and "presignal" in items:
            items["presignal"] = parser.getboolean(section, "presignal")
        flows.append(items)
    return flows


def load_config(path: Union[str, os.PathLike]) -> SimConfig:
    """
    Read and validate a simulation config file

    Args:
        path: INI-style config file

    Returns:
        Validated SimConfig; relative trace paths resolve against the file's directory
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ConfigError("config file not found", source=path)

    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, "r") as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError("config file does not parse", source=path, cause=e)

    for required in ("simulation", "nodes"):
        if not parser.has_section(required):
            raise ConfigError(f"missing [{required}] section", source=path)

    known = {"simulation", "nodes"}
    for section in parser.sections():
        if section not in known and section.split(":", 1)[0] not in ("link", "pcn", "background"):
            raise ConfigError(f"unknown section [{section}]", source=path)

    try:
        return SimConfig(
            simulation=_section_items(parser, "simulation"),
            hosts=_split_list(parser.get("nodes", "hosts", fallback="")),
            routers=_split_list(parser.get("nodes", "routers", fallback="")),
            links=_parse_link_sections(parser),
            pcn_flows=_parse_flow_sections(parser, "pcn"),
            background_flows=_parse_flow_sections(parser, "background"),
            base_dir=os.path.dirname(os.path.abspath(path)),
        )
    except ConfigError as e:
        raise ConfigError(e.message, source=path, cause=e.cause)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {e.errors()[0]['msg']}", source=path, cause=e)
