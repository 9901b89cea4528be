import pytest

from pcn.config import SimulationParams, is_multiple, load_config
from pcn.error_handling import ConfigError

from conftest import PARKING_LOT, chain_config


def test_parking_lot_example():
    config = load_config(PARKING_LOT)
    assert config.routers == ["R1", "R2", "R3", "R4", "R5"]
    assert len(config.pcn_flows) == 2
    assert len(config.background_flows) == 6

    right = next(f for f in config.pcn_flows if f.name == "right")
    assert right.label == "rightward"
    assert config.router_links(right.path) == ["R1-R2", "R2-R3", "R3-R4", "R4-R5", "R5-B"]
    assert config.protocol_params(right).hop_count == 5
    assert config.simulation.warmup_end == pytest.approx(80.0)
    assert config.simulation.training_end == pytest.approx(160.0)

    bg1 = next(f for f in config.background_flows if f.name == "bg1")
    assert bg1.model == "onoff-mmpp"
    assert bg1.params["on_rate"] == 400.0


def test_bidirectional_links_are_expanded(write_config):
    config = load_config(write_config(chain_config(routers=2)))
    ids = {link.link_id for link in config.links}
    assert {"A-R1", "R1-A", "R1-R2", "R2-R1", "R2-B", "B-R2"} == ids


def test_relative_trace_paths_resolve_against_config(write_config, tmp_path):
    text = chain_config(background="trace = traces/bg.trace")
    config = load_config(write_config(text))
    assert config.resolve(config.background_flows[0].trace) == str(tmp_path / "traces" / "bg.trace")


@pytest.mark.parametrize("mutate, message", [
    (lambda t: t.replace("routers = R1, R2", "routers = R1"), "unknown node"),
    (lambda t: t.replace("rate = 50", "rate = 150"), "exceeds"),
    (lambda t: t.replace("[link:R2-B]", "[link:R2-C]"), "unknown node"),
    (lambda t: t + "\n[queue:R1]\nlimit = 4\n", "unknown section"),
    (lambda t: t.replace("duration = 20.0", "duration = -1"), "invalid config"),
    (lambda t: t.replace("path = A, R1, R2, B", "path = A, R1, A"), "invalid config"),
    (lambda t: t.replace("presignal = false", "presignal = false\nm = 1"), "more than M"),
    (lambda t: t.replace("t_p = 0.4", "t_p = 0.3"), "not a multiple"),
    (lambda t: t + "\n[pcn:again]\npath = A, R1, R2, B\nrate = 20\ndirection = probe\n", "direction labels"),
])
def test_invalid_configs(write_config, mutate, message):
    with pytest.raises(ConfigError, match=message):
        load_config(write_config(mutate(chain_config(routers=2))))


def test_background_needs_trace_or_model(write_config):
    both = chain_config(background="trace = a.trace\nmodel = poisson\nparams = rate=10")
    with pytest.raises(ConfigError):
        load_config(write_config(both))
    bad_params = chain_config(background="model = poisson\nparams = speed=10")
    with pytest.raises(ConfigError):
        load_config(write_config(bad_params))


def test_pcn_flow_needs_reverse_path(write_config):
    text = chain_config(routers=2).replace("[link:R2-B]\ncapacity = 1000\ndelay = 0.002\n"
                                           "queue_limit = 100\nbidirectional = true",
                                           "[link:R2-B]\ncapacity = 1000\ndelay = 0.002\n"
                                           "queue_limit = 100")
    with pytest.raises(ConfigError, match="reverse link"):
        load_config(write_config(text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.ini")


def test_split_fractions_must_leave_evaluation():
    with pytest.raises(ValueError):
        SimulationParams(duration=10, warmup_fraction=0.5, training_fraction=0.5)


def test_is_multiple():
    assert is_multiple(0.4, 0.2)
    assert is_multiple(3.2, 0.2)
    assert is_multiple(0.2, 0.2)
    assert not is_multiple(0.3, 0.2)
    assert not is_multiple(0.1, 0.2)
