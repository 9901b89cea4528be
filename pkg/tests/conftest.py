import os

import pytest

from pcn.config import load_config
from pcn.simcore import run

REPO_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
CONFIG_DIR = os.path.join(REPO_ROOT, "configs")
PARKING_LOT = os.path.join(CONFIG_DIR, "parking_lot.ini")
PROBE_ONLY = os.path.join(CONFIG_DIR, "probe_only.ini")


def chain_config(routers=2, duration=20.0, rate=50, presignal=False, background=None,
                 extra_pcn="", extra_simulation=""):
    """INI text for a host-router chain A - R1 - ... - Rn - B with one PCN flow."""
    names = [f"R{i}" for i in range(1, routers + 1)]
    nodes = ["A"] + names + ["B"]
    lines = [
        "[simulation]",
        f"duration = {duration}",
        "t_rho = 0.2",
        "t_p = 0.4",
        extra_simulation,
        "",
        "[nodes]",
        "hosts = A, B",
        f"routers = {', '.join(names)}",
        "",
    ]
    for a, b in zip(nodes, nodes[1:]):
        lines += [f"[link:{a}-{b}]", "capacity = 1000", "delay = 0.002", "queue_limit = 100",
                  "bidirectional = true", ""]
    lines += ["[pcn:probe]", f"path = {', '.join(nodes)}", f"rate = {rate}",
              f"presignal = {'true' if presignal else 'false'}", extra_pcn, ""]
    if background:
        lines += ["[background:cross]", f"path = {', '.join(nodes)}", background, ""]
    return "\n".join(lines)


@pytest.fixture
def write_config(tmp_path):
    """Write INI text to a file in tmp_path and return its path."""
    def _write(text, name="sim.ini"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write


@pytest.fixture(scope="session")
def probe_only_config():
    return load_config(PROBE_ONLY)


@pytest.fixture(scope="session")
def probe_only_run(probe_only_config):
    """One 60 s run of the two-router example, shared by the read-only tests."""
    return run(probe_only_config, seed=7)
