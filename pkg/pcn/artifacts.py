#!/usr/bin/env python3
"""
Run directory I/O - the CSV logs of a simulation and the manifest that makes
the run reproducible.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from . import __version__
from .error_handling import ArtifactError
from .resource_utils import get_node_resources
from .simcore import (
    ACCOUNTING_COLUMNS,
    ACK_COLUMNS,
    ESTIMATE_COLUMNS,
    GROUND_TRUTH_COLUMNS,
    RunArtifacts,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
FLOAT_FORMAT = "%.10g"

FILES = {
    "ground_truth": ("ground_truth.csv", GROUND_TRUTH_COLUMNS),
    "estimates": ("estimates.csv", ESTIMATE_COLUMNS),
    "accounting": ("accounting.csv", ACCOUNTING_COLUMNS),
    "acks": ("acks.csv", ACK_COLUMNS),
}


@dataclass
class RunManifest:
    config_path: str
    config_sha256: str
    seed: int
    output_dir: str
    tool_version: str
    timestamp: str
    t_rho: float
    duration: float
    flows: Dict[str, Dict[str, Any]]
    files: List[str] = field(default_factory=list)
    host: Dict[str, Any] = field(default_factory=dict)


def calculate_file_hash(filepath: str) -> str:
    """SHA-256 of a file, read in chunks."""
    digest = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(artifacts: RunArtifacts, config_path: str, output_dir: str) -> RunManifest:
    return RunManifest(
        config_path=os.path.abspath(config_path),
        config_sha256=calculate_file_hash(config_path),
        seed=artifacts.seed,
        output_dir=os.path.abspath(output_dir),
        tool_version=__version__,
        timestamp=datetime.now(timezone.utc).isoformat(),
        t_rho=artifacts.t_rho,
        duration=artifacts.duration,
        flows=artifacts.flows,
        files=[name for name, _ in FILES.values()],
        host=get_node_resources(),
    )


def write_run_artifacts(artifacts: RunArtifacts, output_dir: str, config_path: str) -> RunManifest:
    """
    Write the run's CSVs and its manifest

    Args:
        artifacts: Result of simcore.run
        output_dir: Run directory (created if needed)
        config_path: Config file the run came from

    Returns:
        The manifest written alongside the CSVs
    """
    os.makedirs(output_dir, exist_ok=True)
    for attr, (name, columns) in FILES.items():
        frame: pd.DataFrame = getattr(artifacts, attr)
        frame[columns].to_csv(os.path.join(output_dir, name), index=False,
                              float_format=FLOAT_FORMAT)

    manifest = build_manifest(artifacts, config_path, output_dir)
    with open(os.path.join(output_dir, MANIFEST_NAME), "w") as f:
        json.dump(asdict(manifest), f, indent=2, sort_keys=True)
    logger.info(f"Run artifacts written to {output_dir}")
    return manifest


def read_manifest(run_dir: str) -> RunManifest:
    path = os.path.join(run_dir, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise ArtifactError("run directory has no manifest", source=run_dir)
    try:
        with open(path, "r") as f:
            return RunManifest(**json.load(f))
    except (json.JSONDecodeError, TypeError) as e:
        raise ArtifactError("malformed manifest", source=path, cause=e)


def read_run_artifacts(run_dir: Union[str, os.PathLike]) -> RunArtifacts:
    """
    Load a run directory written by write_run_artifacts

    Args:
        run_dir: Run directory

    Returns:
        RunArtifacts rebuilt from the CSVs and the manifest
    """
    run_dir = os.fspath(run_dir)
    if not os.path.isdir(run_dir):
        raise ArtifactError("run directory not found", source=run_dir)
    manifest = read_manifest(run_dir)

    frames: Dict[str, pd.DataFrame] = {}
    for attr, (name, columns) in FILES.items():
        path = os.path.join(run_dir, name)
        if not os.path.isfile(path):
            raise ArtifactError(f"missing {name}", source=run_dir)
        try:
            frame = pd.read_csv(path, dtype={c: str for c in ("source_id", "link_id") if c in columns})
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise ArtifactError(f"unreadable {name}", source=path, cause=e)
        missing = [c for c in columns if c not in frame.columns]
        if missing:
            raise ArtifactError(f"{name} lacks columns {', '.join(missing)}", source=path)
        frames[attr] = frame

    return RunArtifacts(
        ground_truth=frames["ground_truth"],
        estimates=frames["estimates"],
        accounting=frames["accounting"],
        acks=frames["acks"],
        flows=manifest.flows,
        t_rho=manifest.t_rho,
        duration=manifest.duration,
        seed=manifest.seed,
    )
