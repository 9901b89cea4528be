#!/usr/bin/env python3
"""
Resource utilities - host facts recorded in run manifests and the worker
allocation used when sweep cells are distributed over Ray.
"""

import logging
import platform
import socket
from typing import Any, Dict

import psutil

logger = logging.getLogger(__name__)


def get_node_resources() -> Dict[str, Any]:
    """
    Get resources of the current host

    Returns:
        Dictionary containing hostname, CPU count, memory and Python version
    """
    return {
        "hostname": socket.gethostname(),
        "cpu_count": psutil.cpu_count(logical=True),
        "memory_gb": round(psutil.virtual_memory().total / (1024 ** 3), 2),
        "python": platform.python_version(),
    }


def get_optimal_resource_allocation(cell_count: int) -> Dict[str, Any]:
    """
    Decide how many CPUs a sweep may occupy and how much each cell gets

    Sweep cells are single-threaded numpy work, so each gets one CPU; the
    sweep leaves one CPU to the system and never asks for more CPUs than it
    has cells.

    Args:
        cell_count: Number of cells to evaluate

    Returns:
        Dictionary with 'num_cpus' for ray.init and 'per_task' remote options
    """
    cpu_count = psutil.cpu_count(logical=True) or 1
    workers = max(1, min(cell_count, cpu_count - 1))
    resources = {"num_cpus": workers, "per_task": {"num_cpus": 1}}
    logger.debug(f"Allocated resources for {cell_count} sweep cells: {resources}")
    return resources
