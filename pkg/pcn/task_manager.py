#!/usr/bin/env python3
"""
Task manager for sweep cells - runs independent cells either in-process or
distributed across a Ray cluster, returning results in input order.
"""

import logging
import sys
from typing import Any, Callable, List, Optional

from .error_handling import with_ray_error_handling
from .resource_utils import get_optimal_resource_allocation

logger = logging.getLogger(__name__)


def _connect(ray_address: str, cell_count: int) -> dict:
    import ray

    resources = get_optimal_resource_allocation(cell_count)
    if ray.is_initialized():
        return resources
    if ray_address == "local":
        ray.init(num_cpus=resources["num_cpus"], include_dashboard=False,
                 ignore_reinit_error=True, log_to_driver=False)
        logger.info(f"Started local Ray instance with {resources['num_cpus']} CPUs")
        return resources
    try:
        ray.init(address=ray_address, ignore_reinit_error=True)
        logger.info(f"Connected to Ray cluster at {ray_address}")
    except ConnectionError:
        ray.init(num_cpus=resources["num_cpus"], include_dashboard=False, ignore_reinit_error=True)
        logger.info("No Ray cluster reachable, started new local Ray instance")
    return resources


@with_ray_error_handling
def distribute_tasks(
    task_func: Callable[[Any], Any],
    items: List[Any],
    ray_address: Optional[str] = None,
    progress_callback: Optional[Callable[[int, int], None]] = None,
) -> List[Any]:
    """
    Evaluate task_func on every item

    Args:
        task_func: Picklable function of one item
        items: Work items
        ray_address: Ray address ('auto', 'local' or host:port); None runs in-process
        progress_callback: Optional callback for progress updates

    Returns:
        Results in the order of items
    """
    total = len(items)
    if not ray_address:
        results = []
        for i, item in enumerate(items, start=1):
            results.append(task_func(item))
            if progress_callback:
                progress_callback(i, total)
        return results

    import ray

    resources = _connect(ray_address, total)
    logger.info(f"Distributing {total} sweep cells across Ray")
    remote_func = ray.remote(**resources["per_task"])(task_func)
    futures = [remote_func.remote(item) for item in items]

    pending = list(futures)
    completed = 0
    while pending:
        done, pending = ray.wait(pending, num_returns=1)
        completed += len(done)
        if progress_callback:
            progress_callback(completed, total)

    # ray.get on the original list keeps input order
    return ray.get(futures)


def shutdown() -> None:
    """Shut Ray down if this process started or joined it."""
    ray = sys.modules.get("ray")
    if ray is not None and ray.is_initialized():
        ray.shutdown()
        logger.info("Ray shutdown complete")
