#!/usr/bin/env python3
"""
Error handling utilities for PCN experiments - the exception hierarchy shared
by the simulator, the forecaster and the CLI, plus helpers to wrap failures of
distributed sweep cells and to summarise cell outcomes.
"""

import functools
import logging
import traceback
from typing import Any, Callable, Dict, List, Optional, TypeVar

logger = logging.getLogger(__name__)

# Type variable for generic function types
F = TypeVar('F', bound=Callable[..., Any])


class PcnError(Exception):
    """Base exception for PCN errors"""
    def __init__(self, message: str, source: Optional[str] = None,
                 line: Optional[int] = None, cause: Optional[Exception] = None):
        self.message = message
        self.source = source
        self.line = line
        self.cause = cause
        super().__init__(self.format_error())

    def format_error(self) -> str:
        """Format error message with relevant details"""
        error = self.message
        if self.source:
            error += f" ({self.source}"
            if self.line is not None:
                error += f", line {self.line}"
            error += ")"
        if self.cause:
            error += f"\nCaused by: {type(self.cause).__name__}: {str(self.cause)}"
        return error


class ConfigError(PcnError):
    """Invalid simulation config: topology, node references or constants"""
    pass


class TraceFormatError(PcnError):
    """Trace file missing, empty or malformed"""
    pass


class DegenerateSeriesError(PcnError):
    """Series without sample variance where one is required"""
    pass


class SeriesTooShortError(PcnError):
    """Series shorter than the operation requires"""
    pass


class ArtifactError(PcnError):
    """Run directory missing files or holding malformed CSVs"""
    pass


class SweepCellError(PcnError):
    """A sweep cell failed while running in a worker"""
    pass


# Exceptions the CLI reports as validation failures (exit code 1)
VALIDATION_ERRORS = (
    ConfigError,
    TraceFormatError,
    DegenerateSeriesError,
    SeriesTooShortError,
    ArtifactError,
)


def with_ray_error_handling(func: F) -> F:
    """
    Decorator translating Ray failures of a sweep cell into SweepCellError

    PCN errors raised inside the cell pass through unchanged so the caller
    can still tell validation problems from runtime ones.

    Args:
        func: The function to decorate

    Returns:
        Decorated function with Ray errors unwrapped
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PcnError:
            raise
        except Exception as e:
            cause = getattr(e, "cause", None) or e.__cause__
            if isinstance(cause, PcnError):
                raise cause from e
            if type(e).__module__.startswith("ray"):
                raise SweepCellError(f"Sweep cell failed in worker: {type(e).__name__}",
                                     cause=cause or e) from e
            logger.error(f"Unexpected error: {str(e)}\n{traceback.format_exc()}")
            raise

    return wrapper  # type: ignore


def capture_cell_results(results: List[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Separate evaluated sweep cells from cells lacking data

    Args:
        results: Report rows, one per (t_P, direction, router, estimator)

    Returns:
        Dictionary with 'evaluated' and 'insufficient' lists and counts
    """
    evaluated = [row for row in results if row.get("status") == "ok"]
    insufficient = [row for row in results if row.get("status") != "ok"]

    return {
        'evaluated': evaluated,
        'insufficient': insufficient,
        'evaluated_count': len(evaluated),
        'insufficient_count': len(insufficient),
        'total': len(results),
    }


def handle_cell_results(results: Dict[str, Any]) -> None:
    """
    Log statistics about sweep cells

    Args:
        results: Dictionary from capture_cell_results
    """
    logger.info(
        f"Sweep summary: {results['evaluated_count']}/{results['total']} rows evaluated"
    )

    if results['insufficient_count'] > 0:
        logger.warning(f"Rows with insufficient data: {results['insufficient_count']}")
        for row in results['insufficient']:
            logger.warning(
                f"  t_P={row['t_p_seconds']} {row['direction']} router {row['router_index']} "
                f"{row['estimator']}: {row.get('reason', 'insufficient data')}"
            )
