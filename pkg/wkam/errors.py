"""
Error codes raised by the toolkit.
"""

from enum import Enum
from typing import Any, Dict


class ErrorCode(Enum):
    """Failure classes reported by the numerical operations."""

    NO_CONVERGENCE = "no_convergence"
    ESCAPE = "escape"
    RESOLUTION = "resolution"
    CROSSCHECK_FAIL = "crosscheck_fail"
    MAX_ITER = "max_iter"
    MONOTONICITY_FAIL = "monotonicity_fail"
    NO_STABILIZE = "no_stabilize"
    FOLD_ON_NODE = "fold_on_node"
    NOT_CLOSED = "not_closed"
    UNSUPPORTED_DIMENSION = "unsupported_dimension"
    NOT_TONELLI = "not_tonelli"
    CONFIG = "config"
    CACHE_FORMAT = "cache_format"


class WkamError(Exception):
    """An operation failed in a way the caller may want to classify."""

    def __init__(self, code: ErrorCode, message: str, **details: Any):
        super().__init__(f"{code.name}: {message}")
        self.code = code
        self.message = message
        self.details: Dict[str, Any] = details
