import logging
import os
from typing import Optional

from src.errors import NoSuchProcess, PriorityLoweringDenied, PriorityRangeError
from src.limits.rlimits import INFINITY, RlimitKind, get_rlimit

logger = logging.getLogger(__name__)

MIN_NICE = -20
MAX_NICE = 19


def get_priority(pid: Optional[int] = None) -> int:
    """Niceness of a process (the calling process by default)."""
    try:
        return os.getpriority(os.PRIO_PROCESS, pid or 0)
    except ProcessLookupError:
        raise NoSuchProcess(f"no such process: {pid}") from None


def lowest_permitted_nice() -> int:
    """
    Lowest niceness the calling process may request without privilege.

    RLIMIT_NICE stores a ceiling c meaning niceness down to 20 - c.
    """
    if os.geteuid() == 0:
        return MIN_NICE
    ceiling = get_rlimit(RlimitKind.NICE).soft
    if ceiling == INFINITY:
        return MIN_NICE
    return max(MIN_NICE, 20 - int(ceiling))


def set_priority(nice: int, pid: Optional[int] = None) -> int:
    """
    Set the niceness of a process.

    Unprivileged callers may only raise the value, except down to the
    floor granted by RLIMIT_NICE.

    Args:
        nice: Niceness in [-20, 19].
        pid: Target process; None means the calling process.

    Returns:
        Niceness read back after the change.

    Raises:
        PriorityRangeError: nice outside [-20, 19].
        PriorityLoweringDenied: lowering without privilege.
    """
    if isinstance(nice, bool) or not isinstance(nice, int) or not MIN_NICE <= nice <= MAX_NICE:
        raise PriorityRangeError(f"priority must be an integer in [{MIN_NICE}, {MAX_NICE}], got {nice!r}")
    current = get_priority(pid)
    if nice < current and nice < lowest_permitted_nice():
        raise PriorityLoweringDenied(current, nice)
    try:
        os.setpriority(os.PRIO_PROCESS, pid or 0, nice)
    except PermissionError:
        raise PriorityLoweringDenied(current, nice) from None
    except ProcessLookupError:
        raise NoSuchProcess(f"no such process: {pid}") from None
    result = get_priority(pid)
    logger.debug(f"Priority {current} -> {result}")
    return result
