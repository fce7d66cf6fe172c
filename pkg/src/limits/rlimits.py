"""
Kernel resource limits (getrlimit / setrlimit / prlimit).

Units follow kernel conventions: bytes for memory and file sizes, seconds for
CPU, microseconds for RTTIME, plain counts for NOFILE/NPROC/SIGPENDING, and a
ceiling for NICE (permitted niceness >= 20 - ceiling) and RTPRIO.
"""

import enum
import logging
import math
import os
import re
import resource
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, Union

from src.errors import LimitError, LimitPermissionError, NoSuchProcess

logger = logging.getLogger(__name__)

INFINITY = math.inf
LimitNumber = Union[int, float]

_KERNEL_INFINITY_FLOOR = 2 ** 63
_SUFFIXES = {"": 1, "K": 1024, "M": 1024 ** 2, "G": 1024 ** 3}
_VALUE_RE = re.compile(r"^(\d+)\s*([KMG]?)(?:i?B)?$", re.IGNORECASE)


class LimitUnit(str, enum.Enum):
    BYTES = "bytes"
    SECONDS = "seconds"
    MICROSECONDS = "microseconds"
    COUNT = "count"
    CEILING = "ceiling"


class RlimitKind(str, enum.Enum):
    AS = "AS"
    CORE = "CORE"
    CPU = "CPU"
    DATA = "DATA"
    FSIZE = "FSIZE"
    MEMLOCK = "MEMLOCK"
    MSGQUEUE = "MSGQUEUE"
    NICE = "NICE"
    NOFILE = "NOFILE"
    NPROC = "NPROC"
    RTPRIO = "RTPRIO"
    RTTIME = "RTTIME"
    SIGPENDING = "SIGPENDING"
    STACK = "STACK"

    @property
    def resource(self) -> int:
        return getattr(resource, f"RLIMIT_{self.value}")

    @property
    def unit(self) -> LimitUnit:
        return _UNITS[self]

    @classmethod
    def parse(cls, text: str) -> "RlimitKind":
        name = text.strip().upper()
        if name.startswith("RLIMIT_"):
            name = name[len("RLIMIT_"):]
        try:
            return cls(name)
        except ValueError:
            raise LimitError(f"unknown resource limit '{text}'") from None


_UNITS: Dict[RlimitKind, LimitUnit] = {
    RlimitKind.AS: LimitUnit.BYTES,
    RlimitKind.CORE: LimitUnit.BYTES,
    RlimitKind.CPU: LimitUnit.SECONDS,
    RlimitKind.DATA: LimitUnit.BYTES,
    RlimitKind.FSIZE: LimitUnit.BYTES,
    RlimitKind.MEMLOCK: LimitUnit.BYTES,
    RlimitKind.MSGQUEUE: LimitUnit.BYTES,
    RlimitKind.NICE: LimitUnit.CEILING,
    RlimitKind.NOFILE: LimitUnit.COUNT,
    RlimitKind.NPROC: LimitUnit.COUNT,
    RlimitKind.RTPRIO: LimitUnit.CEILING,
    RlimitKind.RTTIME: LimitUnit.MICROSECONDS,
    RlimitKind.SIGPENDING: LimitUnit.COUNT,
    RlimitKind.STACK: LimitUnit.BYTES,
}


@dataclass(frozen=True)
class RlimitValue:
    """Soft/hard pair; INFINITY stands for the kernel's unlimited value."""
    soft: LimitNumber
    hard: LimitNumber

    def __post_init__(self):
        for name in ("soft", "hard"):
            value = getattr(self, name)
            if value != INFINITY and (not isinstance(value, int) or isinstance(value, bool) or value < 0):
                raise LimitError(f"{name} limit must be a nonnegative integer or unlimited, got {value!r}")
        if self.soft > self.hard:
            raise LimitError(f"soft limit {format_limit(self.soft)} exceeds hard limit {format_limit(self.hard)}")

    @classmethod
    def of(cls, hard: LimitNumber, soft: Optional[LimitNumber] = None) -> "RlimitValue":
        return cls(soft=hard if soft is None else soft, hard=hard)

    @classmethod
    def from_kernel(cls, pair: Tuple[int, int]) -> "RlimitValue":
        return cls(soft=_from_kernel(pair[0]), hard=_from_kernel(pair[1]))

    def to_kernel(self) -> Tuple[int, int]:
        return _to_kernel(self.soft), _to_kernel(self.hard)

    def __str__(self) -> str:
        return f"soft={format_limit(self.soft)}; hard={format_limit(self.hard)}"


def _from_kernel(value: int) -> LimitNumber:
    if value == resource.RLIM_INFINITY or value < 0 or value >= _KERNEL_INFINITY_FLOOR:
        return INFINITY
    return value


def _to_kernel(value: LimitNumber) -> int:
    return resource.RLIM_INFINITY if value == INFINITY else int(value)


def format_limit(value: LimitNumber) -> str:
    return "unlimited" if value == INFINITY else str(value)


def _is_privileged() -> bool:
    return os.geteuid() == 0


def get_rlimit(kind: RlimitKind, pid: Optional[int] = None) -> RlimitValue:
    """
    Read the current limits of a process.

    Args:
        kind: Resource kind.
        pid: Target process; None means the calling process.

    Raises:
        NoSuchProcess: pid does not exist.
        LimitPermissionError: reading another user's process is not permitted.
    """
    kind = RlimitKind(kind)
    try:
        if pid is None:
            pair = resource.getrlimit(kind.resource)
        else:
            pair = resource.prlimit(pid, kind.resource)
    except ProcessLookupError:
        raise NoSuchProcess(f"no such process: {pid}") from None
    except PermissionError as e:
        raise LimitPermissionError(f"reading {kind.value} of pid {pid} requires privilege: {e}") from None
    return RlimitValue.from_kernel(pair)


def set_rlimit(kind: RlimitKind, hard: LimitNumber, soft: Optional[LimitNumber] = None,
               pid: Optional[int] = None) -> RlimitValue:
    """
    Set the limits of a process.

    Args:
        kind: Resource kind.
        hard: New hard limit.
        soft: New soft limit; defaults to hard.
        pid: Target process; None means the calling process.

    Returns:
        The previous value.

    Raises:
        LimitError: invalid values (negative, soft above hard).
        LimitPermissionError: an unprivileged caller tried to raise the hard limit.
        NoSuchProcess: pid does not exist.
    """
    kind = RlimitKind(kind)
    new = RlimitValue.of(hard, soft)
    current = get_rlimit(kind, pid)
    if new.hard > current.hard and not _is_privileged():
        raise LimitPermissionError(
            f"raising the hard {kind.value} limit from {format_limit(current.hard)} "
            f"to {format_limit(new.hard)} requires privilege"
        )

    try:
        if hasattr(resource, "prlimit"):
            previous = RlimitValue.from_kernel(resource.prlimit(pid or 0, kind.resource, new.to_kernel()))
        else:
            if pid is not None and pid != os.getpid():
                raise LimitError("setting limits of another process needs prlimit support")
            previous = current
            resource.setrlimit(kind.resource, new.to_kernel())
    except ProcessLookupError:
        raise NoSuchProcess(f"no such process: {pid}") from None
    except PermissionError as e:
        raise LimitPermissionError(f"setting {kind.value} to {new} requires privilege: {e}") from None
    except ValueError as e:
        raise LimitError(f"invalid {kind.value} limit {new}: {e}") from None
    logger.debug(f"RLIMIT_{kind.value}: {previous} -> {new}")
    return previous


def apply_rlimits(limits: Dict[RlimitKind, RlimitValue], skip: Iterable[RlimitKind] = ()) -> Dict[RlimitKind, RlimitValue]:
    """Set several limits on the calling process; returns the previous values."""
    skipped = set(skip)
    previous = {}
    for kind, value in limits.items():
        if kind in skipped:
            continue
        previous[kind] = set_rlimit(kind, value.hard, value.soft)
    return previous


def parse_limit_value(kind: RlimitKind, text: str) -> LimitNumber:
    """
    Parse a single limit value.

    Accepts integers, 'unlimited'/'inf'/'infinity', and K/M/G binary suffixes
    for byte kinds ("10M" is 10485760).

    Raises:
        LimitError: malformed value, or a suffix on a non-byte kind.
    """
    kind = RlimitKind(kind)
    cleaned = text.strip()
    if cleaned.lower() in ("unlimited", "inf", "infinity"):
        return INFINITY
    match = _VALUE_RE.match(cleaned)
    if match is None:
        raise LimitError(f"invalid {kind.value} value '{text}'")
    number, suffix = int(match.group(1)), match.group(2).upper()
    if (suffix or cleaned[-1:].upper() == "B") and kind.unit != LimitUnit.BYTES:
        raise LimitError(f"size suffixes apply to byte limits only, not {kind.value}")
    return number * _SUFFIXES[suffix]


def parse_rlimit_spec(text: str) -> Tuple[RlimitKind, RlimitValue]:
    """
    Parse 'KIND=SOFT[:HARD]' as given on the command line.

    A single value sets both soft and hard limits.
    """
    if "=" not in text:
        raise LimitError(f"expected KIND=SOFT[:HARD], got '{text}'")
    name, _, values = text.partition("=")
    kind = RlimitKind.parse(name)
    soft_text, _, hard_text = values.partition(":")
    soft = parse_limit_value(kind, soft_text)
    hard = parse_limit_value(kind, hard_text) if hard_text else soft
    return kind, RlimitValue(soft=soft, hard=hard)


@dataclass(frozen=True)
class LimitRow:
    kind: RlimitKind
    unit: LimitUnit
    value: RlimitValue


def limits_table(pid: Optional[int] = None) -> List[LimitRow]:
    """All fourteen limits of a process, in kind order."""
    return [LimitRow(kind, kind.unit, get_rlimit(kind, pid)) for kind in RlimitKind]
