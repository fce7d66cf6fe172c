"""Task steps and scripts. Every step validates its parameters on construction."""

import re
import shlex
from dataclasses import dataclass, field
from typing import ClassVar, Optional, Tuple

from src.errors import TaskValidationError

DEFAULT_SCAN_SIZE_CAP = 1_000_000


class TaskStep:
    """Base class of all steps. ``op`` is the keyword used in task files."""
    op: ClassVar[str] = ""

    def arguments(self) -> Tuple[str, ...]:
        raise NotImplementedError

    def to_line(self) -> str:
        return " ".join([self.op] + [shlex.quote(argument) for argument in self.arguments()])

    def __str__(self) -> str:
        return self.to_line()


def _require_path(path: str, op: str):
    if not isinstance(path, str) or not path:
        raise TaskValidationError(f"{op}: path must be a nonempty string")
    if not (path.startswith("/") or path == "~" or path.startswith("~/")):
        raise TaskValidationError(f"{op}: path must be absolute or start with '~/': {path}")


def _require_positive(value, name: str, op: str):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value <= 0:
        raise TaskValidationError(f"{op}: {name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class ReadFile(TaskStep):
    op: ClassVar[str] = "read"
    path: str

    def __post_init__(self):
        _require_path(self.path, self.op)

    def arguments(self):
        return (self.path,)


@dataclass(frozen=True)
class WriteFile(TaskStep):
    op: ClassVar[str] = "write"
    path: str
    data: bytes = b""

    def __post_init__(self):
        _require_path(self.path, self.op)
        if not isinstance(self.data, bytes):
            raise TaskValidationError(f"{self.op}: data must be bytes")

    def arguments(self):
        return (self.path, self.data.hex())


@dataclass(frozen=True)
class ListDir(TaskStep):
    op: ClassVar[str] = "list"
    path: str

    def __post_init__(self):
        _require_path(self.path, self.op)

    def arguments(self):
        return (self.path,)


@dataclass(frozen=True)
class Exec(TaskStep):
    op: ClassVar[str] = "exec"
    path: str
    args: Tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.path, str) or not self.path.startswith("/"):
            raise TaskValidationError(f"{self.op}: program path must be absolute: {self.path!r}")
        object.__setattr__(self, "args", tuple(str(arg) for arg in self.args))

    def arguments(self):
        return (self.path,) + self.args


@dataclass(frozen=True)
class AllocBytes(TaskStep):
    op: ClassVar[str] = "alloc"
    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int):
            raise TaskValidationError(f"{self.op}: byte count must be an integer")
        _require_positive(self.n, "byte count", self.op)

    def arguments(self):
        return (str(self.n),)


@dataclass(frozen=True)
class BurnCpu(TaskStep):
    op: ClassVar[str] = "burn"
    seconds: float

    def __post_init__(self):
        _require_positive(self.seconds, "seconds", self.op)

    def arguments(self):
        return (f"{self.seconds:g}",)


@dataclass(frozen=True)
class ForkN(TaskStep):
    """Fork ``count`` children that hold briefly; None is the self-replicating fork bomb."""
    op: ClassVar[str] = "forkn"
    count: Optional[int] = None

    def __post_init__(self):
        if self.count is not None:
            if isinstance(self.count, bool) or not isinstance(self.count, int):
                raise TaskValidationError(f"{self.op}: count must be an integer or 'unbounded'")
            _require_positive(self.count, "count", self.op)

    @property
    def unbounded(self) -> bool:
        return self.count is None

    def arguments(self):
        return ("unbounded" if self.count is None else str(self.count),)


@dataclass(frozen=True)
class Sleep(TaskStep):
    op: ClassVar[str] = "sleep"
    seconds: float

    def __post_init__(self):
        _require_positive(self.seconds, "seconds", self.op)

    def arguments(self):
        return (f"{self.seconds:g}",)


@dataclass(frozen=True)
class ScanPattern(TaskStep):
    op: ClassVar[str] = "scan"
    root: str
    regex: str
    size_cap: int = DEFAULT_SCAN_SIZE_CAP

    def __post_init__(self):
        _require_path(self.root, self.op)
        try:
            re.compile(self.regex)
        except (re.error, TypeError) as e:
            raise TaskValidationError(f"{self.op}: invalid regex {self.regex!r}: {e}") from None
        if isinstance(self.size_cap, bool) or not isinstance(self.size_cap, int):
            raise TaskValidationError(f"{self.op}: size cap must be an integer")
        _require_positive(self.size_cap, "size cap", self.op)

    def arguments(self):
        return (self.root, self.regex, str(self.size_cap))


@dataclass(frozen=True)
class Emit(TaskStep):
    op: ClassVar[str] = "emit"
    data: bytes

    def __post_init__(self):
        if not isinstance(self.data, bytes):
            raise TaskValidationError(f"{self.op}: data must be bytes")

    def arguments(self):
        return (self.data.hex(),)


STEP_TYPES = {step.op: step for step in (ReadFile, WriteFile, ListDir, Exec, AllocBytes, BurnCpu, ForkN, Sleep, ScanPattern, Emit)}


@dataclass(frozen=True)
class TaskScript:
    steps: Tuple[TaskStep, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise TaskValidationError("a task script needs at least one step")
        for step in self.steps:
            if not isinstance(step, TaskStep):
                raise TaskValidationError(f"not a task step: {step!r}")

    def __len__(self) -> int:
        return len(self.steps)

    def to_text(self) -> str:
        return "\n".join(step.to_line() for step in self.steps) + "\n"
