"""Exception hierarchy shared by every armorcage package."""

from typing import Optional


class ArmorcageError(Exception):
    """Base class for all armorcage errors."""


# Policy model

class PatternError(ArmorcageError, ValueError):
    """A path pattern cannot be compiled."""


class PathError(ArmorcageError, ValueError):
    """A path cannot be normalized."""


class ModeError(ArmorcageError, ValueError):
    """An access mode string or combination is invalid."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(message)
        self.offset = offset


# Profile parser

class ParseError(ArmorcageError):
    """Syntax or resolution error in a policy file."""

    def __init__(self, file: str, line: int, column: int, message: str):
        self.file = str(file)
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"{self.file}:{line}:{column}: {message}")


class ProfileNotFound(ArmorcageError, KeyError):
    """A profile name is not part of the loaded set."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown profile: {self.name}"


# Policy engine

class TransitionDenied(ArmorcageError, PermissionError):
    """change_profile is not permitted from the current profile."""

    def __init__(self, source: str, target: str):
        self.source = source
        self.target = target
        super().__init__(
            f"Failed to change profile from: {source} to: {target}. "
            f"Note that this is only allowed if the current profile has a "
            f'directive "change_profile -> {target}".'
        )


class HatError(ArmorcageError):
    """change_hat / revert_hat called in the wrong state."""


class HatTokenMismatch(HatError, PermissionError):
    """revert_hat was given the wrong token; the context is now poisoned."""

    def __init__(self, context):
        super().__init__("hat token mismatch: security violation, context poisoned")
        self.context = context


class ExecTransitionError(ArmorcageError):
    """An exec transition cannot be resolved."""


# OS limits

class LimitError(ArmorcageError, ValueError):
    """Invalid resource-limit value."""


class LimitPermissionError(ArmorcageError, PermissionError):
    """The kernel refuses the requested limit change."""


class NoSuchProcess(ArmorcageError, ProcessLookupError):
    """The target pid does not exist."""


class PrivilegeRequired(ArmorcageError, PermissionError):
    """Operation requires superuser privileges."""

    def __init__(self, operation: str):
        super().__init__(f"{operation} requires privilege")
        self.operation = operation


class PriorityRangeError(ArmorcageError, ValueError):
    """Niceness outside [-20, 19]."""


class PriorityLoweringDenied(ArmorcageError, PermissionError):
    """Unprivileged attempt to raise scheduling priority."""

    def __init__(self, current: int, requested: int):
        super().__init__(
            "Failed to set priority. The caller attempted to lower a process "
            "priority, but did not have the required privilege. "
            f"(current niceness {current}, requested {requested})"
        )
        self.current = current
        self.requested = requested


class UnknownIdentity(ArmorcageError, LookupError):
    """User or group name not found in the system database."""


# Task runner

class TaskValidationError(ArmorcageError, ValueError):
    """A task script or step is malformed."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PolicyDenied(ArmorcageError, PermissionError):
    """A task step was denied by the policy engine."""

    def __init__(self, step: int, path: str, missing: str, operation: str = "read"):
        super().__init__(
            f"step {step}: {operation} {path} denied (missing modes: {missing or '-'})"
        )
        self.step = step
        self.path = path
        self.missing = missing
        self.operation = operation


class TaskError(ArmorcageError):
    """A task step failed for a non-policy reason."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class ForkFailure(TaskError):
    """fork() refused, usually by RLIMIT_NPROC."""


class AllocationFailure(TaskError):
    """Memory allocation refused, usually by RLIMIT_AS."""


# Audit

class AuditFormatError(ArmorcageError, ValueError):
    """An audit log line cannot be parsed."""


# Supervisor

class SetupError(ArmorcageError):
    """A sandbox setup step failed before the job started."""

    def __init__(self, step: str, message: str):
        super().__init__(f"{step}: {message}")
        self.step = step
