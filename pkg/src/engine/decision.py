"""
Access decisions over a ProfileSet.

Every rule whose pattern matches the requested path contributes its modes;
a request is allowed when the union covers it. Nothing matching means deny.
"""

import enum
import logging
import posixpath
import secrets
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

from src.audit.record import ALLOWED, DENIED, AuditRecord
from src.engine.context import SubjectContext, UNCONFINED, active_scope
from src.errors import ExecTransitionError, ProfileNotFound
from src.policy.modes import AccessMode, AccessModeSet, EXEC_MODES, NO_MODES
from src.policy.pattern import normalize_path
from src.policy.profile import FileRule, ProfileMode, ProfileSet

logger = logging.getLogger(__name__)


class Operation(str, enum.Enum):
    READ = "read"
    WRITE = "write"
    MMAP = "mmap"
    EXEC = "exec"
    LIST = "list"


_DEFAULT_MODES = {
    Operation.READ: AccessMode.R,
    Operation.WRITE: AccessMode.W,
    Operation.MMAP: AccessMode.M,
    Operation.EXEC: AccessMode.IX,
    Operation.LIST: AccessMode.R,
}
_EXEC_ORDER = (AccessMode.PX, AccessMode.CS, AccessMode.IX, AccessMode.UX)


@dataclass(frozen=True)
class AccessRequest:
    path: str
    requested: AccessModeSet
    operation: Operation = Operation.READ

    def __post_init__(self):
        if not self.requested:
            raise ValueError("an access request needs at least one mode")
        if self.operation == Operation.LIST:
            if not self.path.endswith("/") or self.requested != AccessModeSet(AccessMode.R):
                raise ValueError("list requests are 'r' on a path ending in '/'")
        if self.operation == Operation.EXEC and self.requested.exec_mode is None:
            raise ValueError("exec requests need an exec mode")

    @classmethod
    def of(cls, operation: Union[Operation, str], path: str,
           modes: Optional[AccessModeSet] = None) -> "AccessRequest":
        """
        Build a normalized request.

        Args:
            operation: Request kind; its default mode is used when modes is None.
            path: Absolute path; a 'list' request gets a trailing '/'.
            modes: Explicit mode set.
        """
        operation = Operation(operation)
        normalized = normalize_path(path)
        if operation == Operation.LIST and not normalized.endswith("/"):
            normalized += "/"
        return cls(normalized, modes or AccessModeSet(_DEFAULT_MODES[operation]), operation)


@dataclass(frozen=True)
class Decision:
    allowed: bool
    effective: bool
    matched: Tuple[FileRule, ...] = ()
    granted: AccessMode = NO_MODES
    missing: AccessMode = NO_MODES
    audit: Optional[AuditRecord] = field(default=None, compare=False)

    @property
    def missing_modes(self) -> str:
        """Canonical text of the missing modes; exec requirements read as 'ix'."""
        flags = self.missing
        if flags & EXEC_MODES:
            flags = (flags & ~EXEC_MODES) | AccessMode.IX
        return AccessModeSet(flags).canonical()

    def __bool__(self) -> bool:
        return self.effective


def check_access(ctx: SubjectContext, profile_set: ProfileSet, request: AccessRequest) -> Decision:
    """
    Decide one request.

    Poisoned contexts are denied outright; unconfined contexts and
    disabled profiles are allowed without matching. In complain mode the
    decision is computed normally but enforced as allowed.

    Returns:
        Decision carrying an AuditRecord whenever the request is not allowed.
    """
    if ctx.poisoned:
        return _deny(ctx, request, NO_MODES, request.requested.flags, (), enforce=True)
    if ctx.is_unconfined:
        return Decision(allowed=True, effective=True)

    profile = profile_set.get(ctx.profile)
    if profile.mode == ProfileMode.DISABLED:
        return Decision(allowed=True, effective=True)

    scope = active_scope(ctx, profile_set)
    granted = NO_MODES
    matched: List[FileRule] = []
    for rule in scope.effective_rules:
        if rule.pattern.matches(request.path):
            granted |= rule.modes.flags
            matched.append(rule)

    needed = request.requested.flags
    if needed & EXEC_MODES and granted & EXEC_MODES:
        needed &= ~EXEC_MODES
    missing = needed & ~granted
    if missing == NO_MODES:
        return Decision(allowed=True, effective=True, matched=tuple(matched), granted=granted)
    return _deny(ctx, request, granted, missing, tuple(matched), enforce=profile.mode == ProfileMode.ENFORCE)


def _deny(ctx: SubjectContext, request: AccessRequest, granted: AccessMode, missing: AccessMode,
          matched: Tuple[FileRule, ...], enforce: bool) -> Decision:
    record = AuditRecord(
        profile=ctx.profile or "unconfined",
        hat=ctx.active_hat,
        operation=request.operation.value,
        path=request.path,
        requested=request.requested,
        decision=DENIED,
        effective=DENIED if enforce else ALLOWED,
    )
    if not enforce:
        logger.warning(f"Complain mode: {ctx.label} {request.operation.value} {request.path} would be denied")
    else:
        logger.debug(f"Denied: {ctx.label} {request.operation.value} {request.path}")
    return Decision(
        allowed=False,
        effective=not enforce,
        matched=matched,
        granted=granted,
        missing=missing,
        audit=record,
    )


def check_capability(ctx: SubjectContext, profile_set: ProfileSet, name: str) -> bool:
    """Effective capability decision, with the same default-deny and mode rules as files."""
    if ctx.poisoned:
        return False
    if ctx.is_unconfined:
        return True
    profile = profile_set.get(ctx.profile)
    if profile.mode == ProfileMode.DISABLED:
        return True
    scope = active_scope(ctx, profile_set)
    if any(capability.name == name for capability in scope.effective_capabilities):
        return True
    if profile.mode == ProfileMode.COMPLAIN:
        logger.warning(f"Complain mode: {ctx.label} capability {name} would be denied")
        return True
    return False


def exec_transition(ctx: SubjectContext, profile_set: ProfileSet, exec_path: str) -> SubjectContext:
    """
    Context after executing exec_path.

    ix keeps the context, px moves to the attached profile matching the path,
    cs enters the hat named by the last path segment under a fresh random
    token, ux leaves confinement.

    Raises:
        ExecTransitionError: no exec permission, conflicting exec modes,
            missing or ambiguous attached profile, or unknown hat.
    """
    if ctx.is_unconfined:
        return ctx
    if ctx.poisoned:
        raise ExecTransitionError(f"{ctx.label} is poisoned")
    profile = profile_set.get(ctx.profile)
    if profile.mode == ProfileMode.DISABLED:
        return ctx

    path = normalize_path(exec_path)
    scope = active_scope(ctx, profile_set)
    exec_bits = NO_MODES
    for rule in scope.effective_rules:
        if rule.modes.exec_mode is not None and rule.pattern.matches(path):
            exec_bits |= rule.modes.exec_mode

    modes = [mode for mode in _EXEC_ORDER if mode & exec_bits]
    if not modes:
        if profile.mode == ProfileMode.COMPLAIN:
            return ctx
        raise ExecTransitionError(f"{ctx.label} has no exec permission for {path}")
    if len(modes) > 1:
        names = "".join(str(AccessModeSet(m)) for m in modes)
        raise ExecTransitionError(f"conflicting exec modes {names} for {path} in {ctx.label}")

    mode = modes[0]
    if mode == AccessMode.IX:
        return ctx
    if mode == AccessMode.UX:
        logger.warning(f"Unconfined exec of {path} from {ctx.label} (dangerous)")
        return UNCONFINED
    if mode == AccessMode.PX:
        return _attached_context(profile_set, path)

    hat = posixpath.basename(path.rstrip("/"))
    if ctx.active_hat is not None:
        raise ExecTransitionError(f"cannot enter hat {hat} from hat {ctx.active_hat}")
    if hat not in profile.hats:
        raise ExecTransitionError(f"no hat {hat} in profile {profile.name} for {path}")
    return SubjectContext(profile=profile.name, active_hat=hat, hat_token=secrets.randbits(64))


def _attached_context(profile_set: ProfileSet, path: str) -> SubjectContext:
    candidates = profile_set.find_attachments(path)
    if not candidates:
        raise ExecTransitionError(f"no profile attached to {path}")
    if len(candidates) > 1:
        names = ", ".join(sorted(profile.name for profile in candidates))
        raise ExecTransitionError(f"ambiguous attachment for {path}: {names}")
    return SubjectContext(profile=candidates[0].name)


def set_mode(profile_set: ProfileSet, name: str, mode: Union[ProfileMode, str]) -> ProfileSet:
    """
    Return a new set with the named profile switched to mode.

    Raises:
        ProfileNotFound: name is not loaded.
        ValueError: mode is not enforce, complain or disabled.
    """
    if name not in profile_set:
        raise ProfileNotFound(name)
    mode = ProfileMode(mode)
    logger.info(f"Setting {name} to {mode.value} mode")
    return profile_set.with_profile(profile_set.get(name).with_mode(mode))
