"""Subject contexts and the profile / hat transitions between them."""

import hmac
import logging
from dataclasses import dataclass, replace
from typing import Any, Optional

from src.errors import HatError, HatTokenMismatch, ProfileNotFound, TransitionDenied
from src.policy.profile import Profile, ProfileSet

logger = logging.getLogger(__name__)

UNCONFINED_NAME = "unconfined"


@dataclass(frozen=True)
class SubjectContext:
    """
    Security context of one job.

    Args:
        profile: Profile name, or None when unconfined.
        active_hat: Hat currently entered, if any.
        hat_token: Secret required to leave the hat.
        poisoned: Set after a wrong revert token; every decision then denies.
    """
    profile: Optional[str] = None
    active_hat: Optional[str] = None
    hat_token: Any = None
    poisoned: bool = False

    def __post_init__(self):
        if self.active_hat is not None and self.hat_token is None:
            raise HatError("an active hat requires a token")
        if self.active_hat is not None and self.profile is None:
            raise HatError("an unconfined context cannot be in a hat")

    @property
    def is_unconfined(self) -> bool:
        return self.profile is None

    @property
    def label(self) -> str:
        if self.profile is None:
            return UNCONFINED_NAME
        if self.active_hat:
            return f"{self.profile}^{self.active_hat}"
        return self.profile

    def __repr__(self) -> str:
        # the token stays out of logs and tracebacks
        token = "set" if self.hat_token is not None else None
        return (f"SubjectContext(profile={self.profile!r}, active_hat={self.active_hat!r}, "
                f"hat_token={token}, poisoned={self.poisoned})")


UNCONFINED = SubjectContext()


def confined(profile: str) -> SubjectContext:
    return SubjectContext(profile=profile)


def active_scope(ctx: SubjectContext, profile_set: ProfileSet) -> Profile:
    """The profile whose rules decide for ctx: the active hat, else the profile itself."""
    profile = profile_set.get(ctx.profile)
    if ctx.active_hat is None:
        return profile
    try:
        return profile.hats[ctx.active_hat]
    except KeyError:
        raise HatError(f"hat {ctx.active_hat} no longer exists in {profile.name}") from None


def change_profile(ctx: SubjectContext, profile_set: ProfileSet, target: str) -> SubjectContext:
    """
    Permanently move ctx to another profile.

    Allowed from an unconfined context, or when the current scope carries a
    'change_profile -> target' directive. The result has no active hat.

    Raises:
        ProfileNotFound: target is not loaded.
        TransitionDenied: no directive permits the move, or ctx is poisoned.
    """
    if target not in profile_set:
        raise ProfileNotFound(target)
    if ctx.is_unconfined:
        logger.info(f"Changing profile from {UNCONFINED_NAME} to {target}")
        return SubjectContext(profile=target)
    if ctx.poisoned:
        raise TransitionDenied(ctx.label, target)

    profile = profile_set.get(ctx.profile)
    allowed = set(profile.transitions)
    if ctx.active_hat is not None:
        allowed.update(active_scope(ctx, profile_set).transitions)
    if target not in allowed:
        raise TransitionDenied(ctx.profile, target)
    logger.info(f"Changing profile from {ctx.label} to {target}")
    return SubjectContext(profile=target)


def change_hat(ctx: SubjectContext, profile_set: ProfileSet, hat: str, token: Any) -> SubjectContext:
    """
    Enter a hat of the current profile, guarded by token.

    Raises:
        HatError: ctx unconfined, poisoned or already in a hat; unknown hat; missing token.
    """
    if ctx.is_unconfined:
        raise HatError("change_hat requires a confined context")
    if ctx.poisoned:
        raise HatError("context is poisoned")
    if ctx.active_hat is not None:
        raise HatError(f"already in hat {ctx.active_hat}")
    if token is None:
        raise HatError("change_hat requires a token")
    profile = profile_set.get(ctx.profile)
    if hat not in profile.hats:
        raise HatError(f"unknown hat {hat} in profile {profile.name}")
    logger.info(f"Entering hat {profile.name}^{hat}")
    return replace(ctx, active_hat=hat, hat_token=token)


def revert_hat(ctx: SubjectContext, token: Any) -> SubjectContext:
    """
    Leave the active hat.

    The token comparison is constant time. A wrong token poisons the
    context; the poisoned context travels on the raised exception.

    Raises:
        HatError: no active hat.
        HatTokenMismatch: wrong token.
    """
    if ctx.active_hat is None:
        raise HatError("revert_hat without an active hat")
    if ctx.poisoned:
        raise HatTokenMismatch(ctx)
    if not hmac.compare_digest(_token_bytes(token), _token_bytes(ctx.hat_token)):
        poisoned = replace(ctx, poisoned=True)
        logger.warning(f"Hat token mismatch in {ctx.label}: context poisoned")
        raise HatTokenMismatch(poisoned)
    logger.info(f"Reverting hat {ctx.label}")
    return replace(ctx, active_hat=None, hat_token=None)


def _token_bytes(token: Any) -> bytes:
    if isinstance(token, bytes):
        return token
    return str(token).encode("utf-8")
