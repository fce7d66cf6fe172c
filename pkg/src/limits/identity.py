import grp
import logging
import os
import pwd
from dataclasses import dataclass
from typing import Optional, Union

from src.errors import PrivilegeRequired, UnknownIdentity

logger = logging.getLogger(__name__)

IdValue = Union[int, str]


@dataclass(frozen=True)
class Identity:
    """
    Target credentials. Either field may be a numeric id or a name; names
    are resolved through the user and group databases when applied.
    """
    uid: Optional[IdValue] = None
    gid: Optional[IdValue] = None

    @classmethod
    def parse(cls, uid: Optional[str] = None, gid: Optional[str] = None) -> "Identity":
        """Build from command-line text: digits become ids, anything else a name."""
        def convert(text: Optional[str]) -> Optional[IdValue]:
            if text is None:
                return None
            return int(text) if text.isdigit() else text
        return cls(uid=convert(uid), gid=convert(gid))

    @property
    def user_name(self) -> Optional[str]:
        if isinstance(self.uid, str):
            return self.uid
        if self.uid is None:
            return None
        try:
            return pwd.getpwuid(self.uid).pw_name
        except KeyError:
            return None

    def __str__(self) -> str:
        return f"uid={self.uid} gid={self.gid}"


def get_identity() -> Identity:
    """Effective uid and gid of the calling process."""
    return Identity(uid=os.geteuid(), gid=os.getegid())


def resolve_uid(value: IdValue) -> int:
    if isinstance(value, int):
        if value < 0:
            raise UnknownIdentity(f"invalid uid {value}")
        return value
    try:
        return pwd.getpwnam(value).pw_uid
    except KeyError:
        raise UnknownIdentity(f"unknown user: {value}") from None


def resolve_gid(value: IdValue) -> int:
    if isinstance(value, int):
        if value < 0:
            raise UnknownIdentity(f"invalid gid {value}")
        return value
    try:
        return grp.getgrnam(value).gr_gid
    except KeyError:
        raise UnknownIdentity(f"unknown group: {value}") from None


def set_identity(identity: Identity) -> Identity:
    """
    Switch the process credentials: gid, then supplementary groups, then uid.

    A uid without a gid switches to the user's primary group when the user
    database knows it.

    Returns:
        The previous identity.

    Raises:
        UnknownIdentity: a name does not resolve.
        PrivilegeRequired: the caller is not root; nothing was changed.
    """
    uid = resolve_uid(identity.uid) if identity.uid is not None else None
    gid = resolve_gid(identity.gid) if identity.gid is not None else None
    entry = None
    if uid is not None:
        try:
            entry = pwd.getpwuid(uid)
        except KeyError:
            entry = None
        if gid is None and entry is not None:
            gid = entry.pw_gid

    if os.geteuid() != 0:
        raise PrivilegeRequired("setuid/setgid")

    previous = get_identity()
    if gid is not None:
        os.setgid(gid)
    if uid is not None:
        if entry is not None:
            os.initgroups(entry.pw_name, gid if gid is not None else entry.pw_gid)
        else:
            os.setgroups([gid] if gid is not None else [])
        os.setuid(uid)
    elif gid is not None:
        os.setgroups([gid])
    logger.info(f"Identity {previous} -> uid={uid} gid={gid}")
    return previous
