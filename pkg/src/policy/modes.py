"""Access mode flags: r, w, m and the four exec modes px, cs, ix, ux."""

import enum
from dataclasses import dataclass
from typing import Iterator, Optional

from src.errors import ModeError


class AccessMode(enum.Flag):
    R = enum.auto()
    W = enum.auto()
    M = enum.auto()
    PX = enum.auto()
    CS = enum.auto()
    IX = enum.auto()
    UX = enum.auto()


EXEC_MODES = AccessMode.PX | AccessMode.CS | AccessMode.IX | AccessMode.UX
NO_MODES = AccessMode(0)

_SIMPLE_LETTERS = {"r": AccessMode.R, "w": AccessMode.W, "m": AccessMode.M}
_EXEC_TOKENS = {"px": AccessMode.PX, "cs": AccessMode.CS, "ix": AccessMode.IX, "ux": AccessMode.UX}
# Canonical rendering order: r, w, m, then the exec mode
_CANONICAL = [
    (AccessMode.R, "r"),
    (AccessMode.W, "w"),
    (AccessMode.M, "m"),
    (AccessMode.PX, "px"),
    (AccessMode.CS, "cs"),
    (AccessMode.IX, "ix"),
    (AccessMode.UX, "ux"),
]


@dataclass(frozen=True)
class AccessModeSet:
    """
    Immutable set of access modes.

    At most one exec mode may be present; the empty set is allowed and
    grants nothing.
    """
    flags: AccessMode = NO_MODES

    def __post_init__(self):
        exec_bits = [mode for mode in (self.flags & EXEC_MODES)]
        if len(exec_bits) > 1:
            names = "".join(token for bit, token in _CANONICAL if bit in exec_bits)
            raise ModeError(f"conflicting exec modes: {names}")

    @classmethod
    def parse(cls, text: str) -> "AccessModeSet":
        """
        Parse a profile mode string such as "rix" or "mrwix".

        Letters may come in any order and repeat. Raises ModeError naming
        the first unknown character; ``offset`` is its index in ``text``.
        """
        flags = NO_MODES
        i = 0
        while i < len(text):
            char = text[i]
            if char in _SIMPLE_LETTERS:
                flags |= _SIMPLE_LETTERS[char]
                i += 1
                continue
            pair = text[i:i + 2]
            if pair in _EXEC_TOKENS:
                flags |= _EXEC_TOKENS[pair]
                i += 2
                continue
            raise ModeError(f"unknown mode '{char}'", offset=i)
        return cls(flags)

    @classmethod
    def of(cls, *modes: AccessMode) -> "AccessModeSet":
        flags = NO_MODES
        for mode in modes:
            flags |= mode
        return cls(flags)

    @property
    def exec_mode(self) -> Optional[AccessMode]:
        bits = self.flags & EXEC_MODES
        return bits if bits else None

    def canonical(self) -> str:
        return "".join(token for bit, token in _CANONICAL if bit in self.flags)

    def union(self, other: "AccessModeSet") -> "AccessModeSet":
        return AccessModeSet(self.flags | other.flags)

    def difference(self, other: "AccessModeSet") -> "AccessModeSet":
        return AccessModeSet(self.flags & ~other.flags)

    def issubset(self, other: "AccessModeSet") -> bool:
        return (self.flags & ~other.flags) == NO_MODES

    def __contains__(self, mode: AccessMode) -> bool:
        return mode != NO_MODES and (self.flags & mode) == mode

    def __iter__(self) -> Iterator[AccessMode]:
        return (bit for bit, _ in _CANONICAL if bit in self.flags)

    def __bool__(self) -> bool:
        return self.flags != NO_MODES

    def __str__(self) -> str:
        return self.canonical()

