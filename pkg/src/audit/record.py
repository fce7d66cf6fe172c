from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from src.errors import AuditFormatError, ModeError
from src.policy.modes import AccessModeSet

ALLOWED = "allowed"
DENIED = "denied"
NO_HAT = "-"
FIELD_COUNT = 8

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


@dataclass(frozen=True)
class AuditRecord:
    """
    One access decision worth logging.

    Line format (tab-separated, one record per line):
        timestamp profile hat operation path requested decision effective
    with "-" for an absent hat and modes in canonical order.
    """
    profile: str
    hat: Optional[str]
    operation: str
    path: str
    requested: AccessModeSet
    decision: str = DENIED
    effective: str = DENIED
    timestamp: str = field(default_factory=utc_timestamp, compare=False)

    def __post_init__(self):
        for name in ("decision", "effective"):
            if getattr(self, name) not in (ALLOWED, DENIED):
                raise AuditFormatError(f"{name} must be '{ALLOWED}' or '{DENIED}'")
        if self.hat == NO_HAT:
            raise AuditFormatError("hat name '-' is reserved")

    @property
    def is_complain(self) -> bool:
        return self.decision == DENIED and self.effective == ALLOWED

    def to_line(self) -> str:
        fields = [
            self.timestamp,
            _escape(self.profile),
            _escape(self.hat) if self.hat else NO_HAT,
            self.operation,
            _escape(self.path),
            self.requested.canonical(),
            self.decision,
            self.effective,
        ]
        return "\t".join(fields)

    @classmethod
    def from_line(cls, line: str) -> "AuditRecord":
        """
        Parse one log line (without its newline).

        Raises:
            AuditFormatError: wrong field count, bad timestamp, modes or decision.
        """
        fields = line.split("\t")
        if len(fields) != FIELD_COUNT:
            raise AuditFormatError(f"expected {FIELD_COUNT} tab-separated fields, found {len(fields)}")
        timestamp, profile, hat, operation, path, requested, decision, effective = fields
        try:
            datetime.fromisoformat(timestamp)
        except ValueError:
            raise AuditFormatError(f"invalid timestamp '{timestamp}'") from None
        try:
            modes = AccessModeSet.parse(requested)
        except ModeError as e:
            raise AuditFormatError(f"invalid modes '{requested}': {e}") from None
        if not modes:
            raise AuditFormatError("empty requested modes")
        if not profile or not path.startswith("/"):
            raise AuditFormatError("missing profile or absolute path")
        return cls(
            profile=_unescape(profile),
            hat=None if hat == NO_HAT else _unescape(hat),
            operation=operation,
            path=_unescape(path),
            requested=modes,
            decision=decision,
            effective=effective,
            timestamp=timestamp,
        )

    def __str__(self) -> str:
        return self.to_line()


def _escape(text: str) -> str:
    return "".join(_ESCAPES.get(char, char) for char in text)


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        char = text[i]
        if char == "\\":
            if i + 1 >= len(text) or text[i + 1] not in _UNESCAPES:
                raise AuditFormatError(f"invalid escape in '{text}'")
            out.append(_UNESCAPES[text[i + 1]])
            i += 2
            continue
        out.append(char)
        i += 1
    return "".join(out)
