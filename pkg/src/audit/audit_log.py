"""
Append-only audit log of access denials.
Lines are written with one os.write per record on an O_APPEND descriptor.
"""

import logging
import os
import sys
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

from src.audit.record import AuditRecord
from src.errors import AuditFormatError

logger = logging.getLogger(__name__)

AUDIT_LOG_ENV = "ARMORCAGE_AUDIT_LOG"


@dataclass(frozen=True)
class LogDiagnostic:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


class AuditLog:
    """
    Audit sink shared by concurrent evaluations.
    Thread-safe; each record is a single write, so lines never interleave
    across processes appending to the same file either.
    """

    def __init__(self, path: Optional[str] = None):
        """
        Initialize the audit log.

        Args:
            path: Log file, created when missing; None writes to standard error.
        """
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self.written = 0
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    @classmethod
    def from_environment(cls, path: Optional[str] = None) -> "AuditLog":
        """An explicit path wins over ARMORCAGE_AUDIT_LOG."""
        return cls(path or os.environ.get(AUDIT_LOG_ENV) or None)

    @contextmanager
    def _get_descriptor(self):
        """Open the sink for appending, or borrow standard error."""
        if self.path is None:
            yield sys.stderr.fileno()
            return
        fd = os.open(str(self.path), os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o600)
        try:
            yield fd
        finally:
            os.close(fd)

    def append_record(self, record: AuditRecord):
        """
        Append exactly one line for record.

        Raises:
            OSError: the sink cannot be written.
        """
        self.append_lines([record.to_line()])

    def append_lines(self, lines: Iterable[str]):
        """Append already formatted record lines, one write each."""
        lines = [line.rstrip("\n") for line in lines]
        if not lines:
            return
        with self._lock:
            with self._get_descriptor() as fd:
                for line in lines:
                    data = (line + "\n").encode("utf-8")
                    written = os.write(fd, data)
                    if written != len(data):
                        raise OSError(f"short write to audit log: {written} of {len(data)} bytes")
                    self.written += 1
        logger.debug(f"Appended {len(lines)} audit record(s) to {self.path or 'stderr'}")

    def read(self) -> Tuple[List[AuditRecord], List[LogDiagnostic]]:
        if self.path is None or not self.path.exists():
            return [], []
        return parse_log(self.path.read_text(encoding="utf-8"))


def append_record(log: AuditLog, record: AuditRecord):
    log.append_record(record)


def parse_log(text: str) -> Tuple[List[AuditRecord], List[LogDiagnostic]]:
    """
    Parse audit log text.

    Malformed lines become diagnostics carrying their line number; parsing
    continues with the next line.

    Returns:
        (records, diagnostics)
    """
    records: List[AuditRecord] = []
    diagnostics: List[LogDiagnostic] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            records.append(AuditRecord.from_line(line.rstrip("\r")))
        except AuditFormatError as e:
            diagnostics.append(LogDiagnostic(lineno, str(e)))
    if diagnostics:
        logger.warning(f"Skipped {len(diagnostics)} malformed audit line(s)")
    return records, diagnostics
