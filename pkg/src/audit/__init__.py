from src.audit.audit_log import AuditLog, LogDiagnostic, append_record, parse_log
from src.audit.record import ALLOWED, DENIED, AuditRecord

__all__ = ['AuditLog', 'LogDiagnostic', 'append_record', 'parse_log', 'ALLOWED', 'DENIED', 'AuditRecord']
