import threading

import pytest

from src.audit.audit_log import AUDIT_LOG_ENV, AuditLog, parse_log
from src.audit.record import ALLOWED, DENIED, AuditRecord
from src.errors import AuditFormatError
from src.policy.modes import AccessModeSet


def _record(path="/etc/passwd", hat=None, effective=DENIED, modes="r"):
    return AuditRecord(
        profile="r-base",
        hat=hat,
        operation="read",
        path=path,
        requested=AccessModeSet.parse(modes),
        decision=DENIED,
        effective=effective,
    )


def test_line_format():
    record = _record(hat="testhat", effective=ALLOWED, modes="wr")
    fields = record.to_line().split("\t")
    assert fields[1:] == ["r-base", "testhat", "read", "/etc/passwd", "rw", DENIED, ALLOWED]
    assert record.is_complain
    assert _record().to_line().split("\t")[2] == "-"


def test_line_escapes_control_characters():
    record = _record(path="/tmp/odd\tname\nwith\\slash")
    line = record.to_line()
    assert "\n" not in line
    assert len(line.split("\t")) == 8
    parsed = AuditRecord.from_line(line)
    assert parsed == record
    assert parsed.timestamp == record.timestamp


@pytest.mark.parametrize("line,fragment", [
    ("only\tthree\tfields", "expected 8"),
    ("yesterday\tp\t-\tread\t/a\tr\tdenied\tdenied", "invalid timestamp"),
    ("2024-01-01T00:00:00+00:00\tp\t-\tread\t/a\trq\tdenied\tdenied", "invalid modes"),
    ("2024-01-01T00:00:00+00:00\tp\t-\tread\t/a\t\tdenied\tdenied", "empty requested modes"),
    ("2024-01-01T00:00:00+00:00\tp\t-\tread\trelative\tr\tdenied\tdenied", "absolute path"),
    ("2024-01-01T00:00:00+00:00\tp\t-\tread\t/a\tr\tmaybe\tdenied", "decision"),
    ("2024-01-01T00:00:00+00:00\tp\t-\tread\t/a\\q\tr\tdenied\tdenied", "invalid escape"),
])
def test_from_line_rejects(line, fragment):
    with pytest.raises(AuditFormatError) as e:
        AuditRecord.from_line(line)
    assert fragment in str(e.value)


def test_reserved_hat_name():
    with pytest.raises(AuditFormatError):
        _record(hat="-")


def test_parse_log_reports_bad_lines():
    good = _record().to_line()
    text = "\n".join([good, "garbage", "", good, "a\tb"]) + "\n"
    records, diagnostics = parse_log(text)
    assert len(records) == 2
    assert [d.line for d in diagnostics] == [2, 5]
    assert str(diagnostics[0]).startswith("line 2: ")


def test_audit_log_append_and_read(tmp_path):
    log = AuditLog(str(tmp_path / "logs" / "audit.log"))
    assert log.read() == ([], [])
    log.append_record(_record())
    log.append_lines([_record(path="/etc/shadow").to_line() + "\n"])
    records, diagnostics = log.read()
    assert [r.path for r in records] == ["/etc/passwd", "/etc/shadow"]
    assert diagnostics == []
    assert log.written == 2


def test_concurrent_appends_keep_lines_whole(tmp_path):
    log = AuditLog(str(tmp_path / "audit.log"))
    long_path = "/data/" + "x" * 2000

    def writer(index):
        for n in range(50):
            log.append_record(_record(path=f"{long_path}/{index}/{n}"))

    threads = [threading.Thread(target=writer, args=(i,)) for i in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    records, diagnostics = log.read()
    assert diagnostics == []
    assert len(records) == 400
    assert len({r.path for r in records}) == 400


def test_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(AUDIT_LOG_ENV, str(tmp_path / "env.log"))
    assert AuditLog.from_environment().path == tmp_path / "env.log"
    assert AuditLog.from_environment(str(tmp_path / "flag.log")).path == tmp_path / "flag.log"
    monkeypatch.delenv(AUDIT_LOG_ENV)
    assert AuditLog.from_environment().path is None
