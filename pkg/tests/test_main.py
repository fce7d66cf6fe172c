import json

import pytest

from src.audit.record import DENIED, AuditRecord
from src.main import (
    EXIT_DENIED,
    EXIT_FINDINGS,
    EXIT_LIMIT_KILLED,
    EXIT_OK,
    EXIT_SETUP,
    EXIT_TASK_ERROR,
    EXIT_TIMEOUT,
    EXIT_USAGE,
    expand_home,
    main,
)
from src.policy.modes import AccessModeSet

from tests.conftest import PROFILE_DIR


@pytest.fixture
def cli(tmp_path, monkeypatch):
    monkeypatch.delenv("ARMORCAGE_PROFILE_PATH", raising=False)
    monkeypatch.delenv("ARMORCAGE_AUDIT_LOG", raising=False)
    conf = tmp_path / "conf.yaml"
    conf.write_text(f"profile_roots:\n  - {PROFILE_DIR}\nbackend: simulated\n")

    def run(*argv):
        return main(["--config", str(conf), *argv])
    return run


def test_check(cli, capsys):
    assert cli("check", "r-base", "/etc/hosts") == EXIT_OK
    assert cli("check", "r-base", "/etc/R/") == EXIT_OK
    assert cli("check", "r-base", "/var/log/syslog") == EXIT_DENIED
    assert "denied (missing r)" in capsys.readouterr().out
    assert cli("check", "r-base", "/usr/bin/env", "ix") == EXIT_OK
    assert cli("check", "r-base", "/var/log/syslog", "--mode", "complain") == EXIT_DENIED
    assert "not enforced in complain mode" in capsys.readouterr().out


def test_check_capability_and_errors(cli):
    assert cli("check", "r-user", "--capability", "kill") == EXIT_OK
    assert cli("check", "r-user", "--capability", "sys_admin") == EXIT_DENIED
    assert cli("check", "ghost", "/etc/hosts") == EXIT_USAGE
    assert cli("check", "r-base") == EXIT_USAGE
    assert cli("check", "r-base", "relative/path") == EXIT_USAGE
    assert cli("check", "r-base", "/etc/hosts", "rq") == EXIT_USAGE


def test_lint(cli, tmp_path, capsys):
    assert cli("lint", str(PROFILE_DIR / "r-compile")) == EXIT_FINDINGS
    assert "[w-m-hazard]" in capsys.readouterr().out
    assert cli("lint", "r-base") == EXIT_OK
    broken = tmp_path / "broken"
    broken.write_text("profile broken {\n  /tmp/** rw\n}\n")
    assert cli("lint", str(broken)) == EXIT_USAGE


def test_simulate(cli, capsys):
    assert cli("simulate", "--profile", "r-base", "--task", "read_syslog") == EXIT_FINDINGS
    assert "step 0: read /var/log/syslog denied" in capsys.readouterr().out
    assert cli("simulate", "--task", "read_syslog") == EXIT_OK
    assert cli("simulate", "--task", "no_such_fixture") == EXIT_USAGE


def test_logprof(cli, tmp_path, capsys):
    log = tmp_path / "audit.log"
    record = AuditRecord("r-base", None, "read", "/var/log/syslog", AccessModeSet.parse("r"), DENIED, DENIED)
    log.write_text(record.to_line() + "\nnot a record\n")
    assert cli("logprof", str(log), "--apply") == EXIT_FINDINGS
    captured = capsys.readouterr()
    assert "r-base: /var/log/syslog r,  # 1 record(s)" in captured.out
    assert "profile r-base" in captured.out
    assert "line 2" in captured.err

    empty = tmp_path / "empty.log"
    empty.write_text("")
    assert cli("logprof", str(empty)) == EXIT_OK
    assert cli("logprof", str(tmp_path / "absent.log")) == EXIT_USAGE


def test_limits_and_sanitize(cli, capsys):
    assert cli("limits") == EXIT_OK
    out = capsys.readouterr().out
    assert "NOFILE" in out and "MSGQUEUE" in out
    assert cli("limits", "--pid", "999999999") == EXIT_USAGE
    assert cli("sanitize", "speed ~ dist + system('whoami')") == EXIT_OK
    assert capsys.readouterr().out == "speeddistsystemwhoami\n"


def test_run_exit_codes(cli, tmp_path, capsys):
    task = tmp_path / "emit.task"
    task.write_text("emit 6869\n")
    assert cli("run", "--task", str(task), "--profile", "r-base", "--json") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["status"] == "ok"
    assert cli("run", "--task", "read_syslog", "--profile", "r-base") == EXIT_DENIED
    assert cli("run", "--task", "read_syslog", "--profile", "ghost") == EXIT_SETUP
    assert cli("run", "--task", str(task), "--rlimit", "BOGUS=1") == EXIT_SETUP
    assert cli("run") == EXIT_USAGE
    assert cli("run", "--task", str(task), "--", "echo") == EXIT_USAGE


@pytest.mark.slow
def test_run_runtime_exit_codes(cli, tmp_path, capsys):
    burn = tmp_path / "burn.task"
    burn.write_text("burn 30\n")
    assert cli("run", "--task", str(burn), "--timeout", "2", "--json") == EXIT_TIMEOUT
    assert json.loads(capsys.readouterr().out)["status"] == "timeout"
    assert cli("run", "--task", "cputest", "--rlimit", "CPU=1", "--timeout", "20") == EXIT_LIMIT_KILLED
    assert cli("run", "--task", "memtest", "--profile", "r-base", "--rlimit", "AS=10M", "--timeout", "20") in (
        EXIT_LIMIT_KILLED, EXIT_TASK_ERROR)
    assert cli("run", "--timeout", "10", "--", "false") == EXIT_TASK_ERROR


def test_run_concurrent_jobs(cli, tmp_path, capsys):
    task = tmp_path / "emit.task"
    task.write_text("emit 6869\n")
    assert cli("run", "--task", str(task), "--jobs", "3", "--json") == EXIT_OK
    documents = json.loads(capsys.readouterr().out)
    assert [d["status"] for d in documents] == ["ok"] * 3


def test_bad_backend_in_config(tmp_path):
    conf = tmp_path / "conf.yaml"
    conf.write_text("backend: selinux\n")
    assert main(["--config", str(conf), "sanitize", "x"]) == EXIT_USAGE


def test_expand_home():
    environ = {"HOME": "/home/ana/"}
    assert expand_home("~/Documents", environ) == "/home/ana/Documents"
    assert expand_home("@{HOME}/R/", environ) == "/home/ana/R/"
    assert expand_home("/etc/~x", environ) == "/etc/~x"
