import pytest

from src.errors import SetupError
from src.settings import CliConfig, load_config


@pytest.fixture
def conf_file(tmp_path):
    path = tmp_path / "conf.yaml"
    path.write_text("profile_roots:\n  - rel\n  - /abs/root\nbackend: simulated\nfork_bound: 8\n")
    return path


def test_defaults_come_from_project_conf():
    config = load_config(environ={})
    assert config.backend == "auto"
    assert config.profile_roots[0].endswith("/profiles")
    assert config.audit_log is None
    assert config.strict_includes


def test_file_values_and_relative_roots(conf_file):
    config = load_config(str(conf_file), environ={})
    assert config.backend == "simulated"
    assert config.fork_bound == 8
    assert config.profile_roots == [str(conf_file.parent / "rel"), "/abs/root"]
    assert config.grace_seconds == 0.5


def test_layering_order(conf_file):
    environ = {"ARMORCAGE_PROFILE_PATH": "/env/a::/env/b", "ARMORCAGE_AUDIT_LOG": "/env/audit.log"}
    config = load_config(str(conf_file), profile_roots=["/flag"], environ=environ)
    assert config.profile_roots[:3] == ["/flag", "/env/a", "/env/b"]
    assert config.audit_log == "/env/audit.log"

    config = load_config(str(conf_file), backend="native", audit_log="/flag.log", verbosity=2, environ=environ)
    assert (config.backend, config.audit_log, config.verbosity) == ("native", "/flag.log", 2)


@pytest.mark.parametrize("content", [
    "backend: selinux\n",
    "fork_bound: 0\n",
    "grace_seconds: -1\n",
    "fork_bound: many\n",
])
def test_invalid_config(tmp_path, content):
    path = tmp_path / "conf.yaml"
    path.write_text(content)
    with pytest.raises(ValueError):
        load_config(str(path), environ={})


def test_missing_explicit_config(tmp_path):
    with pytest.raises(ValueError, match="not found"):
        load_config(str(tmp_path / "absent.yaml"), environ={})


def test_require_roots(tmp_path):
    CliConfig(profile_roots=[str(tmp_path)]).require_roots()
    with pytest.raises(SetupError):
        CliConfig(profile_roots=[str(tmp_path / "absent")]).require_roots()
