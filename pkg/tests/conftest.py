import os
import pickle
from pathlib import Path

import pytest

from src.parser.include_resolver import IncludeResolver
from src.parser.profile_parser import ProfileParser

PROJECT_ROOT = Path(__file__).parent.parent
PROFILE_DIR = PROJECT_ROOT / "profiles"

CREDIT_CARD = "4111-1111-1111-1111"


def run_in_child(func, *args, **kwargs):
    """
    Call func in a forked child so process-wide changes (limits, niceness)
    stay out of the test process.

    Returns:
        ("ok", value) or ("error", exception class name, message).
    """
    read_fd, write_fd = os.pipe()
    pid = os.fork()
    if pid == 0:
        os.close(read_fd)
        try:
            outcome = ("ok", func(*args, **kwargs))
        except BaseException as e:
            outcome = ("error", type(e).__name__, str(e))
        try:
            with os.fdopen(write_fd, "wb") as f:
                pickle.dump(outcome, f)
        finally:
            os._exit(0)
    os.close(write_fd)
    with os.fdopen(read_fd, "rb") as f:
        data = f.read()
    os.waitpid(pid, 0)
    return pickle.loads(data)


@pytest.fixture(scope="session")
def resolver():
    return IncludeResolver([str(PROFILE_DIR)])


@pytest.fixture(scope="session")
def corpus(resolver):
    return ProfileParser(resolver).load_profile_dir()


@pytest.fixture
def parse(resolver):
    parser = ProfileParser(resolver)
    return lambda text, origin="<test>": parser.parse(text, origin)


@pytest.fixture
def in_child():
    return run_in_child


@pytest.fixture
def home_tree(tmp_path):
    """A home directory with one card number hidden in Documents."""
    home = tmp_path / "home"
    (home / "Documents" / "taxes").mkdir(parents=True)
    (home / "Documents" / "notes.txt").write_text("nothing here\n")
    (home / "Documents" / "taxes" / "2016.txt").write_text(f"card: {CREDIT_CARD}\n")
    (home / "R").mkdir()
    return home
