from pathlib import Path
from typing import List

from src.errors import TaskValidationError
from src.tasks.script_parser import load_task_file
from src.tasks.steps import TaskScript

FIXTURE_DIR = Path(__file__).parent / "fixtures"
FIXTURE_SUFFIX = ".task"


def fixture_names() -> List[str]:
    return sorted(path.stem for path in FIXTURE_DIR.glob(f"*{FIXTURE_SUFFIX}"))


def builtin_fixture(name: str) -> TaskScript:
    """
    Load one of the shipped task fixtures.

    Args:
        name: read_syslog, find_credit_cards, memtest, cputest or forkbomb.

    Raises:
        TaskValidationError: unknown fixture name.
    """
    path = FIXTURE_DIR / f"{name}{FIXTURE_SUFFIX}"
    if name not in fixture_names():
        raise TaskValidationError(f"unknown fixture '{name}', expected one of: {', '.join(fixture_names())}")
    return load_task_file(str(path))
