"""
Task file formats.

Line format, one step per line, shell-style quoting, '#' comments:
    read <path>                 write <path> <hex-bytes>
    list <path>                 exec <path> [args...]
    alloc <bytes>               burn <seconds>
    forkn <count|unbounded>     sleep <seconds>
    scan <root> <regex> [size-cap]
    emit <hex-bytes>
Byte counts accept K/M/G binary suffixes.

Structured format (YAML), a list of mappings with the same keywords:
    - {op: read, path: /etc/group}
    - {op: scan, root: ~/Documents, regex: "[0-9]+", size_cap: 1000000}
"""

import re
import shlex
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from omegaconf import DictConfig, ListConfig, OmegaConf

from src.errors import TaskValidationError
from src.tasks.steps import (
    DEFAULT_SCAN_SIZE_CAP,
    STEP_TYPES,
    AllocBytes,
    BurnCpu,
    Emit,
    Exec,
    ForkN,
    ListDir,
    ReadFile,
    ScanPattern,
    Sleep,
    TaskScript,
    TaskStep,
    WriteFile,
)

STRUCTURED_SUFFIXES = (".yaml", ".yml")

_SIZE_RE = re.compile(r"^(\d+)([KMG]?)$", re.IGNORECASE)
_SIZE_FACTORS = {"": 1, "K": 1024, "M": 1024 ** 2, "G": 1024 ** 3}


def parse_size(text: str) -> int:
    """Parse a byte count such as '80M' or '1000000'."""
    match = _SIZE_RE.match(str(text).strip())
    if match is None:
        raise TaskValidationError(f"invalid byte count '{text}'")
    return int(match.group(1)) * _SIZE_FACTORS[match.group(2).upper()]


def parse_seconds(text: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise TaskValidationError(f"invalid number of seconds '{text}'") from None
    return int(value) if value.is_integer() else value


def parse_hex(text: str) -> bytes:
    try:
        return bytes.fromhex(str(text))
    except ValueError:
        raise TaskValidationError(f"invalid hex bytes '{text}'") from None


def parse_count(text: str) -> Optional[int]:
    if str(text).lower() == "unbounded":
        return None
    if not str(text).isdigit():
        raise TaskValidationError(f"invalid fork count '{text}'")
    return int(text)


def _expect(op: str, args: List[str], minimum: int, maximum: Optional[int] = None):
    maximum = minimum if maximum is None else maximum
    if not minimum <= len(args) <= maximum:
        expected = str(minimum) if minimum == maximum else f"{minimum}..{maximum}"
        raise TaskValidationError(f"{op} takes {expected} argument(s), got {len(args)}")


def _read(args):
    _expect("read", args, 1)
    return ReadFile(args[0])


def _write(args):
    _expect("write", args, 2)
    return WriteFile(args[0], parse_hex(args[1]))


def _list(args):
    _expect("list", args, 1)
    return ListDir(args[0])


def _alloc(args):
    _expect("alloc", args, 1)
    return AllocBytes(parse_size(args[0]))


def _burn(args):
    _expect("burn", args, 1)
    return BurnCpu(parse_seconds(args[0]))


def _forkn(args):
    _expect("forkn", args, 1)
    return ForkN(parse_count(args[0]))


def _sleep(args):
    _expect("sleep", args, 1)
    return Sleep(parse_seconds(args[0]))


def _emit(args):
    _expect("emit", args, 1)
    return Emit(parse_hex(args[0]))


def _exec(args):
    if not args:
        raise TaskValidationError("exec takes a program path and optional arguments")
    return Exec(args[0], tuple(args[1:]))


def _scan(args):
    _expect("scan", args, 2, 3)
    size_cap = parse_size(args[2]) if len(args) == 3 else DEFAULT_SCAN_SIZE_CAP
    return ScanPattern(args[0], args[1], size_cap)


_LINE_BUILDERS: Dict[str, Callable[[List[str]], TaskStep]] = {
    "read": _read, "write": _write, "list": _list, "exec": _exec, "alloc": _alloc,
    "burn": _burn, "forkn": _forkn, "sleep": _sleep, "scan": _scan, "emit": _emit,
}


def parse_task_text(text: str, name: str = "") -> TaskScript:
    """
    Parse the line format.

    Raises:
        TaskValidationError: naming the offending line.
    """
    steps = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            words = shlex.split(line, comments=True)
        except ValueError as e:
            raise TaskValidationError(str(e), line=lineno) from None
        if not words:
            continue
        op, args = words[0].lower(), words[1:]
        builder = _LINE_BUILDERS.get(op)
        if builder is None:
            raise TaskValidationError(f"unknown step '{words[0]}'", line=lineno)
        try:
            steps.append(builder(args))
        except TaskValidationError as e:
            raise TaskValidationError(str(e), line=lineno) from None
    try:
        return TaskScript(tuple(steps), name=name)
    except TaskValidationError as e:
        raise TaskValidationError(f"{name or 'task'}: {e}") from None


_STRUCTURED_ARGS = {
    "read": ["path"],
    "write": ["path", "data"],
    "list": ["path"],
    "exec": ["path"],
    "alloc": ["bytes"],
    "burn": ["seconds"],
    "forkn": ["count"],
    "sleep": ["seconds"],
    "scan": ["root", "regex"],
    "emit": ["data"],
}
_STRUCTURED_OPTIONAL = {"exec": ["args"], "scan": ["size_cap"]}


def parse_task_structured(content: Any, name: str = "") -> TaskScript:
    """
    Parse the structured form: YAML text, or an already loaded list of mappings.
    """
    config = OmegaConf.create(content)
    if isinstance(config, DictConfig) and "steps" in config:
        config = config.steps
    if not isinstance(config, ListConfig):
        raise TaskValidationError("structured task must be a list of steps")

    steps = []
    for index, entry in enumerate(OmegaConf.to_container(config, resolve=True)):
        if not isinstance(entry, dict) or "op" not in entry:
            raise TaskValidationError(f"step {index}: expected a mapping with an 'op' key")
        op = str(entry["op"]).lower()
        if op not in STEP_TYPES:
            raise TaskValidationError(f"step {index}: unknown step '{entry['op']}'")
        allowed = {"op", *_STRUCTURED_ARGS[op], *_STRUCTURED_OPTIONAL.get(op, [])}
        unknown = sorted(set(entry) - allowed)
        if unknown:
            raise TaskValidationError(f"step {index}: unexpected key(s) {', '.join(unknown)} for {op}")
        missing = [key for key in _STRUCTURED_ARGS[op] if key not in entry]
        if missing:
            raise TaskValidationError(f"step {index}: {op} needs {', '.join(missing)}")
        args = [str(entry[key]) for key in _STRUCTURED_ARGS[op]]
        if op == "exec":
            args.extend(str(arg) for arg in entry.get("args") or [])
        if op == "scan" and "size_cap" in entry:
            args.append(str(entry["size_cap"]))
        try:
            steps.append(_LINE_BUILDERS[op](args))
        except TaskValidationError as e:
            raise TaskValidationError(f"step {index}: {e}") from None
    return TaskScript(tuple(steps), name=name)


def load_task_file(path: str) -> TaskScript:
    """Load a task file, choosing the format from its suffix."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in STRUCTURED_SUFFIXES:
        return parse_task_structured(text, name=path.stem)
    return parse_task_text(text, name=path.stem)
