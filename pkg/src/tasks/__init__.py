from src.tasks.fixtures import builtin_fixture, fixture_names
from src.tasks.runner import StepDecision, TaskRunner, run_task, scan_pattern
from src.tasks.script_parser import load_task_file, parse_task_structured, parse_task_text
from src.tasks.steps import (
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

__all__ = [
    'builtin_fixture', 'fixture_names', 'StepDecision', 'TaskRunner', 'run_task', 'scan_pattern',
    'load_task_file', 'parse_task_structured', 'parse_task_text',
    'AllocBytes', 'BurnCpu', 'Emit', 'Exec', 'ForkN', 'ListDir', 'ReadFile', 'ScanPattern', 'Sleep',
    'TaskScript', 'TaskStep', 'WriteFile',
]
