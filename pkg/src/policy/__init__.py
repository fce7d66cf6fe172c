from src.policy.modes import AccessMode, AccessModeSet, EXEC_MODES, NO_MODES
from src.policy.pattern import (
    PathPattern,
    VariableTable,
    compile_pattern,
    escape_path,
    matches,
    normalize_path,
)
from src.policy.profile import CapabilityRule, FileRule, Profile, ProfileMode, ProfileSet

__all__ = [
    'AccessMode', 'AccessModeSet', 'EXEC_MODES', 'NO_MODES',
    'PathPattern', 'VariableTable', 'compile_pattern', 'escape_path', 'matches', 'normalize_path',
    'CapabilityRule', 'FileRule', 'Profile', 'ProfileMode', 'ProfileSet',
]
