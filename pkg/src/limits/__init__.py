from src.limits.identity import Identity, get_identity, set_identity
from src.limits.priority import MAX_NICE, MIN_NICE, get_priority, set_priority
from src.limits.rlimits import (
    INFINITY,
    LimitRow,
    LimitUnit,
    RlimitKind,
    RlimitValue,
    apply_rlimits,
    get_rlimit,
    limits_table,
    parse_limit_value,
    parse_rlimit_spec,
    set_rlimit,
)

__all__ = [
    'Identity', 'get_identity', 'set_identity',
    'MAX_NICE', 'MIN_NICE', 'get_priority', 'set_priority',
    'INFINITY', 'LimitRow', 'LimitUnit', 'RlimitKind', 'RlimitValue', 'apply_rlimits', 'get_rlimit',
    'limits_table', 'parse_limit_value', 'parse_rlimit_spec', 'set_rlimit',
]
