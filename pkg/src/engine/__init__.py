from src.engine.context import (
    UNCONFINED,
    SubjectContext,
    active_scope,
    change_hat,
    change_profile,
    confined,
    revert_hat,
)
from src.engine.decision import (
    AccessRequest,
    Decision,
    Operation,
    check_access,
    check_capability,
    exec_transition,
    set_mode,
)

__all__ = [
    'UNCONFINED', 'SubjectContext', 'active_scope', 'change_hat', 'change_profile', 'confined', 'revert_hat',
    'AccessRequest', 'Decision', 'Operation', 'check_access', 'check_capability', 'exec_transition', 'set_mode',
]
