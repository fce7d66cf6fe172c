"""Rule suggestions mined from denial records, and merging them back into profiles."""

import logging
import posixpath
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from src.audit.record import DENIED, AuditRecord
from src.engine.context import SubjectContext
from src.engine.decision import AccessRequest, Operation, check_access
from src.policy.modes import AccessMode, AccessModeSet, EXEC_MODES, NO_MODES
from src.policy.pattern import compile_pattern, escape_path
from src.policy.profile import FileRule, ProfileSet

logger = logging.getLogger(__name__)

GENERALIZE_MIN_SIBLINGS = 3


@dataclass(frozen=True)
class RuleSuggestion:
    profile: str
    hat: Optional[str]
    rule: FileRule
    evidence: int

    def __post_init__(self):
        if self.evidence < 1:
            raise ValueError("a suggestion needs at least one supporting record")

    @property
    def scope(self) -> str:
        return f"{self.profile}^{self.hat}" if self.hat else self.profile

    def __str__(self) -> str:
        return f"{self.scope}: {self.rule.render()}  # {self.evidence} record(s)"


def suggest_rules(records: Iterable[AuditRecord], profile_set: ProfileSet,
                  generalize: bool = False) -> List[RuleSuggestion]:
    """
    Propose exact-path rules that would have allowed the denied records.

    Denials are grouped by (profile, hat, path); each group yields one rule
    with the union of modes the current policy is missing. Exec
    requirements are suggested as 'ix'. Records whose profile or hat is not
    loaded, or which the current policy already allows, are ignored.

    Args:
        records: Audit records, typically from a complain-mode run.
        profile_set: Current policy.
        generalize: Collapse 3 or more sibling files of one directory into 'dir/*'.

    Returns:
        Suggestions sorted by evidence (descending), then path.
    """
    groups: Dict[Tuple[str, Optional[str], str], List[AuditRecord]] = OrderedDict()
    for record in records:
        if record.decision != DENIED:
            continue
        groups.setdefault((record.profile, record.hat, record.path), []).append(record)

    suggestions = []
    for (profile_name, hat, path), group in groups.items():
        ctx = _context_for(profile_set, profile_name, hat)
        if ctx is None:
            logger.debug(f"Ignoring records for unknown scope {profile_name}^{hat}")
            continue
        missing = NO_MODES
        for record in group:
            missing |= _missing_modes(ctx, profile_set, record)
        if missing == NO_MODES:
            continue
        rule = FileRule(compile_pattern(escape_path(path)), AccessModeSet(missing))
        suggestions.append(RuleSuggestion(profile_name, hat, rule, evidence=len(group)))

    if generalize:
        suggestions = _generalize(suggestions)
    suggestions.sort(key=lambda s: (-s.evidence, s.rule.pattern.source, s.profile, s.hat or ""))
    logger.info(f"{len(suggestions)} suggestion(s) from {sum(len(g) for g in groups.values())} denial(s)")
    return suggestions


def _context_for(profile_set: ProfileSet, profile_name: str, hat: Optional[str]) -> Optional[SubjectContext]:
    if profile_name not in profile_set:
        return None
    if hat is None:
        return SubjectContext(profile=profile_name)
    if hat not in profile_set.get(profile_name).hats:
        return None
    return SubjectContext(profile=profile_name, active_hat=hat, hat_token=0)


def _missing_modes(ctx: SubjectContext, profile_set: ProfileSet, record: AuditRecord) -> AccessMode:
    try:
        operation = Operation(record.operation)
        request = AccessRequest(record.path, record.requested, operation)
    except ValueError:
        request = AccessRequest(record.path, record.requested, Operation.READ)
    decision = check_access(ctx, profile_set, request)
    missing = decision.missing
    if missing & EXEC_MODES:
        missing = (missing & ~EXEC_MODES) | AccessMode.IX
    return missing


def _generalize(suggestions: List[RuleSuggestion]) -> List[RuleSuggestion]:
    by_directory: Dict[Tuple[str, Optional[str], str], List[RuleSuggestion]] = OrderedDict()
    kept = []
    for suggestion in suggestions:
        paths = suggestion.rule.pattern.literal_paths()
        if len(paths) != 1 or paths[0].endswith("/"):
            kept.append(suggestion)
            continue
        directory = posixpath.dirname(paths[0])
        by_directory.setdefault((suggestion.profile, suggestion.hat, directory), []).append(suggestion)

    for (profile, hat, directory), siblings in by_directory.items():
        if len(siblings) < GENERALIZE_MIN_SIBLINGS:
            kept.extend(siblings)
            continue
        modes = NO_MODES
        for sibling in siblings:
            modes |= sibling.rule.modes.flags
        source = escape_path(directory.rstrip("/")) + "/*"
        rule = FileRule(compile_pattern(source), AccessModeSet(modes))
        kept.append(RuleSuggestion(profile, hat, rule, evidence=sum(s.evidence for s in siblings)))
    return kept


def apply_suggestions(profile_set: ProfileSet, suggestions: Iterable[RuleSuggestion]) -> ProfileSet:
    """Return a new set with every suggested rule appended to its profile or hat."""
    updated = profile_set
    for suggestion in suggestions:
        profile = updated.get(suggestion.profile)
        if suggestion.hat is None:
            profile = profile.with_rules([suggestion.rule])
        else:
            profile = profile.with_hat(profile.hats[suggestion.hat].with_rules([suggestion.rule]))
        updated = updated.with_profile(profile)
    return updated
