"""Static checks over a loaded ProfileSet."""

import enum
import logging
import posixpath
from dataclasses import dataclass
from typing import List, Set, Tuple

from src.policy.modes import AccessMode
from src.policy.profile import Profile, ProfileMode, ProfileSet

logger = logging.getLogger(__name__)


class Severity(str, enum.Enum):
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


@dataclass(frozen=True)
class Diagnostic:
    """
    One lint finding.

    Args:
        severity: Severity level.
        code: Stable identifier such as "w-m-hazard".
        profile: Profile name ("profile^hat" for hat scopes), empty for set-wide findings.
        message: Human readable description.
        line: Line of the offending rule or header, 0 when unknown.
    """
    severity: Severity
    code: str
    profile: str
    message: str
    line: int = 0

    def __str__(self) -> str:
        where = f"{self.profile}:{self.line}" if self.line else (self.profile or "-")
        return f"{self.severity.value}: {where}: [{self.code}] {self.message}"


def lint_profiles(profile_set: ProfileSet) -> List[Diagnostic]:
    """
    Run every check over the set.

    Only a profile's own rules are inspected for rule-level findings;
    rules contributed by includes belong to the included file.

    Returns:
        Diagnostics ordered by profile name, then line.
    """
    diagnostics: List[Diagnostic] = []
    for profile in profile_set:
        for scope_name, scope in _scopes(profile):
            diagnostics.extend(_rule_hazards(scope_name, scope))
            diagnostics.extend(_duplicate_rules(scope_name, scope))
            diagnostics.extend(_unresolved_cs(scope_name, scope, profile))
        diagnostics.extend(_unreachable_hats(profile))

    for name, rule in profile_set.unresolved_px_rules():
        diagnostics.append(Diagnostic(
            Severity.WARNING, "unresolved-px", name,
            f"'{rule.render()}' has no attached profile to transition to", rule.line,
        ))
    for name, target in profile_set.unresolved_transitions():
        diagnostics.append(Diagnostic(
            Severity.WARNING, "unresolved-transition", name,
            f"change_profile target '{target}' is not loaded",
            profile_set.get(name).line,
        ))
    for include in profile_set.unresolved_includes:
        diagnostics.append(Diagnostic(
            Severity.WARNING, "unresolved-include", "", f"include <{include}> could not be resolved",
        ))

    diagnostics.sort(key=lambda d: (d.profile, d.line, d.code))
    logger.debug(f"Lint produced {len(diagnostics)} diagnostic(s) over {len(profile_set)} profile(s)")
    return diagnostics


def _scopes(profile: Profile) -> List[Tuple[str, Profile]]:
    return [(profile.name, profile)] + [(f"{profile.name}^{hat.name}", hat) for hat in profile.hats.values()]


def _rule_hazards(scope_name: str, scope: Profile) -> List[Diagnostic]:
    found = []
    for rule in scope.rules:
        modes = rule.modes
        if AccessMode.W in modes and AccessMode.M in modes:
            found.append(Diagnostic(
                Severity.WARNING, "w-m-hazard", scope_name,
                f"'{rule.render()}' is writable and mappable: written code can be loaded and run",
                rule.line,
            ))
        if AccessMode.W in modes and AccessMode.IX in modes:
            found.append(Diagnostic(
                Severity.WARNING, "w-ix-hazard", scope_name,
                f"'{rule.render()}' is writable and executable: written programs can be run",
                rule.line,
            ))
        if AccessMode.UX in modes:
            found.append(Diagnostic(
                Severity.WARNING, "ux-dangerous", scope_name,
                f"'{rule.render()}' executes unconfined (dangerous)", rule.line,
            ))
    return found


def _duplicate_rules(scope_name: str, scope: Profile) -> List[Diagnostic]:
    seen: Set[Tuple[str, str]] = set()
    found = []
    for rule in scope.rules:
        key = (rule.pattern.source, rule.modes.canonical())
        if key in seen:
            found.append(Diagnostic(Severity.INFO, "duplicate-rule", scope_name, f"'{rule.render()}' repeated", rule.line))
        seen.add(key)
    return found


def _unresolved_cs(scope_name: str, scope: Profile, owner: Profile) -> List[Diagnostic]:
    found = []
    for rule in scope.effective_rules:
        if rule.modes.exec_mode != AccessMode.CS or not rule.pattern.is_literal:
            continue
        for path in rule.pattern.literal_paths():
            hat = posixpath.basename(path.rstrip("/"))
            if hat not in owner.hats:
                found.append(Diagnostic(
                    Severity.WARNING, "unresolved-cs", scope_name,
                    f"'{rule.render()}' names hat '^{hat}' which {owner.name} does not define",
                    rule.line,
                ))
    return found


def _unreachable_hats(profile: Profile) -> List[Diagnostic]:
    if profile.mode != ProfileMode.DISABLED:
        return []
    return [
        Diagnostic(
            Severity.WARNING, "unreachable-hat", profile.name,
            f"hat '^{hat.name}' can never be entered: {profile.name} is disabled", hat.line,
        )
        for hat in profile.hats.values()
    ]


def has_findings(diagnostics: List[Diagnostic]) -> bool:
    return any(d.severity != Severity.INFO for d in diagnostics)
