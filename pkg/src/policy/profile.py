"""Profile value types: rules, capabilities, hats and the loaded profile set."""

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

from src.errors import ModeError, ProfileNotFound
from src.policy.modes import AccessMode, AccessModeSet
from src.policy.pattern import PathPattern, VariableTable, compile_pattern

_CAPABILITY_RE = re.compile(r"[a-z_]+")


class ProfileMode(str, enum.Enum):
    ENFORCE = "enforce"
    COMPLAIN = "complain"
    DISABLED = "disabled"


@dataclass(frozen=True)
class FileRule:
    pattern: PathPattern
    modes: AccessModeSet
    line: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.modes:
            raise ModeError(f"rule {self.pattern.source} grants no modes")

    def render(self) -> str:
        return f"{self.pattern.source} {self.modes.canonical()},"

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class CapabilityRule:
    name: str

    def __post_init__(self):
        if not _CAPABILITY_RE.fullmatch(self.name or ""):
            raise ValueError(f"invalid capability name: {self.name!r}")

    def render(self) -> str:
        return f"capability {self.name},"


@dataclass(frozen=True)
class Profile:
    """
    A named profile ("r-base") or a path-attached one ("/usr/bin/R").

    ``rules``/``capabilities`` are the profile's own entries; entries pulled
    in through ``includes`` are kept apart in ``included_rules`` and
    ``included_capabilities`` so that serialization re-emits the include
    lines instead of their contents.
    """
    name: str
    includes: Tuple[str, ...] = ()
    rules: Tuple[FileRule, ...] = ()
    capabilities: Tuple[CapabilityRule, ...] = ()
    hats: Mapping[str, "Profile"] = field(default_factory=dict)
    transitions: Tuple[str, ...] = ()
    mode: ProfileMode = ProfileMode.ENFORCE
    included_rules: Tuple[FileRule, ...] = ()
    included_capabilities: Tuple[CapabilityRule, ...] = ()
    is_hat: bool = False
    origin: str = field(default="", compare=False)
    line: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.is_hat and self.hats:
            raise ValueError(f"hat {self.name} cannot contain hats")
        for hat in self.hats.values():
            if not hat.is_hat or hat.hats:
                raise ValueError(f"hat {hat.name} of {self.name} cannot contain hats")

    @property
    def is_attached(self) -> bool:
        return self.name.startswith("/")

    @property
    def effective_rules(self) -> Tuple[FileRule, ...]:
        return self.included_rules + self.rules

    @property
    def effective_capabilities(self) -> Tuple[CapabilityRule, ...]:
        return self.included_capabilities + self.capabilities

    def attachment(self, variables: Optional[VariableTable] = None) -> Optional[PathPattern]:
        if not self.is_attached:
            return None
        return compile_pattern(self.name, variables)

    def with_mode(self, mode: ProfileMode) -> "Profile":
        return replace(self, mode=mode)

    def with_rules(self, extra: List[FileRule]) -> "Profile":
        return replace(self, rules=self.rules + tuple(extra))

    def with_hat(self, hat: "Profile") -> "Profile":
        hats = dict(self.hats)
        hats[hat.name] = hat
        return replace(self, hats=hats)

    def exec_rules(self) -> Iterator[FileRule]:
        return (rule for rule in self.effective_rules if rule.modes.exec_mode is not None)

    def __str__(self) -> str:
        return f"Profile({self.name}, mode={self.mode.value}, rules={len(self.rules)}, hats={list(self.hats)})"


@dataclass(frozen=True)
class ProfileSet:
    """Immutable collection of loaded profiles sharing one variable table."""
    profiles: Mapping[str, Profile] = field(default_factory=dict)
    variables: VariableTable = field(default_factory=VariableTable)
    includes: Tuple[str, ...] = ()
    unresolved_includes: Tuple[str, ...] = ()
    # (name, operator, values) for variables assigned in the origin file itself
    definitions: Tuple[Tuple[str, str, Tuple[str, ...]], ...] = ()

    def __contains__(self, name: str) -> bool:
        return name in self.profiles

    def __iter__(self) -> Iterator[Profile]:
        return iter(self.profiles.values())

    def __len__(self) -> int:
        return len(self.profiles)

    def get(self, name: str) -> Profile:
        try:
            return self.profiles[name]
        except KeyError:
            raise ProfileNotFound(name) from None

    @property
    def names(self) -> List[str]:
        return list(self.profiles)

    def with_profile(self, profile: Profile) -> "ProfileSet":
        profiles = dict(self.profiles)
        profiles[profile.name] = profile
        return replace(self, profiles=profiles)

    def merge(self, other: "ProfileSet") -> "ProfileSet":
        """
        Combine two sets. Identities must stay unique.

        Raises:
            ValueError: if a profile name is defined in both sets.
        """
        duplicates = sorted(set(self.profiles) & set(other.profiles))
        if duplicates:
            raise ValueError(f"duplicate profile identity: {', '.join(duplicates)}")
        profiles: Dict[str, Profile] = dict(self.profiles)
        profiles.update(other.profiles)
        variables = self.variables
        for name, values in other.variables.bindings.items():
            if name not in variables:
                variables = variables.define(name, list(values))
        return ProfileSet(
            profiles=profiles,
            variables=variables,
            includes=tuple(dict.fromkeys(self.includes + other.includes)),
            unresolved_includes=tuple(dict.fromkeys(self.unresolved_includes + other.unresolved_includes)),
            definitions=self.definitions + tuple(d for d in other.definitions if d not in self.definitions),
        )

    def attached_profiles(self) -> List[Profile]:
        return [profile for profile in self.profiles.values() if profile.is_attached]

    def find_attachments(self, path: str) -> List[Profile]:
        """Path-attached profiles whose attachment matches path, exact names first."""
        exact = [p for p in self.attached_profiles() if p.name == path]
        if exact:
            return exact
        return [
            profile for profile in self.attached_profiles()
            if profile.attachment(self.variables).matches(path)
        ]

    def unresolved_transitions(self) -> List[Tuple[str, str]]:
        """(profile, target) pairs whose change_profile target is not loaded."""
        return [
            (profile.name, target)
            for profile in self.profiles.values()
            for target in profile.transitions
            if target not in self.profiles
        ]

    def unresolved_px_rules(self) -> List[Tuple[str, FileRule]]:
        """(profile, rule) pairs with a px rule that no attached profile can satisfy."""
        unresolved = []
        attached = self.attached_profiles()
        for profile in self.profiles.values():
            scopes = [profile] + list(profile.hats.values())
            for scope in scopes:
                for rule in scope.effective_rules:
                    if rule.modes.exec_mode != AccessMode.PX:
                        continue
                    if rule.pattern.is_literal:
                        resolved = any(self.find_attachments(path) for path in rule.pattern.literal_paths())
                    else:
                        resolved = any(rule.pattern.matches(target.name) for target in attached)
                    if not resolved:
                        unresolved.append((profile.name, rule))
        return unresolved
