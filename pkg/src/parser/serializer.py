from typing import Iterable, List

from src.policy.profile import Profile, ProfileMode, ProfileSet

INDENT = " " * 8


def serialize_profile(profile: Profile, file_includes: Iterable[str] = ()) -> str:
    """
    Render a profile in canonical text form.

    Include lines are emitted instead of the rules they contributed, so the
    result parses back to an equal Profile given the same include roots.

    Args:
        profile: Profile to render.
        file_includes: File-level includes to emit before the profile
            (typically "tunables/global").

    Returns:
        Profile text ending with a newline.
    """
    lines = [f"#include <{name}>" for name in file_includes]
    lines.extend(_profile_lines(profile))
    return "\n".join(lines) + "\n"


def serialize_profile_set(profile_set: ProfileSet) -> str:
    """Render every profile of a set, preceded by its file-level includes and variables."""
    lines = [f"#include <{name}>" for name in profile_set.includes]
    for name, operator, values in profile_set.definitions:
        lines.append(f"@{{{name}}}{operator}{' '.join(values)}")
    for profile in profile_set:
        if lines:
            lines.append("")
        lines.extend(_profile_lines(profile))
    return "\n".join(lines) + "\n"


def _profile_lines(profile: Profile) -> List[str]:
    name = profile.name if profile.is_attached else f"profile {profile.name}"
    flags = f" flags=({profile.mode.value})" if profile.mode != ProfileMode.ENFORCE else ""
    lines = [f"{name}{flags} {{"]
    lines.extend(_body_lines(profile, INDENT))
    lines.append("}")
    return lines


def _body_lines(profile: Profile, indent: str) -> List[str]:
    sections: List[List[str]] = [
        [f"{indent}#include <{name}>" for name in profile.includes],
        [f"{indent}{capability.render()}" for capability in profile.capabilities],
        [f"{indent}change_profile -> {target}," for target in profile.transitions],
        [f"{indent}{rule.render()}" for rule in profile.rules],
    ]
    for hat in profile.hats.values():
        hat_lines = [f"{indent}^{hat.name} {{"]
        hat_lines.extend(_body_lines(hat, indent + INDENT))
        hat_lines.append(f"{indent}}}")
        sections.append(hat_lines)

    lines: List[str] = []
    for section in sections:
        if not section:
            continue
        if lines:
            lines.append("")
        lines.extend(section)
    return lines
