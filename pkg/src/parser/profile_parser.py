"""
Parser for the supported profile language.

Accepted statements:
    #include <name>            (also 'include <name>'), file level or profile body
    @{NAME}=v1 v2 / @{NAME}+=v3 variable assignment, whole line
    profile NAME [flags=(complain)] {
    /attach/path [flags=(...)] {
    ^hat {                       one level inside a profile
    capability NAME,
    change_profile -> NAME,
    /path/pattern MODES,
    }
'#' starts a comment everywhere except in include lines.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from src.errors import ModeError, ParseError, PatternError
from src.parser.include_resolver import IncludeResolver
from src.policy.modes import AccessModeSet
from src.policy.pattern import VariableTable, compile_pattern
from src.policy.profile import CapabilityRule, FileRule, Profile, ProfileMode, ProfileSet

logger = logging.getLogger(__name__)

MAX_INCLUDE_DEPTH = 16

RE_INCLUDE_START = re.compile(r"^#?include\b")
RE_INCLUDE = re.compile(r"^#?include\s*<([^<>\s]+)>\s*(?:#.*)?$")
RE_VARIABLE = re.compile(r"^@\{([A-Za-z_][A-Za-z0-9_]*)\}\s*(\+?=)\s*(.*)$")
RE_FLAGS = re.compile(r"^flags=\(([^()]*)\)$")
RE_PROFILE_NAME = re.compile(r"^[^\s{}^,#]+$")
RE_WORD = re.compile(r"\S+")

_Word = Tuple[str, int]


@dataclass
class _RuleDraft:
    source: str
    modes: AccessModeSet
    file: str
    line: int
    column: int


@dataclass
class _ProfileDraft:
    name: str
    mode: ProfileMode
    file: str
    line: int
    column: int
    is_hat: bool = False
    includes: List[str] = field(default_factory=list)
    rules: List[_RuleDraft] = field(default_factory=list)
    included_rules: List[_RuleDraft] = field(default_factory=list)
    capabilities: List[CapabilityRule] = field(default_factory=list)
    included_capabilities: List[CapabilityRule] = field(default_factory=list)
    transitions: List[str] = field(default_factory=list)
    hats: Dict[str, "_ProfileDraft"] = field(default_factory=dict)


@dataclass
class _ParseState:
    stack: List[_ProfileDraft] = field(default_factory=list)
    profiles: Dict[str, _ProfileDraft] = field(default_factory=dict)
    variables: Dict[str, List[str]] = field(default_factory=dict)
    variable_sites: Dict[str, Tuple[str, int]] = field(default_factory=dict)
    definitions: List[Tuple[str, str, Tuple[str, ...]]] = field(default_factory=list)
    file_includes: List[str] = field(default_factory=list)
    unresolved: List[str] = field(default_factory=list)
    last_line: int = 1


class ProfileParser:
    """
    Turns policy text into ProfileSet values.

    Parsing reads nothing from the filesystem except include targets found
    through the resolver.
    """
    def __init__(self, resolver: IncludeResolver, strict: bool = True):
        """
        Initialize the parser.

        Args:
            resolver: Include and profile-file lookup.
            strict: Unresolved includes are ParseErrors when True, recorded on
                the resulting set when False.
        """
        self.resolver = resolver
        self.strict = strict

    def parse(self, text: str, origin: str = "<string>") -> ProfileSet:
        state = _ParseState()
        self._parse_text(text, str(origin), state, depth=0, chain=(), included=False)
        if state.stack:
            open_block = state.stack[-1]
            raise ParseError(origin, state.last_line, 1, f"unclosed block for profile {open_block.name}")
        return self._finalize(state)

    def parse_file(self, path: str) -> ProfileSet:
        path = Path(path)
        return self.parse(path.read_text(encoding="utf-8"), str(path))

    def load_profile_dir(self, names: Optional[Iterable[str]] = None, skip_invalid: bool = False) -> ProfileSet:
        """
        Load profile files from the resolver roots into one ProfileSet.

        Args:
            names: File names to load; None loads every regular file directly
                under each existing root (the first root wins for a given name).
            skip_invalid: Log and skip files that fail to parse instead of raising.

        Returns:
            Combined ProfileSet.

        Raises:
            ParseError: a file fails to parse, or two files define the same profile.
        """
        files: Dict[str, Path] = {}
        if names is None:
            for root in self.resolver.existing_roots():
                for entry in sorted(root.iterdir()):
                    if entry.is_file() and not entry.name.startswith(".") and entry.name not in files:
                        files[entry.name] = entry
        else:
            for name in names:
                path = self.resolver.resolve(name)
                if path is None:
                    raise ParseError(name, 1, 1, f"profile file not found: {name}")
                files[name] = path

        combined = ProfileSet()
        for name, path in files.items():
            try:
                parsed = self.parse_file(str(path))
                duplicates = [profile for profile in parsed if profile.name in combined]
                if duplicates:
                    first = duplicates[0]
                    raise ParseError(str(path), first.line, 1, f"duplicate profile identity: {first.name}")
            except (ParseError, OSError, UnicodeDecodeError) as e:
                if not skip_invalid:
                    raise
                logger.warning(f"Skipping profile file {path}: {e}")
                continue
            combined = combined.merge(parsed)
            logger.debug(f"Loaded {len(parsed)} profile(s) from {path}")
        return combined

    def _parse_text(self, text: str, file: str, state: _ParseState, depth: int,
                    chain: Tuple[Path, ...], included: bool):
        base_depth = len(state.stack)
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not included:
                state.last_line = lineno
            stripped = line.strip()
            if not stripped:
                continue
            indent = len(line) - len(line.lstrip())

            if RE_INCLUDE_START.match(stripped):
                match = RE_INCLUDE.match(stripped)
                if match is None:
                    raise ParseError(file, lineno, indent + 1, f"malformed include: {stripped}")
                self._include(match.group(1), file, lineno, indent + 1, state, depth, chain, included)
                continue

            variable = RE_VARIABLE.match(stripped)
            if variable:
                self._define_variable(variable, file, lineno, indent + 1, state, included)
                continue

            pending: List[_Word] = []
            for word_match in RE_WORD.finditer(line):
                word, column = word_match.group(), word_match.start() + 1
                if word.startswith("#"):
                    break
                if word in ("{", "{}"):
                    self._open_block(pending, file, lineno, column, state, included)
                    pending = []
                    if word == "{}":
                        self._close_block(file, lineno, column, state, base_depth)
                elif word == "}":
                    if pending:
                        self._missing_comma(pending, file, lineno)
                    self._close_block(file, lineno, column, state, base_depth)
                elif word.endswith(","):
                    pending.append((word[:-1], column))
                    self._statement(pending, file, lineno, state, included)
                    pending = []
                else:
                    pending.append((word, column))
            if pending:
                self._missing_comma(pending, file, lineno)

    def _missing_comma(self, pending: List[_Word], file: str, lineno: int):
        head, head_column = pending[0]
        last, column = pending[-1]
        if head == "profile" or head.startswith("^"):
            raise ParseError(file, lineno, head_column, f"expected '{{' after '{' '.join(w for w, _ in pending)}'")
        raise ParseError(file, lineno, column + len(last), f"missing trailing ',' after '{last}'")

    def _include(self, name: str, file: str, lineno: int, column: int, state: _ParseState,
                 depth: int, chain: Tuple[Path, ...], included: bool):
        if not included:
            if state.stack:
                state.stack[-1].includes.append(name)
            else:
                state.file_includes.append(name)
        if depth + 1 > MAX_INCLUDE_DEPTH:
            raise ParseError(file, lineno, column, f"include depth exceeds {MAX_INCLUDE_DEPTH} at <{name}>")

        found = self.resolver.read(name)
        if found is None:
            if self.strict:
                raise ParseError(file, lineno, column, f"unresolved include <{name}>")
            logger.warning(f"{file}:{lineno}: unresolved include <{name}>")
            if name not in state.unresolved:
                state.unresolved.append(name)
            return
        path, text = found
        key = path.resolve()
        if key in chain:
            cycle = " -> ".join(str(p) for p in chain + (key,))
            raise ParseError(file, lineno, column, f"include cycle: {cycle}")
        self._parse_text(text, str(path), state, depth + 1, chain + (key,), included=True)

    def _define_variable(self, match: re.Match, file: str, lineno: int, column: int,
                         state: _ParseState, included: bool):
        name, operator, rest = match.groups()
        values = []
        for value in rest.split():
            if value.startswith("#"):
                break
            values.append(value)
        if not values:
            raise ParseError(file, lineno, column, f"variable @{{{name}}} has no value")
        if operator == "=":
            if name in state.variables:
                raise ParseError(file, lineno, column, f"variable @{{{name}}} redefined")
            state.variables[name] = values
        else:
            if name not in state.variables:
                raise ParseError(file, lineno, column, f"cannot append to undefined variable @{{{name}}}")
            state.variables[name] = state.variables[name] + values
        state.variable_sites.setdefault(name, (file, lineno))
        if not included:
            state.definitions.append((name, operator, tuple(values)))

    def _open_block(self, header: List[_Word], file: str, lineno: int, column: int,
                    state: _ParseState, included: bool):
        if included:
            raise ParseError(file, lineno, column, "profile blocks are not allowed in included files")
        if not header:
            raise ParseError(file, lineno, column, "'{' without a profile header")

        words = list(header)
        mode = ProfileMode.ENFORCE
        flags_word = words[-1] if len(words) > 1 and RE_FLAGS.match(words[-1][0]) else None
        if flags_word is not None:
            words.pop()
            mode = self._parse_flags(flags_word, file, lineno)

        head, head_column = words[0]
        if head == "profile":
            if len(words) != 2:
                raise ParseError(file, lineno, head_column, "expected 'profile NAME {'")
            name, name_column = words[1]
            if not RE_PROFILE_NAME.match(name):
                raise ParseError(file, lineno, name_column, f"invalid profile name '{name}'")
            self._push_profile(name, mode, file, lineno, name_column, state)
        elif head.startswith("^"):
            if len(words) != 1 or len(head) < 2 or not RE_PROFILE_NAME.match(head[1:]):
                raise ParseError(file, lineno, head_column, f"invalid hat header '{' '.join(w for w, _ in header)}'")
            if flags_word is not None:
                raise ParseError(file, lineno, flags_word[1], "hats inherit the profile mode and take no flags")
            self._push_hat(head[1:], file, lineno, head_column, state)
        elif head.startswith("/"):
            if len(words) != 1:
                raise ParseError(file, lineno, words[1][1], f"unexpected '{words[1][0]}' in profile header")
            self._push_profile(head, mode, file, lineno, head_column, state)
        else:
            raise ParseError(file, lineno, head_column, f"unexpected '{head}' before '{{'")

    def _parse_flags(self, flags_word: _Word, file: str, lineno: int) -> ProfileMode:
        text, column = flags_word
        flags = [flag for flag in re.split(r"[\s,]+", RE_FLAGS.match(text).group(1)) if flag]
        if len(flags) != 1:
            raise ParseError(file, lineno, column, f"expected exactly one mode flag in '{text}'")
        try:
            return ProfileMode(flags[0])
        except ValueError:
            raise ParseError(file, lineno, column, f"unknown profile flag '{flags[0]}'") from None

    def _push_profile(self, name: str, mode: ProfileMode, file: str, lineno: int, column: int,
                      state: _ParseState):
        if state.stack:
            raise ParseError(file, lineno, column, f"nested profile '{name}' is not supported; use a ^hat")
        if name in state.profiles:
            raise ParseError(file, lineno, column, f"duplicate profile identity: {name}")
        draft = _ProfileDraft(name=name, mode=mode, file=file, line=lineno, column=column)
        state.profiles[name] = draft
        state.stack.append(draft)

    def _push_hat(self, name: str, file: str, lineno: int, column: int, state: _ParseState):
        if not state.stack:
            raise ParseError(file, lineno, column, f"hat '^{name}' outside of a profile")
        parent = state.stack[-1]
        if parent.is_hat:
            raise ParseError(file, lineno, column, f"hat '^{name}' nested inside hat '^{parent.name}'")
        if name in parent.hats:
            raise ParseError(file, lineno, column, f"duplicate hat '^{name}' in profile {parent.name}")
        draft = _ProfileDraft(name=name, mode=ProfileMode.ENFORCE, file=file, line=lineno, column=column, is_hat=True)
        parent.hats[name] = draft
        state.stack.append(draft)

    def _close_block(self, file: str, lineno: int, column: int, state: _ParseState, base_depth: int):
        if len(state.stack) <= base_depth:
            raise ParseError(file, lineno, column, "unbalanced '}'")
        state.stack.pop()

    def _statement(self, words: List[_Word], file: str, lineno: int, state: _ParseState, included: bool):
        head, head_column = words[0]
        if not state.stack:
            raise ParseError(file, lineno, head_column, f"'{head}' outside of a profile")
        draft = state.stack[-1]

        if head == "capability":
            if len(words) != 2:
                raise ParseError(file, lineno, head_column, "expected 'capability NAME,'")
            name, column = words[1]
            try:
                capability = CapabilityRule(name)
            except ValueError:
                raise ParseError(file, lineno, column, f"invalid capability name '{name}'") from None
            (draft.included_capabilities if included else draft.capabilities).append(capability)
        elif head == "change_profile":
            tokens = [word for word, _ in words[1:]]
            joined = "".join(tokens)
            if not joined.startswith("->") or len(joined) == 2 or len(tokens) > 2:
                raise ParseError(file, lineno, head_column, "expected 'change_profile -> NAME,'")
            target = joined[2:]
            if target not in draft.transitions:
                draft.transitions.append(target)
        elif head.startswith("/") or head.startswith("@{"):
            if len(words) == 1 or not words[1][0]:
                raise ParseError(file, lineno, head_column + len(head), f"missing access modes for '{head}'")
            if len(words) > 2:
                raise ParseError(file, lineno, words[2][1], f"unexpected '{words[2][0]}' after access modes")
            mode_text, mode_column = words[1]
            try:
                modes = AccessModeSet.parse(mode_text)
            except ModeError as e:
                raise ParseError(file, lineno, mode_column + e.offset, str(e)) from None
            rule = _RuleDraft(source=head, modes=modes, file=file, line=lineno, column=head_column)
            (draft.included_rules if included else draft.rules).append(rule)
        else:
            raise ParseError(file, lineno, head_column, f"unrecognized statement '{head}'")

    def _finalize(self, state: _ParseState) -> ProfileSet:
        variables = VariableTable({name: tuple(values) for name, values in state.variables.items()})
        for name, (file, lineno) in state.variable_sites.items():
            try:
                variables.expand(f"@{{{name}}}")
            except PatternError as e:
                raise ParseError(file, lineno, 1, str(e)) from None

        profiles = {}
        for name, draft in state.profiles.items():
            if draft.name.startswith("/"):
                try:
                    compile_pattern(draft.name, variables)
                except PatternError as e:
                    raise ParseError(draft.file, draft.line, draft.column, str(e)) from None
            profiles[name] = self._build(draft, variables)
        return ProfileSet(
            profiles=profiles,
            variables=variables,
            includes=tuple(state.file_includes),
            unresolved_includes=tuple(state.unresolved),
            definitions=tuple(state.definitions),
        )

    def _build(self, draft: _ProfileDraft, variables: VariableTable) -> Profile:
        hats = {name: self._build(hat, variables) for name, hat in draft.hats.items()}
        return Profile(
            name=draft.name,
            includes=tuple(draft.includes),
            rules=tuple(self._compile_rule(rule, variables) for rule in draft.rules),
            capabilities=tuple(draft.capabilities),
            hats=hats,
            transitions=tuple(draft.transitions),
            mode=draft.mode,
            included_rules=tuple(self._compile_rule(rule, variables) for rule in draft.included_rules),
            included_capabilities=tuple(draft.included_capabilities),
            is_hat=draft.is_hat,
            origin=draft.file,
            line=draft.line,
        )

    @staticmethod
    def _compile_rule(rule: _RuleDraft, variables: VariableTable) -> FileRule:
        try:
            pattern = compile_pattern(rule.source, variables)
        except PatternError as e:
            raise ParseError(rule.file, rule.line, rule.column, str(e)) from None
        return FileRule(pattern=pattern, modes=rule.modes, line=rule.line)


def parse_profiles(text: str, origin: str, resolver: IncludeResolver, strict: bool = True) -> ProfileSet:
    """Parse every profile in text. See ProfileParser."""
    return ProfileParser(resolver, strict=strict).parse(text, origin)


def load_profile_dir(resolver: IncludeResolver, names: Optional[Iterable[str]] = None,
                     strict: bool = True, skip_invalid: bool = False) -> ProfileSet:
    return ProfileParser(resolver, strict=strict).load_profile_dir(names, skip_invalid=skip_invalid)
