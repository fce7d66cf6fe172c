"""
Path patterns in profile syntax and lexical path normalization.

Supported globbing:
    *       any run of characters except '/'
    **      any run of characters including '/'
    ?       one character except '/'
    [...]   character class (never matches '/'), '^' or '!' negates
    {a,b}   alternation, one level deep, empty branches allowed
    @{VAR}  variable reference, expanded through a VariableTable
    \\x      literal x

A '*' or '**' directly after '/' must match at least one character, so
"/tmp/**" covers everything below /tmp but not the directory "/tmp/" itself.
"""

import itertools
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from src.errors import PathError, PatternError

_VARIABLE_RE = re.compile(r"@\{([A-Za-z_][A-Za-z0-9_]*)\}")
_GLOB_CHARS = frozenset("*?[]{}")


@dataclass(frozen=True)
class VariableTable:
    """Variable name -> expansion texts. Values may reference other variables."""
    bindings: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def define(self, name: str, values: List[str]) -> "VariableTable":
        updated = dict(self.bindings)
        updated[name] = tuple(values)
        return VariableTable(updated)

    def extend(self, name: str, values: List[str]) -> "VariableTable":
        updated = dict(self.bindings)
        updated[name] = tuple(updated.get(name, ())) + tuple(values)
        return VariableTable(updated)

    def __contains__(self, name: str) -> bool:
        return name in self.bindings

    def expand(self, text: str) -> List[str]:
        """
        Expand every variable reference in text.

        Multiple values produce the cross product of all expansions, in
        definition order.

        Raises:
            PatternError: unknown variable or recursive definition.
        """
        return _expand(text, self.bindings, ())


def _expand(text: str, bindings: Mapping[str, Tuple[str, ...]], stack: Tuple[str, ...]) -> List[str]:
    found = _VARIABLE_RE.search(text)
    if found is None:
        return [text]
    name = found.group(1)
    if name not in bindings:
        raise PatternError(f"unknown variable @{{{name}}}")
    if name in stack:
        raise PatternError(f"recursive variable @{{{name}}}")
    head, tail = text[:found.start()], text[found.end():]
    values: List[str] = []
    for value in bindings[name]:
        values.extend(_expand(value, bindings, stack + (name,)))
    tails = _expand(tail, bindings, stack)
    return [head + value + rest for value, rest in itertools.product(values, tails)]


@dataclass(frozen=True)
class PathPattern:
    source: str
    expansions: Tuple[str, ...]
    regex: re.Pattern = field(compare=False, repr=False)

    def matches(self, path: str) -> bool:
        return self.regex.fullmatch(path) is not None

    @property
    def is_literal(self) -> bool:
        """True when every expansion is a plain path without glob characters."""
        return all(_literal_text(expansion) is not None for expansion in self.expansions)

    def literal_paths(self) -> List[str]:
        """Unescaped plain paths for a literal pattern, else an empty list."""
        literals = [_literal_text(expansion) for expansion in self.expansions]
        if any(text is None for text in literals):
            return []
        return literals

    def __str__(self) -> str:
        return self.source


def _literal_text(expansion: str) -> Optional[str]:
    out = []
    i = 0
    while i < len(expansion):
        char = expansion[i]
        if char == "\\" and i + 1 < len(expansion):
            out.append(expansion[i + 1])
            i += 2
            continue
        if char in _GLOB_CHARS:
            return None
        out.append(char)
        i += 1
    return "".join(out)


def escape_path(path: str) -> str:
    """Escape glob metacharacters so that path compiles to an exact match."""
    return "".join("\\" + char if char in _GLOB_CHARS or char in "\\@" else char for char in path)


def compile_pattern(source: str, variables: Optional[VariableTable] = None) -> PathPattern:
    """
    Compile a profile path pattern.

    Args:
        source: Pattern text, starting with '/' or '@{'.
        variables: Table used for '@{VAR}' references.

    Returns:
        PathPattern whose matcher accepts normalized absolute paths.

    Raises:
        PatternError: empty source, bad start, unbalanced brace/bracket,
            nested alternation or unknown variable.
    """
    if not source:
        raise PatternError("empty pattern")
    if not (source.startswith("/") or source.startswith("@{")):
        raise PatternError(f"pattern must begin with '/' or a variable: {source}")
    variables = variables or VariableTable()

    expansions: List[str] = []
    for expanded in variables.expand(source):
        for alternative in _expand_alternations(expanded, source):
            collapsed = re.sub(r"/{2,}", "/", alternative)
            if not collapsed.startswith("/"):
                raise PatternError(f"pattern does not expand to an absolute path: {expanded}")
            if collapsed not in expansions:
                expansions.append(collapsed)

    alternatives = [f"(?:{_translate(expansion, source)})" for expansion in expansions]
    regex = re.compile("|".join(alternatives), re.DOTALL)
    return PathPattern(source=source, expansions=tuple(expansions), regex=regex)


def _expand_alternations(text: str, source: str) -> List[str]:
    """Every brace-free text the '{a,b}' groups of text stand for, left to right."""
    i = 0
    while i < len(text):
        if text[i] == "\\":
            i += 2
            continue
        if text[i] == "[":
            i = _translate_class(text, i, source)[0]
            continue
        if text[i] == "{":
            break
        i += 1
    else:
        return [text]
    end = _closing_brace(text, i, source)
    head = text[:i]
    tails = _expand_alternations(text[end + 1:], source)
    return [head + branch + tail for branch in _split_branches(text[i + 1:end]) for tail in tails]


def _translate(text: str, source: str) -> str:
    """Regex for one brace-free expansion."""
    prev = ""
    out: List[str] = []
    i = 0
    n = len(text)
    while i < n:
        char = text[i]
        if char == "\\":
            if i + 1 >= n:
                raise PatternError(f"dangling escape in {source}")
            out.append(re.escape(text[i + 1]))
            prev = text[i + 1]
            i += 2
        elif char == "*":
            j = i
            while j < n and text[j] == "*":
                j += 1
            if j - i >= 2:
                out.append(".+" if prev == "/" else ".*")
            else:
                out.append("[^/]+" if prev == "/" else "[^/]*")
            prev = "*"
            i = j
        elif char == "?":
            out.append("[^/]")
            prev = "?"
            i += 1
        elif char == "[":
            end, char_class = _translate_class(text, i, source)
            out.append(char_class)
            prev = "]"
            i = end
        elif char == "{":
            raise PatternError(f"unbalanced '{{' in {source}")
        elif char == "}":
            raise PatternError(f"unbalanced '}}' in {source}")
        elif char == "@" and text.startswith("@{", i):
            raise PatternError(f"unexpanded variable in {source}")
        else:
            out.append(re.escape(char))
            prev = char
            i += 1
    return "".join(out)


def _closing_brace(text: str, start: int, source: str) -> int:
    i = start + 1
    while i < len(text):
        char = text[i]
        if char == "\\":
            i += 2
            continue
        if char == "{":
            raise PatternError(f"nested alternation in {source}")
        if char == "}":
            return i
        i += 1
    raise PatternError(f"unbalanced '{{' in {source}")


def _split_branches(body: str) -> List[str]:
    branches = []
    current = []
    i = 0
    while i < len(body):
        char = body[i]
        if char == "\\" and i + 1 < len(body):
            current.append(body[i:i + 2])
            i += 2
            continue
        if char == ",":
            branches.append("".join(current))
            current = []
        else:
            current.append(char)
        i += 1
    branches.append("".join(current))
    return branches


def _translate_class(text: str, start: int, source: str) -> Tuple[int, str]:
    i = start + 1
    negate = False
    if i < len(text) and text[i] in "^!":
        negate = True
        i += 1
    members = []
    first = True
    while i < len(text):
        char = text[i]
        if char == "]" and not first:
            break
        if char == "\\" and i + 1 < len(text):
            members.append(re.escape(text[i + 1]))
            i += 2
        elif char == "-" and members and i + 1 < len(text) and text[i + 1] != "]":
            members.append("-")
            i += 1
        else:
            members.append(re.escape(char) if char != "-" else r"\-")
            i += 1
        first = False
    else:
        raise PatternError(f"unbalanced '[' in {source}")
    body = "".join(members)
    if negate:
        return i + 1, f"[^/{body}]"
    return i + 1, f"(?:(?!/)[{body}])"


def normalize_path(raw: str) -> str:
    """
    Lexically normalize an absolute path.

    Collapses '//' and '/./', resolves '..' without touching the filesystem
    and keeps a single trailing '/' for directory requests.

    Raises:
        PathError: empty or relative path, or '..' above the root.
    """
    if not raw:
        raise PathError("empty path")
    if not raw.startswith("/"):
        raise PathError(f"relative path: {raw}")
    directory = raw.endswith("/")
    parts: List[str] = []
    for segment in raw.split("/"):
        if segment in ("", "."):
            continue
        if segment == "..":
            if not parts:
                raise PathError(f"'..' escapes root: {raw}")
            parts.pop()
            continue
        parts.append(segment)
    if not parts:
        return "/"
    normalized = "/" + "/".join(parts)
    return normalized + "/" if directory else normalized


def matches(pattern: PathPattern, path: str) -> bool:
    """Pure match of a compiled pattern against a normalized path."""
    return pattern.matches(path)


def variable_table(bindings: Dict[str, List[str]]) -> VariableTable:
    return VariableTable({name: tuple(values) for name, values in bindings.items()})
