import itertools
import random
import re

import pytest

from src.errors import PathError, PatternError
from src.policy.pattern import VariableTable, compile_pattern, escape_path, normalize_path


@pytest.mark.parametrize("pattern,path,expected", [
    ("/tmp/**", "/tmp/a", True),
    ("/tmp/**", "/tmp/a/b/c.pdf", True),
    ("/tmp/**", "/tmp/", False),
    ("/tmp/**", "/tmp", False),
    ("/bin/*", "/bin/ls", True),
    ("/bin/*", "/bin/", False),
    ("/bin/*", "/bin/x/y", False),
    ("/etc/R/", "/etc/R/", True),
    ("/etc/R/", "/etc/R", False),
    ("/etc/R/*", "/etc/R/Renviron", True),
    ("/usr/lib{,32,64}/**", "/usr/lib/x", True),
    ("/usr/lib{,32,64}/**", "/usr/lib32/x", True),
    ("/usr/lib{,32,64}/**", "/usr/lib64/a/b", True),
    ("/usr/lib{,32,64}/**", "/usr/lib16/x", False),
    ("/a?c", "/abc", True),
    ("/a?c", "/a/c", False),
    ("/x[ab]", "/xa", True),
    ("/x[ab]", "/xc", False),
    ("/x[!ab]", "/xc", True),
    ("/x[!ab]", "/x/", False),
    ("/x[a-c]", "/xb", True),
    ("/x[{]", "/x{", True),
    ("/a//b", "/a/b", True),
    ("/data/*.csv", "/data/x.csv", True),
    ("/data/*.csv", "/data/.csv", False),
    ("/data/*.csv", "/data/sub/x.csv", False),
])
def test_glob_semantics(pattern, path, expected):
    assert compile_pattern(pattern).matches(path) is expected


@pytest.mark.parametrize("source", [
    "",
    "tmp/x",
    "/a{b,{c}}",
    "/a{b",
    "/a}b",
    "/a[bc",
    "/trailing\\",
])
def test_invalid_patterns(source):
    with pytest.raises(PatternError):
        compile_pattern(source)


def test_variable_expansion():
    variables = VariableTable({"HOME": ("/home/*/", "/root/")})
    pattern = compile_pattern("@{HOME}/R/**", variables)
    assert pattern.expansions == ("/home/*/R/**", "/root/R/**")
    assert pattern.matches("/home/jeroen/R/library/x")
    assert pattern.matches("/root/R/x")
    assert not pattern.matches("/home/jeroen/Documents/x")
    assert not pattern.matches("/home/a/b/R/x")


def test_variable_cross_product_and_nesting():
    variables = VariableTable({"A": ("/x", "/y"), "B": ("1", "2"), "C": ("@{A}",)})
    pattern = compile_pattern("@{C}/@{B}", variables)
    assert pattern.expansions == ("/x/1", "/x/2", "/y/1", "/y/2")


def test_variable_errors():
    with pytest.raises(PatternError, match="unknown variable"):
        compile_pattern("@{NOPE}/x")
    recursive = VariableTable({"A": ("@{B}",), "B": ("@{A}",)})
    with pytest.raises(PatternError, match="recursive"):
        compile_pattern("@{A}/x", recursive)


def test_escape_path_is_exact():
    path = "/tmp/a*b[1]{x,y}@{HOME}"
    pattern = compile_pattern(escape_path(path))
    assert pattern.matches(path)
    assert not pattern.matches("/tmp/axb1")
    assert pattern.is_literal
    assert pattern.literal_paths() == [path]
    assert not compile_pattern("/tmp/*").is_literal
    assert compile_pattern("/tmp/*").literal_paths() == []


@pytest.mark.parametrize("raw,expected", [
    ("/etc/passwd", "/etc/passwd"),
    ("//etc/./passwd", "/etc/passwd"),
    ("/a/b/../c", "/a/c"),
    ("/tmp/x/", "/tmp/x/"),
    ("/", "/"),
    ("/a/..", "/"),
])
def test_normalize_path(raw, expected):
    assert normalize_path(raw) == expected


@pytest.mark.parametrize("raw", ["", "etc/passwd", "/..", "/a/../.."])
def test_normalize_path_rejects(raw):
    with pytest.raises(PathError):
        normalize_path(raw)


def _reference_match(pattern, path, prev=""):
    """Direct backtracking matcher over '*', '**', '?' and literals."""
    if not pattern:
        return not path
    if pattern[0] == "*":
        run = len(pattern) - len(pattern.lstrip("*"))
        rest = pattern[run:]
        minimum = 1 if prev == "/" else 0
        for k in range(minimum, len(path) + 1):
            if run == 1 and "/" in path[:k]:
                break
            if _reference_match(rest, path[k:], "*"):
                return True
        return False
    if not path:
        return False
    if pattern[0] == "?":
        return path[0] != "/" and _reference_match(pattern[1:], path[1:], "?")
    return path[0] == pattern[0] and _reference_match(pattern[1:], path[1:], pattern[0])


def _brace_expansions(pattern):
    pieces = re.split(r"\{([^{}]*)\}", pattern)
    choices = [[piece] if i % 2 == 0 else piece.split(",") for i, piece in enumerate(pieces)]
    return ["".join(parts) for parts in itertools.product(*choices)]


def _reference_glob(pattern, path):
    return any(_reference_match(re.sub(r"/{2,}", "/", expansion), path) for expansion in _brace_expansions(pattern))


def test_glob_matches_reference_matcher():
    rng = random.Random(1234)
    tokens = ["/", "a", "b", "*", "**", "?", "{/,a}", "{,b}", "{a,/}", "{a/,*}"]
    for _ in range(3000):
        pattern = "/" + "".join(rng.choice(tokens) for _ in range(rng.randint(0, 6)))
        path = "/" + "".join(rng.choice("/ab") for _ in range(rng.randint(0, 7)))
        assert compile_pattern(pattern).matches(path) is _reference_glob(pattern, path), (pattern, path)


@pytest.mark.parametrize("pattern,path,expected", [
    ("/a{/,x}*", "/a/", False),
    ("/a{/,x}*", "/a/b", True),
    ("/a{/,x}*", "/ax", True),
    ("/a{/,x}**", "/a/", False),
    ("/a/{,x}*", "/a/", False),
    ("/a/{/,x}b", "/a/b", True),
])
def test_star_after_alternation_follows_each_branch(pattern, path, expected):
    assert compile_pattern(pattern).matches(path) is expected
    assert _reference_glob(pattern, path) is expected


def test_normalize_path_is_idempotent():
    rng = random.Random(77)
    segments = ["a", "bb", ".", "..", "", "c.d"]
    checked = 0
    for _ in range(2000):
        raw = "/" + "/".join(rng.choice(segments) for _ in range(rng.randint(0, 8)))
        if rng.random() < 0.3:
            raw += "/"
        try:
            once = normalize_path(raw)
        except PathError:
            continue
        checked += 1
        assert normalize_path(once) == once, raw
        assert "//" not in once and "/./" not in once
    assert checked > 300
