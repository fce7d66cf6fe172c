import pytest

from src.errors import ModeError
from src.policy.modes import AccessMode, AccessModeSet


@pytest.mark.parametrize("text,canonical", [
    ("r", "r"),
    ("rix", "rix"),
    ("ixr", "rix"),
    ("mrwix", "rwmix"),
    ("rmw", "rwm"),
    ("rr", "r"),
    ("px", "px"),
    ("rcs", "rcs"),
    ("", ""),
])
def test_parse_canonical(text, canonical):
    assert AccessModeSet.parse(text).canonical() == canonical


def test_unknown_letter_reports_offset():
    with pytest.raises(ModeError) as e:
        AccessModeSet.parse("rwq")
    assert e.value.offset == 2
    assert "'q'" in str(e.value)


def test_conflicting_exec_modes():
    with pytest.raises(ModeError, match="conflicting exec modes"):
        AccessModeSet.parse("rpxix")


def test_set_algebra():
    rw = AccessModeSet.parse("rw")
    r = AccessModeSet.parse("r")
    assert r.issubset(rw)
    assert not rw.issubset(r)
    assert rw.difference(r) == AccessModeSet.parse("w")
    assert r.union(AccessModeSet.parse("m")).canonical() == "rm"
    assert AccessMode.W in rw
    assert AccessMode.M not in rw
    assert list(AccessModeSet.parse("mix")) == [AccessMode.M, AccessMode.IX]


def test_exec_mode_and_truthiness():
    assert AccessModeSet.parse("rix").exec_mode == AccessMode.IX
    assert AccessModeSet.parse("rw").exec_mode is None
    assert not AccessModeSet()
    assert AccessModeSet.of(AccessMode.R, AccessMode.UX).canonical() == "rux"
