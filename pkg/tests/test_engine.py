import random
from dataclasses import replace

import pytest

from src.audit.record import ALLOWED, DENIED
from src.engine.context import UNCONFINED, change_hat, change_profile, confined, revert_hat
from src.engine.decision import (
    AccessRequest,
    Operation,
    check_access,
    check_capability,
    exec_transition,
    set_mode,
)
from src.errors import ExecTransitionError, HatError, HatTokenMismatch, ProfileNotFound, TransitionDenied
from src.policy.modes import AccessMode, AccessModeSet
from src.policy.pattern import compile_pattern
from src.policy.profile import FileRule, Profile, ProfileSet


def _allowed(ctx, profiles, operation, path, modes=None):
    modes = AccessModeSet.parse(modes) if modes else None
    return check_access(ctx, profiles, AccessRequest.of(operation, path, modes)).effective


@pytest.mark.parametrize("profile,operation,path,modes,expected", [
    ("testprofile", "read", "/etc/group", None, True),
    ("testprofile", "read", "/etc/passwd", None, False),
    ("r-base", "read", "/etc/passwd", None, False),
    ("r-base", "read", "/etc/hosts", None, True),
    ("r-base", "write", "/home/jeroen/test", None, False),
    ("r-base", "write", "/tmp/x/test.pdf", "rw", True),
    ("r-base", "list", "/tmp", None, False),
    ("r-base", "list", "/etc/R", None, True),
    ("r-base", "mmap", "/usr/lib/R/lib/libR.so", None, True),
    ("r-base", "mmap", "/tmp/evil.so", None, False),
    ("r-compile", "mmap", "/tmp/evil.so", None, True),
    ("r-base", "exec", "/bin/ls", None, True),
    ("r-base", "exec", "/sbin/reboot", None, False),
    ("r-base", "read", "/proc/cpuinfo", None, True),
    ("r-user", "write", "/home/jeroen/R/x", None, True),
    ("r-user", "write", "/root/R/x", None, True),
    ("r-user", "read", "/home/jeroen/Documents/x", None, False),
    ("r-user", "list", "/home/jeroen", None, True),
])
def test_decision_table(corpus, profile, operation, path, modes, expected):
    assert _allowed(confined(profile), corpus, operation, path, modes) is expected


def test_unconfined_allows_everything(corpus):
    assert _allowed(UNCONFINED, corpus, "write", "/etc/passwd")


def test_denial_carries_audit_record(corpus):
    decision = check_access(confined("r-base"), corpus, AccessRequest.of("read", "/etc/passwd"))
    assert not decision.allowed
    assert decision.matched == ()
    assert decision.missing_modes == "r"
    record = decision.audit
    assert (record.profile, record.hat, record.operation, record.path) == ("r-base", None, "read", "/etc/passwd")
    assert (record.decision, record.effective) == (DENIED, DENIED)


def test_partial_grant_reports_missing_modes(corpus):
    decision = check_access(confined("r-base"), corpus,
                            AccessRequest.of("write", "/tmp/x.so", AccessModeSet.parse("rwm")))
    assert decision.missing == AccessMode.M
    assert decision.granted & AccessMode.R


def test_exec_request_satisfied_by_any_exec_mode(parse):
    profiles = parse("/usr/bin/R {\n}\nprofile p {\n  /usr/bin/R px,\n}\n")
    assert _allowed(confined("p"), profiles, "exec", "/usr/bin/R")


def test_complain_mode(corpus):
    complaining = set_mode(corpus, "r-base", "complain")
    decision = check_access(confined("r-base"), complaining, AccessRequest.of("read", "/etc/passwd"))
    assert not decision.allowed
    assert decision.effective
    assert decision.audit.is_complain
    assert decision.audit.effective == ALLOWED
    assert corpus.get("r-base").mode.value == "enforce"


def test_disabled_mode(corpus):
    disabled = set_mode(corpus, "r-base", "disabled")
    decision = check_access(confined("r-base"), disabled, AccessRequest.of("read", "/etc/passwd"))
    assert decision.allowed and decision.audit is None


def test_set_mode_errors(corpus):
    with pytest.raises(ProfileNotFound):
        set_mode(corpus, "nope", "complain")
    with pytest.raises(ValueError):
        set_mode(corpus, "r-base", "audit")


def test_hat_transcript(corpus):
    ctx = confined("testprofile")
    assert _allowed(ctx, corpus, "read", "/etc/group")

    in_hat = change_hat(ctx, corpus, "testhat", 12345)
    assert in_hat.label == "testprofile^testhat"
    assert not _allowed(in_hat, corpus, "read", "/etc/group")
    assert not _allowed(in_hat, corpus, "read", "/etc/passwd")
    assert check_access(in_hat, corpus, AccessRequest.of("read", "/etc/passwd")).audit.hat == "testhat"

    back = revert_hat(in_hat, 12345)
    assert back == ctx
    assert _allowed(back, corpus, "read", "/etc/group")


def test_wrong_hat_token_poisons(corpus):
    in_hat = change_hat(confined("testprofile"), corpus, "testhat", 12345)
    with pytest.raises(HatTokenMismatch) as e:
        revert_hat(in_hat, 99999)
    poisoned = e.value.context
    assert poisoned.poisoned
    assert not _allowed(poisoned, corpus, "read", "/etc/group")
    assert not check_capability(poisoned, corpus, "kill")
    with pytest.raises(HatTokenMismatch):
        revert_hat(poisoned, 12345)
    with pytest.raises(TransitionDenied):
        change_profile(poisoned, corpus, "testprofile")


def test_hat_errors(corpus):
    with pytest.raises(HatError):
        change_hat(UNCONFINED, corpus, "testhat", 1)
    with pytest.raises(HatError):
        change_hat(confined("testprofile"), corpus, "nohat", 1)
    with pytest.raises(HatError):
        change_hat(confined("testprofile"), corpus, "testhat", None)
    with pytest.raises(HatError):
        revert_hat(confined("testprofile"), 1)
    in_hat = change_hat(confined("testprofile"), corpus, "testhat", 1)
    with pytest.raises(HatError):
        change_hat(in_hat, corpus, "testhat", 2)


def test_hat_inherits_profile_mode(corpus):
    complaining = set_mode(corpus, "testprofile", "complain")
    in_hat = change_hat(confined("testprofile"), complaining, "testhat", "token")
    assert _allowed(in_hat, complaining, "read", "/etc/passwd")


def test_hat_token_repr_is_hidden(corpus):
    in_hat = change_hat(confined("testprofile"), corpus, "testhat", "s3cret")
    assert "s3cret" not in repr(in_hat)


def test_change_profile_requires_directive(corpus):
    with pytest.raises(TransitionDenied) as e:
        change_profile(confined("r-base"), corpus, "r-user")
    assert "r-base" in str(e.value) and "change_profile -> r-user" in str(e.value)

    permitted = corpus.with_profile(replace(corpus.get("r-base"), transitions=("r-user",)))
    assert change_profile(confined("r-base"), permitted, "r-user") == confined("r-user")
    assert change_profile(UNCONFINED, corpus, "r-user") == confined("r-user")
    with pytest.raises(ProfileNotFound):
        change_profile(UNCONFINED, corpus, "nope")


def test_capabilities(corpus):
    assert check_capability(confined("r-user"), corpus, "kill")
    assert not check_capability(confined("r-base"), corpus, "kill")
    assert check_capability(confined("r-base"), set_mode(corpus, "r-base", "complain"), "kill")
    assert check_capability(UNCONFINED, corpus, "sys_admin")


@pytest.fixture
def launcher(parse, corpus):
    text = "\n".join([
        "profile launcher {",
        "  /usr/bin/R px,",
        "  /opt/tool ux,",
        "  /opt/hats/worker cs,",
        "  /bin/* ix,",
        "  /opt/mixed/** ix,",
        "  /opt/mixed/run px,",
        "  ^worker {",
        "  }",
        "}",
    ]) + "\n"
    return corpus.merge(parse(text))


def test_exec_transitions(launcher):
    ctx = confined("launcher")
    assert exec_transition(ctx, launcher, "/bin/ls") == ctx
    assert exec_transition(ctx, launcher, "/usr/bin/R") == confined("/usr/bin/R")
    assert exec_transition(ctx, launcher, "/opt/tool") == UNCONFINED
    hatted = exec_transition(ctx, launcher, "/opt/hats/worker")
    assert hatted.active_hat == "worker"
    assert hatted.hat_token is not None


@pytest.mark.parametrize("path,fragment", [
    ("/opt/mixed/run", "conflicting exec modes"),
    ("/sbin/reboot", "no exec permission"),
])
def test_exec_transition_errors(launcher, path, fragment):
    with pytest.raises(ExecTransitionError, match=fragment):
        exec_transition(confined("launcher"), launcher, path)


def test_exec_from_unconfined_stays_unconfined(corpus):
    assert exec_transition(UNCONFINED, corpus, "/usr/bin/R") == UNCONFINED


def test_access_request_validation():
    with pytest.raises(ValueError):
        AccessRequest("/tmp/", AccessModeSet.parse("w"), Operation.LIST)
    with pytest.raises(ValueError):
        AccessRequest("/bin/ls", AccessModeSet.parse("r"), Operation.EXEC)
    with pytest.raises(ValueError):
        AccessRequest("/tmp/x", AccessModeSet())
    assert AccessRequest.of("list", "/tmp").path == "/tmp/"
    assert AccessRequest.of("read", "/etc/../etc/./passwd").path == "/etc/passwd"


def _segments_match(pattern, path):
    if not pattern:
        return not path
    head = pattern[0]
    if head == "**":
        return any(_segments_match(pattern[1:], path[k:]) for k in range(1, len(path) + 1))
    if not path:
        return False
    if head == "*" or head == path[0]:
        return _segments_match(pattern[1:], path[1:])
    return False


def test_decisions_match_rule_union_oracle():
    rng = random.Random(2024)
    simple = [AccessMode.R, AccessMode.W, AccessMode.M]
    paths = [["a"], ["b"], ["c"]]
    for _ in range(2):
        paths = paths + [p + [s] for p in paths for s in "abc" if len(p) < 3]
    paths = [list(p) for p in sorted({tuple(p) for p in paths})]
    cases = 0
    for _ in range(300):
        rules = []
        for _ in range(rng.randint(0, 4)):
            segments = [rng.choice(["a", "b", "*", "**"]) for _ in range(rng.randint(1, 3))]
            flags = AccessMode(0)
            while not flags:
                for mode in simple:
                    if rng.random() < 0.5:
                        flags |= mode
            rules.append((segments, FileRule(compile_pattern("/" + "/".join(segments)), AccessModeSet(flags))))
        profiles = ProfileSet({"p": Profile("p", rules=tuple(rule for _, rule in rules))})
        for path in paths:
            requested = AccessMode(0)
            while not requested:
                for mode in simple:
                    if rng.random() < 0.4:
                        requested |= mode
            granted = AccessMode(0)
            for segments, rule in rules:
                if _segments_match(segments, path):
                    granted |= rule.modes.flags
            expected = (requested & ~granted) == AccessMode(0)
            request = AccessRequest("/" + "/".join(path), AccessModeSet(requested))
            assert check_access(confined("p"), profiles, request).allowed is expected
            cases += 1
    assert cases >= 10000
