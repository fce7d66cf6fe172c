import random
import re
import string

from src.sanitize import sanitize_identifier


def test_sanitize_shell_injection():
    assert sanitize_identifier("speed ~ dist + system('whoami')") == "speeddistsystemwhoami"
    assert sanitize_identifier("") == ""
    assert sanitize_identifier("$(rm -rf /)") == "rmrf"


def test_sanitize_keeps_only_ascii_alphanumerics():
    rng = random.Random(3)
    alphabet = string.printable + "éß中\x00‮"
    allowed = set(string.ascii_letters + string.digits)
    for _ in range(10000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        cleaned = sanitize_identifier(text)
        assert set(cleaned) <= allowed
        assert cleaned == "".join(c for c in text if c in allowed)


def test_sanitize_is_idempotent():
    rng = random.Random(5)
    alphabet = string.printable + "éß中\x00‮"
    for _ in range(5000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
        cleaned = sanitize_identifier(text)
        assert sanitize_identifier(cleaned) == cleaned
        assert len(cleaned) <= len(text)
        assert re.fullmatch(r"[a-zA-Z0-9]*", cleaned)
