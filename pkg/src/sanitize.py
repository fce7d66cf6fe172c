import re

_UNSAFE = re.compile("[^a-zA-Z0-9]")


def sanitize_identifier(text: str) -> str:
    """
    Remove every character outside [a-zA-Z0-9].

    Use on user input before it is pasted into code or a command line:
    "speed ~ dist + system('whoami')" becomes "speeddistsystemwhoami".
    """
    return _UNSAFE.sub("", text)
