import os
import sys

YELLOW = "\033[93m"
GREEN = "\033[92m"
RED = "\033[91m"
ENDC = "\033[0m"


def color_enabled(stream=None):
    """True when stream (stderr by default) is a terminal and NO_COLOR is unset or empty."""
    stream = stream or sys.stderr
    if os.environ.get("NO_COLOR"):
        return False
    isatty = getattr(stream, "isatty", None)
    return bool(isatty and isatty())


def paint(text, color, enabled=None):
    """Wraps text in an ANSI color; enabled=None asks color_enabled()."""
    if enabled is None:
        enabled = color_enabled()
    if not enabled:
        return text
    return f"{color}{text}{ENDC}"
