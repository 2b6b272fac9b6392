"""Small shared helpers: thread caps and atomic file output."""

from __future__ import annotations

import os
import tempfile


def max_workers() -> int:
    """Internal thread cap from DYNKIT_THREADS (default: CPU count, at least 1)."""
    raw = os.environ.get("DYNKIT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)


def atomic_write(path: str, text: str) -> None:
    """Write text to path via a temporary file and rename."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
