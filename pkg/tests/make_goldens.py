"""Regenerate tests/golden from the pinned CLI runs: python3 tests/make_goldens.py"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from cli_cases import CASES  # noqa: E402

from dynkit.cli import main  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"

if __name__ == "__main__":
    GOLDEN.mkdir(exist_ok=True)
    for name, argv in CASES.items():
        rc = main(argv + ["--out", str(GOLDEN / name)])
        print(f"{name}: exit {rc}")
