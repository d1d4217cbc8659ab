#!/usr/bin/env python3
"""Run the acceptance criteria outside pytest and print one line per criterion."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import test_acceptance as acc  # noqa: E402


def main() -> int:
    for name in sorted(n for n in dir(acc) if n.startswith("test_")):
        try:
            getattr(acc, name)()
        except AssertionError:
            pass
    for k in sorted(acc.RESULTS):
        print(acc.RESULTS[k])
    return 0 if all(line.startswith("[PASS]") for line in acc.RESULTS.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
