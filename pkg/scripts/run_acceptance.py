"""Run the acceptance gate and print one PASS/FAIL line per criterion."""

import subprocess
import sys
from pathlib import Path

if __name__ == "__main__":
    test = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
    sys.exit(subprocess.call([sys.executable, str(test)]))
