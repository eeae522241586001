"""
Regenerate every experiment output and the comparison table in one go.

    python demos/replicate_all.py [out_dir]
"""

import sys
from pathlib import Path

from epmconnector.cli import main


def replicate(out: Path) -> int:
    code = main(["--out", str(out), "run"])
    if code:
        return code
    return main(["--out", str(out), "report"])


if __name__ == "__main__":
    sys.exit(replicate(Path(sys.argv[1] if len(sys.argv) > 1 else "out")))
