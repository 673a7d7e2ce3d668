#!/usr/bin/env python3
"""
cuefuse entry point.

HOW TO RUN:
  uv run python scripts/cuefuse.py --help
  uv run python scripts/cuefuse.py synth --scenes 2 --seed 7 --out data/smoke
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from pipeline.cli import main


if __name__ == "__main__":
    main()
