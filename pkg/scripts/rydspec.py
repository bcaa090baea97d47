#!/usr/bin/env python3
"""
Command-line entry point for rydspec spectra, maps, error signals, noise fits and n-scans.

Run `python scripts/rydspec.py --help` for the subcommands.
"""

import sys
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
