#!/usr/bin/env python3
"""
genobin - Main Entry Point

Context binning, model clustering and adaptive coding for sequencing reads.
"""

import sys
from pathlib import Path

# Add src directory to Python path
current_dir = Path(__file__).parent
src_dir = current_dir / "src"
sys.path.insert(0, str(src_dir))

from src.cli.commands import main

if __name__ == "__main__":
    sys.exit(main())
