#!/usr/bin/env python3
"""
bohmflow - Main entry point

Simulates Schrodinger and no-quantum-potential dynamics, Bohmian
trajectories and coefficient-space Lyapunov spectra.
"""

import sys
from pathlib import Path

# Make the src package importable when run from a checkout
sys.path.insert(0, str(Path(__file__).parent))

from src.main import main

if __name__ == "__main__":
    sys.exit(main())
