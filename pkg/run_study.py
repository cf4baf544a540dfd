#!/usr/bin/env python3
"""
Curved Hu-Zhang - Study Runner

Thin wrapper around the curvedhz command line:

    python3 run_study.py study --chart circle --k 3 --m 2 --levels 4 --svg
    python3 run_study.py infsup --chart circle --k 3 --m 1 --levels 3 --initial-h 0.5
    python3 run_study.py geometry --chart circle --m-list 1,2,3 --levels 4
"""

import sys

from curvedhz.cli import main

if __name__ == "__main__":
    sys.exit(main())
