#!/usr/bin/env python3
"""
LRE Estimator - Launcher Script

This script provides a convenient way to run the estimator from the project root.
It simply forwards all arguments to the main script in the lre-estimator folder.

Examples:
    python run-lre.py simulate --seed 7 --out sim
    python run-lre.py --env prod study --replications 10
    python run-lre.py --config custom_config.yml report results/summary.csv
"""

import subprocess
import sys
from pathlib import Path

if __name__ == "__main__":
    # Path to the main estimator script
    main_script = Path(__file__).parent / "lre-estimator" / "main.py"

    # Forward all arguments to the estimator script
    cmd = [sys.executable, str(main_script)] + sys.argv[1:]

    # Run the estimator script
    sys.exit(subprocess.call(cmd))
