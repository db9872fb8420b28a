"""
Running the bundled scenarios
=============================

Each scenario writes one report per task and a summary; running the same
scenario twice gives byte-identical files.  The same runs are available
from the shell as ``pbe-lab run --scenario NAME --out DIR``.
"""

import tempfile
from pathlib import Path

from pbelab.scenario import bundled_scenarios, run_scenario, summary_text

with tempfile.TemporaryDirectory() as tmp:
    for name in bundled_scenarios():
        code, summary = run_scenario(name, Path(tmp) / name)
        print(f"== {name} (exit {code})")
        print(summary_text(summary).split("status:")[1].strip()[:600])
        print()
