import csv
import subprocess
import sys
from pathlib import Path

import pytest

SCRIPTS = Path(__file__).resolve().parent.parent / "scripts"


@pytest.mark.parametrize("name, args, rows", [
    ("qstar_convergence.py", ["--levels", "1", "--lambdas", "0", "1"], 2),
    ("penalty_study.py", ["--level", "1"], 7),
    ("torsion_rectangles.py", ["--aspects", "1", "--levels", "1", "2"], 2),
    ("rod_equilibrium_study.py", ["--deltas", "1e-3", "--nodes", "50"], 1),
])
def test_script_runs(tmp_path, name, args, rows):
    out = tmp_path / "r.csv"
    subprocess.run([sys.executable, str(SCRIPTS / name), *args, "--out", str(out)], check=True,
                   capture_output=True, text=True)
    with open(out, newline="") as fh:
        assert len(list(csv.DictReader(fh))) == rows
