"""The batch front-end, driven from Python.

Each subcommand reads one JSON config and writes CSV/JSON artifacts into the
output directory; the return value is the process exit code.
"""

import json
import tempfile
from pathlib import Path

from degcontrol.cli import main

config = Path(__file__).parent / "configs" / "planted.json"
out = Path(tempfile.mkdtemp(prefix="degcontrol-"))

# %% Forward solve: trajectory.csv plus summary.json
print("solve ->", main(["solve", "--config", str(config), "--out", str(out / "solve")]))
summary = json.loads((out / "solve" / "summary.json").read_text())
print("sup", summary["norms"]["sup"], "bound", summary["bounds"]["sup_bound"])

# %% Optimization with certificate
print("optimize ->", main(["optimize", "--config", str(config), "--out", str(out / "opt")]))
cert = json.loads((out / "opt" / "certification.json").read_text())
print("converged", cert["converged"], "residual", cert["stationarity_residual"])
print("gamma_hat", cert["certification"]["growth_probe"]["gamma_hat"])

# %% Alpha sweep across the threshold
print("sweep ->", main(["sweep", "--config", str(config), "--out", str(out / "sweep"), "--sweep", "alpha=5,15,30"]))
print((out / "sweep" / "sweep.csv").read_text())
print("artifacts in", out)
