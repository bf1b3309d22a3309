"""Run a small experiment through the command line entry point.

Writes a config, runs ``treevoronoi simulate`` twice with different thread
counts and checks that the CSV outputs agree byte for byte.

    python3 demos/run_experiment.py
"""

import tempfile
from pathlib import Path

from treevoronoi.cli import main

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg = tmp / "uniqueness.cfg"
    cfg.write_text(
        "# local uniqueness at two intensities\n"
        "estimator=local_uniqueness d=3 k=2\n"
        "lambda=0.3,0.03 p=0.8 R=1\n"
        "replicas=50 seed=11\n"
    )
    outs = []
    for threads in (1, 4):
        out = tmp / f"threads{threads}"
        assert main(["simulate", "--config", str(cfg), "--threads", str(threads), "--out-dir", str(out)]) == 0
        outs.append((out / "local_uniqueness-seed11.csv").read_text())
    print(outs[0])
    print("identical across thread counts:", outs[0] == outs[1])

main(["oracle", "sphere-size", "--d", "3", "--k", "2", "--q", "6"])
main(["oracle", "threshold-radius", "--d", "3", "--k", "2", "--lambda", "0.01"])
