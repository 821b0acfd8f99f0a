#!/usr/bin/env python3
"""The d = 3 spherical-shell model, plus the config-driven pipeline.

Shows the shell criticality threshold, the radial ground state, and drives
the same experiment through the CLI entry points (validate / run / analyze /
report) that shell scripts would use.
"""

import json
import math
import tempfile
import time
from pathlib import Path

import numpy as np

from bbmlab.cli import main as bbmlab_main
from bbmlab.fronts import constants
from bbmlab.measures import BranchingModel, SphereShell
from bbmlab.simulator import run_ensemble
from bbmlab.spectral import (SubcriticalModelError, fd_eigenvalue_radial,
                             principal_eigenvalue_shell)

print("== criticality of the shell: (2p-1) beta R > 1/2 ==")
for p in (0.7, 0.76, 0.9, 1.0):
    try:
        sd = principal_eigenvalue_shell(1.0, 1.0, p)
        print(f"  p={p}: lambda = {sd.lam:.6f}")
    except SubcriticalModelError as e:
        print(f"  p={p}: {e}")

sd = principal_eigenvalue_shell(1.0, 1.0, 1.0)
print(f"\nradial FD oracle: {fd_eigenvalue_radial(1.0, 1.0):.8f} vs {sd.lam:.8f}")
c = constants(sd, 1.0)
print(f"c_3 = {c.c_d:.6f}, c_* = {c.c_star:.6f}")

print("\n== radial ensemble started on the shell ==")
model = BranchingModel(SphereShell(3, 1.0, 1.0), 1.0)
t0 = time.time()
res = run_ensemble(model, 1.0, [1.0, 2.0, 4.0], 2e-3, 5000, seed=5, spectral=sd,
                   threads=2)
for ci, t in enumerate((1.0, 2.0, 4.0)):
    m = res.M[:, ci]
    print(f"  t={t}: mean Z = {res.Z[:, ci].mean():7.3f}   "
          f"E[M] = {m.mean():.4f} (h(1) = {float(sd.h(1.0)):.4f})")
print(f"  ({time.time() - t0:.0f}s)")

print("\n== the same machinery through the CLI ==")
cfg = {
    "schema": 1,
    "model": {"kind": "atoms", "atoms": [{"loc": 0.0, "weight": 1.0, "p2": 1.0}]},
    "x0": 0.0, "horizon_t": 2.0, "checkpoints_t": [0.5, 1.0, 2.0], "dt": 0.005,
    "replicates": 2000, "seed": 12345,
    "fronts": [{"kind": "R2", "delta": 0.9,
                "correction": {"name": "zero", "coef": 0.0}, "side": "abs"}],
    "population_cap": 1e7, "scheme": "bridge",
}
with tempfile.TemporaryDirectory() as tmp:
    cfg_path = Path(tmp) / "smoke.json"
    cfg_path.write_text(json.dumps(cfg, indent=2))
    out = Path(tmp) / "results"
    spec_path = Path(tmp) / "analysis.json"
    spec_path.write_text(json.dumps({"analyses": [
        {"kind": "tail", "front": 0},
        {"kind": "yaglom", "front": 0},
        {"kind": "gumbel", "t": 2.0, "proxy_T": 1.0},
    ]}))
    for argv in (["validate", "--config", str(cfg_path)],
                 ["run", "--config", str(cfg_path), "--out", str(out), "--quiet"],
                 ["analyze", str(out), "--spec", str(spec_path)],
                 ["report", str(out)]):
        print(f"\n$ bbmlab {' '.join(argv)}")
        code = bbmlab_main(argv)
        assert code == 0, f"exit {code}"
