#!/usr/bin/env python3
"""Simulate branching clouds and check the population identities live.

Runs a modest ensemble (20k replicates) of the unit-atom model and compares
the growth, martingale and second-moment observables against the quadrature
oracles.  A picture of one replicate's positions over time lands next to this
script when matplotlib is importable.
"""

import math
import time
from pathlib import Path

import numpy as np

from bbmlab.measures import Atoms, BranchingModel
from bbmlab.rng import RngStream
from bbmlab.simulator import (many_to_one_oracle, martingale_moments_oracle,
                              run_ensemble, run_replicate, second_moment_oracle)
from bbmlab.spectral import principal_eigenvalue

model = BranchingModel(Atoms(((0.0, 1.0),)), (1.0,))
sd = principal_eigenvalue([(0.0, 1.0)], with_lambda2=False)

print("== ensemble vs oracles (20k replicates, dt = 1e-3) ==")
t0 = time.time()
res = run_ensemble(model, 0.0, [0.5, 1.0, 2.0], 1e-3, 20_000, seed=2024,
                   spectral=sd, threads=2)
print(f"  simulated in {time.time() - t0:.1f}s")
for ci, t in enumerate((0.5, 1.0, 2.0)):
    z = res.Z[:, ci].astype(float)
    oracle = many_to_one_oracle(model, 0.0, t)
    se = z.std() / math.sqrt(z.size)
    print(f"  t={t}: mean Z = {z.mean():.4f} +- {se:.4f}, oracle {oracle:.4f} "
          f"({abs(z.mean() - oracle) / se:.2f} SE)")

m = res.M[:, 2]
print(f"  E[M_2] = {m.mean():.4f} vs h(0) = {float(sd.h(0.0)):.4f}")
_, m2 = martingale_moments_oracle(model, 0.0, 2.0, sd)
print(f"  E[M_2^2] = {(m**2).mean():.4f} vs oracle {m2:.4f}")
z2 = res.Z[:, 1].astype(float) ** 2
print(f"  E[Z_1^2] = {z2.mean():.3f} vs oracle {second_moment_oracle(model, 0.0, 1.0, 0.0):.3f}")

print("\n== one replicate, drawn step by step ==")
times = [0.5 * k for k in range(1, 13)]
obs = run_replicate(model, 0.0, 6.0, 2e-3, times, RngStream(7, 3), spectral=sd)
for o in obs[::3]:
    print(f"  t={o.t:4.1f}: Z={o.Z:4d}  L={o.L:6.3f}  M={o.M:6.3f}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from bbmlab.simulator import initial_system, step

    ps = initial_system(model, 0.0, RngStream(7, 3))
    snaps = []
    for k in range(1200):
        ps = step(ps, 5e-3, model, RngStream(7, 3))
        if k % 12 == 0:
            snaps.append((ps.t, ps.positions.copy()))
    fig, ax = plt.subplots(figsize=(7, 4))
    for t, xs in snaps:
        ax.plot(np.full(xs.size, t), xs, ".", ms=1.0, color="tab:blue", alpha=0.4)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.plot([0, 6], [0, 3], "r--", lw=1, label="speed line 0.5 t")
    ax.plot([0, 6], [0, -3], "r--", lw=1)
    ax.set(xlabel="t", ylabel="position", title="one branching cloud, atom at 0")
    ax.legend()
    out = Path(__file__).with_name("cloud.png")
    fig.savefig(out, dpi=120)
    print(f"\nwrote {out}")
except ImportError:
    print("\n(matplotlib not importable; skipped the picture)")
