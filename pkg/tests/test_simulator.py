import math

import numpy as np
import pytest

from bbmlab.fronts import FrontSpec, constants
from bbmlab.measures import Atoms, BranchingModel, Density, SphereShell
from bbmlab.rng import RngStream
from bbmlab.simulator import (CapExceeded, initial_system, many_to_one_oracle,
                              martingale_moments_oracle, run_ensemble, run_replicate,
                              second_moment_oracle, step)
from bbmlab.spectral import principal_eigenvalue, principal_eigenvalue_shell

from conftest import se_dev


def test_initial_state_observables(unit_atom_model, unit_atom_spectral):
    obs = run_replicate(unit_atom_model, 0.7, 1.0, 0.01, [0.0], RngStream(1, 0),
                        spectral=unit_atom_spectral)
    assert obs[0].Z == 1
    assert obs[0].L == 0.7
    assert abs(obs[0].M - float(unit_atom_spectral.h(0.7))) < 1e-12


def test_zero_density_never_branches():
    model = BranchingModel(Density(1, "uniform", 1e-300, 1.0), 1.0)
    res = run_ensemble(model, 0.0, [1.0, 3.0], 0.01, 50, seed=3)
    assert np.all(res.Z == 1)


def test_extinction_conventions():
    # p2 = 0: the first crossing kills the lone particle
    model = BranchingModel(Atoms(((0.0, 3.0),)), (0.0,))
    res = run_ensemble(model, 0.0, [2.0, 6.0], 0.01, 300, seed=5)
    died = res.Z[:, 1] == 0
    assert died.mean() > 0.9
    assert np.all(res.L[died, 1] == 0.0)
    assert np.all(np.isfinite(res.e0[died]))
    # once extinct, stays extinct
    assert np.all(res.Z[res.Z[:, 0] == 0, 1] == 0)


def test_population_nondecreasing_without_deaths(unit_atom_model, unit_atom_spectral):
    res = run_ensemble(unit_atom_model, 0.0, [0.5, 1.0, 1.5, 2.0], 0.005, 500, seed=7,
                       spectral=unit_atom_spectral)
    assert np.all(np.diff(res.Z, axis=1) >= 0)
    assert np.all(res.Z[:, 0] >= 1)


def test_many_to_one_small(unit_atom_model, unit_atom_spectral):
    res = run_ensemble(unit_atom_model, 0.0, [0.5, 1.0], 1e-3, 30_000, seed=11,
                       spectral=unit_atom_spectral, threads=2)
    for ci, t in enumerate((0.5, 1.0)):
        oracle = many_to_one_oracle(unit_atom_model, 0.0, t)
        assert se_dev(res.Z[:, ci].astype(float), oracle) < 3.0


def test_many_to_one_with_indicator_and_h(unit_atom_model, unit_atom_spectral):
    sd = unit_atom_spectral
    R = 1.0
    res = run_ensemble(unit_atom_model, 0.0, [1.0], 1e-3, 30_000, seed=13,
                       spectral=sd, fronts=(FrontSpec(kind="R1", shift=0.0),), threads=2)
    zr = res.ZR[:, 0, 0].astype(float)
    # the R1 front at t=1 sits at 0.5; check against the oracle at that radius
    oracle = many_to_one_oracle(unit_atom_model, 0.0, 1.0, R=0.5)
    assert se_dev(zr, oracle) < 3.0
    # f = h: E[Z_t(h)] = e^{-lam t} h(x0) exactly
    m = res.M[:, 0]
    assert se_dev(m, float(sd.h(0.0))) < 3.0


def test_critical_atom_unit_mean(critical_atom_model):
    res = run_ensemble(critical_atom_model, 0.0, [1.0], 1e-3, 30_000, seed=17, threads=2)
    assert se_dev(res.Z[:, 0].astype(float), 1.0) < 3.0
    assert np.isnan(res.M[:, 0]).all()


def test_martingale_mean_across_grid(unit_atom_model, unit_atom_spectral):
    res = run_ensemble(unit_atom_model, 0.3, [1.0, 2.0], 2e-3, 30_000, seed=19,
                       spectral=unit_atom_spectral, threads=2)
    h = float(unit_atom_spectral.h(0.3))
    assert se_dev(res.M[:, 0], h) < 3.0
    assert se_dev(res.M[:, 1], h) < 3.0


def test_run_replicate_matches_ensemble_bitwise(unit_atom_model, unit_atom_spectral):
    res = run_ensemble(unit_atom_model, 0.0, [0.5, 1.0], 0.01, 5, seed=23,
                       spectral=unit_atom_spectral,
                       fronts=(FrontSpec(kind="R2", delta=0.9),))
    for rep in range(5):
        obs = run_replicate(unit_atom_model, 0.0, 1.0, 0.01, [0.5, 1.0],
                            RngStream(23, rep), spectral=unit_atom_spectral,
                            fronts=(FrontSpec(kind="R2", delta=0.9),))
        for ci in range(2):
            assert obs[ci].Z == res.Z[rep, ci]
            assert obs[ci].L == res.L[rep, ci]
            assert obs[ci].M == res.M[rep, ci]
            assert obs[ci].ZR[0] == res.ZR[rep, ci, 0]


def test_determinism_across_threads_and_batches(unit_atom_model, unit_atom_spectral):
    kw = dict(spectral=unit_atom_spectral, fronts=(FrontSpec(kind="R2", delta=0.9),))
    r1 = run_ensemble(unit_atom_model, 0.0, [1.0, 2.0], 5e-3, 3000, seed=29, threads=1, **kw)
    r2 = run_ensemble(unit_atom_model, 0.0, [1.0, 2.0], 5e-3, 3000, seed=29, threads=4,
                      batch_target=700, **kw)
    for f in ("Z", "L", "R", "M", "Y", "ZR"):
        assert np.array_equal(getattr(r1, f), getattr(r2, f), equal_nan=True)


def test_step_halving_bias_within_noise(unit_atom_model, unit_atom_spectral):
    kw = dict(spectral=unit_atom_spectral, threads=2)
    a = run_ensemble(unit_atom_model, 0.0, [1.0], 2e-3, 40_000, seed=31, **kw)
    b = run_ensemble(unit_atom_model, 0.0, [1.0], 1e-3, 40_000, seed=37, **kw)
    za, zb = a.Z[:, 0].astype(float), b.Z[:, 0].astype(float)
    se = math.sqrt(za.var() / za.size + zb.var() / zb.size)
    assert abs(za.mean() - zb.mean()) < 2 * se


def test_population_cap_refusal(unit_atom_model, unit_atom_spectral):
    with pytest.raises(CapExceeded):
        run_ensemble(unit_atom_model, 0.0, [40.0], 0.01, 10, seed=1,
                     spectral=unit_atom_spectral, cap=1000)


def test_population_cap_runtime_abort_marks_partial(unit_atom_model, unit_atom_spectral):
    # per-replicate estimate passes the gate but the batch blows the cap live
    res = run_ensemble(unit_atom_model, 0.0, [1.0, 6.0], 0.01, 200, seed=61,
                       spectral=unit_atom_spectral, cap=300, batch_target=10_000)
    assert res.partial
    assert np.all(res.Z[:, 1] == -1)       # unfinished checkpoints are sentinels


def test_live_budgets_stay_positive(unit_atom_model):
    ps = initial_system(unit_atom_model, 0.0, RngStream(67, 0))
    for k in range(200):
        ps = step(ps, 0.01, unit_atom_model, RngStream(67, 0))
        if ps.size:
            assert np.all(ps.budgets > 0.0)


def test_single_step_api(unit_atom_model):
    ps = initial_system(unit_atom_model, 0.0, RngStream(41, 0))
    ps2 = step(ps, 0.01, unit_atom_model, RngStream(41, 0))
    assert ps2.t == 0.01 and ps2.step_index == 1
    assert ps2.size >= 1
    with pytest.raises(ValueError):
        step(ps, -0.1, unit_atom_model, RngStream(41, 0))


def test_shell_model_runs_and_grows():
    sd = principal_eigenvalue_shell(1.0, 1.0, 1.0)
    model = BranchingModel(SphereShell(3, 1.0, 1.0), 1.0)
    res = run_ensemble(model, 1.0, [2.0, 4.0], 2e-3, 4000, seed=43, spectral=sd, threads=2)
    assert np.all(res.pos_like if hasattr(res, 'pos_like') else res.Z >= 0)
    # positive radius observables and martingale mean close to h(1)
    assert np.all(res.L >= 0)
    assert se_dev(res.M[:, 1], float(sd.h(1.0))) < 3.5


def test_second_moment_oracle_examples(unit_atom_model, critical_atom_model,
                                       unit_atom_spectral):
    # R so large the tail hardly counts: second moment collapses to the first
    big = second_moment_oracle(unit_atom_model, 0.0, 1.0, 12.0, N=192)
    assert big < 1e-6
    # critical atom at R = 0: E[(Z_t^0)^2] = 1 + int p_s(0,0) beta [P_0(...)]^2 ds > 1
    crit = second_moment_oracle(critical_atom_model, 0.0, 1.0, 0.0, N=192)
    assert crit > 1.0
    res = run_ensemble(critical_atom_model, 0.0, [1.0], 1e-3, 30_000, seed=47, threads=2)
    z2 = res.Z[:, 0].astype(float) ** 2
    assert se_dev(z2, crit) < 3.0


def test_martingale_second_moment_oracle(unit_atom_model, unit_atom_spectral):
    m1, m2 = martingale_moments_oracle(unit_atom_model, 0.0, 2.0, unit_atom_spectral,
                                       N=256)
    assert abs(m1 - 1.0) < 1e-12
    assert m2 > m1 ** 2      # strictly positive variance
    res = run_ensemble(unit_atom_model, 0.0, [2.0], 1e-3, 30_000, seed=53,
                       spectral=unit_atom_spectral, threads=2)
    assert se_dev(res.M[:, 0] ** 2, m2) < 3.0


def test_paley_zygmund_sandwich(unit_atom_model, unit_atom_spectral):
    t, R = 1.0, 1.0
    m1 = many_to_one_oracle(unit_atom_model, 0.0, t, R)
    m2 = second_moment_oracle(unit_atom_model, 0.0, t, R, N=256)
    res = run_ensemble(unit_atom_model, 0.0, [t], 1e-3, 30_000, seed=59,
                       spectral=unit_atom_spectral, threads=2)
    hits = (res.L[:, 0] > R).astype(float)
    se = hits.std() / math.sqrt(hits.size)
    assert hits.mean() >= m1 * m1 / m2 - 3 * se
    assert hits.mean() <= m1 + 3 * se
