import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbmlab.fronts import FrontSpec
from bbmlab.simulator import EnsembleResult, run_ensemble
from bbmlab.stats import (ecdf_noise_floor, estimate_tail, gumbel_mixture_test,
                          median_with_se, speed_and_centring_fit, wilson_interval,
                          yaglom_front_count)


@given(hits=st.integers(0, 1000), extra=st.integers(0, 1000))
@settings(max_examples=200, deadline=None)
def test_wilson_interval_contains_phat(hits, extra):
    n = hits + extra
    lo, hi = wilson_interval(hits, n)
    assert 0.0 <= lo <= hi <= 1.0
    if n > 0:
        assert lo <= hits / n <= hi


def test_wilson_coverage_calibration():
    # empirical coverage of the 95% interval stays >= 93% on known coins
    rng = np.random.default_rng(2024)
    n, trials = 400, 2000
    for p in (0.05, 0.3, 0.7):
        covered = 0
        draws = rng.binomial(n, p, size=trials)
        for h in draws:
            lo, hi = wilson_interval(int(h), n)
            covered += lo <= p <= hi
        assert covered / trials >= 0.93


def test_median_with_se_consistency():
    rng = np.random.default_rng(7)
    x = rng.normal(3.0, 2.0, size=20_000)
    med, se = median_with_se(x)
    assert abs(med - 3.0) < 4 * se
    # asymptotic SE of a normal median: sqrt(pi/2) sigma / sqrt(n)
    assert abs(se / (math.sqrt(math.pi / 2) * 2.0 / math.sqrt(x.size)) - 1) < 0.2


def _tiny_ensemble(unit_atom_model, unit_atom_spectral, fronts, t_list, n=4000,
                   seed=71, dt=5e-3):
    return run_ensemble(unit_atom_model, 0.0, t_list, dt, n, seed=seed,
                        spectral=unit_atom_spectral, fronts=fronts, threads=2)


def test_estimate_tail_negative_front_is_certain(unit_atom_model, unit_atom_spectral,
                                                 unit_atom_constants):
    front = FrontSpec(kind="R1", shift=-5.0)
    ens = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (front,), [0.5])
    te = estimate_tail(ens, front, unit_atom_spectral, unit_atom_constants, 0.5)
    assert te.front_value < 0
    assert te.phat == 1.0
    assert te.regime_too_early


def test_estimate_tail_fields(unit_atom_model, unit_atom_spectral, unit_atom_constants):
    front = FrontSpec(kind="R2", delta=0.9)
    ens = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (front,), [2.0])
    te = estimate_tail(ens, front, unit_atom_spectral, unit_atom_constants, 2.0)
    assert 0.0 <= te.phat <= 1.0
    assert te.wilson[0] <= te.phat <= te.wilson[1]
    assert te.hits <= te.n
    assert not te.graded               # eta(2) is far above the 0.1 gate


def test_gumbel_mixture_curves_are_cdfs(unit_atom_model, unit_atom_spectral,
                                        unit_atom_constants):
    ens = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (), [1.5, 3.0])
    fit = gumbel_mixture_test(ens, unit_atom_spectral, unit_atom_constants, 3.0,
                              T_proxy=1.5)
    assert np.all(np.diff(fit.empirical) >= 0)
    assert np.all(np.diff(fit.mixture) >= 0)
    assert np.all((0 <= fit.empirical) & (fit.empirical <= 1))
    assert np.all((0 <= fit.mixture) & (fit.mixture <= 1))
    assert 0.0 <= fit.D <= 1.0


def test_gumbel_kappa_tail_bound(unit_atom_model, unit_atom_spectral, unit_atom_constants):
    # at kappa = 8/kappa_rate both curves are within c_* e^{-8} h(x0) of 1
    sd, c = unit_atom_spectral, unit_atom_constants
    ens = _tiny_ensemble(unit_atom_model, sd, (), [1.5, 3.0], n=8000)
    fit = gumbel_mixture_test(ens, sd, c, 3.0, T_proxy=1.5)
    kap = 8.0 / sd.kappa
    bound = c.c_star * math.exp(-sd.kappa * kap) * float(sd.h(0.0))
    idx = int(np.argmin(np.abs(fit.kappa_grid - kap)))
    assert 1.0 - fit.mixture[idx] <= bound + 1e-12
    assert 1.0 - fit.empirical[idx] < 1e-2


def test_gumbel_mixture_rejects_mismatched_ensembles(unit_atom_model, unit_atom_spectral,
                                                     unit_atom_constants):
    e1 = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (), [1.0, 2.0], n=200, seed=1)
    e2 = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (), [1.0, 2.0], n=200, seed=2)
    with pytest.raises(ValueError):
        gumbel_mixture_test(e1, unit_atom_spectral, unit_atom_constants, 2.0,
                            T_proxy=1.0, ens_M=e2)
    with pytest.raises(ValueError):
        gumbel_mixture_test(e1, unit_atom_spectral, unit_atom_constants, 2.0,
                            T_proxy=0.7)


def test_mixture_proxy_stability_smoke(unit_atom_model, unit_atom_spectral,
                                       unit_atom_constants):
    # pre-asymptotic smoke version of the M_{2T} stability property; the
    # tight noise-floor check runs at acceptance scale (t = 15, 1e5 reps)
    ens = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (), [1.5, 3.0, 6.0],
                         n=20_000, seed=83)
    f1 = gumbel_mixture_test(ens, unit_atom_spectral, unit_atom_constants, 6.0,
                             T_proxy=1.5)
    f2 = gumbel_mixture_test(ens, unit_atom_spectral, unit_atom_constants, 6.0,
                             T_proxy=3.0)
    assert abs(f1.D - f2.D) < 0.15
    assert f1.noise_floor == ecdf_noise_floor(ens.n_replicates)


def test_yaglom_conditional_law(unit_atom_model, unit_atom_spectral):
    front = FrontSpec(kind="R2", delta=0.9)
    ens = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (front,), [3.0], n=8000)
    yc = yaglom_front_count(ens, 0, 3.0)
    assert 0 not in yc.pmf                      # k = 0 cannot appear
    assert abs(sum(yc.pmf.values()) - 1.0) < 1e-12
    assert yc.p_one_wilson[0] <= yc.p_one <= yc.p_one_wilson[1]


def test_yaglom_inconclusive_flag(unit_atom_model, unit_atom_spectral):
    front = FrontSpec(kind="R2", delta=0.99)     # nearly no hits this early
    ens = _tiny_ensemble(unit_atom_model, unit_atom_spectral, (front,), [6.0], n=100)
    yc = yaglom_front_count(ens, 0, 6.0)
    assert yc.inconclusive


def test_speed_fit_recovers_synthetic_law():
    rng = np.random.default_rng(5)
    ts = np.array([10.0, 15.0, 20.0, 25.0, 30.0])
    R, C = 4000, len(ts)
    L = 0.5 * ts + 0.0 * np.log(ts) + rng.normal(0, 0.4, size=(R, C))
    ens = EnsembleResult(checkpoints=ts, front_values=np.zeros((C, 0)),
                         Z=np.ones((R, C), dtype=np.int64), L=L, R=L,
                         M=np.ones((R, C)), Y=np.zeros((R, C)),
                         ZR=np.zeros((R, C, 0), dtype=np.int64),
                         e0=np.full(R, np.nan))
    fit = speed_and_centring_fit(ens)
    assert abs(fit.slope - 0.5) < 2 * fit.slope_se
    assert abs(fit.log_coef) < 2.5 * fit.log_coef_se


def test_speed_fit_needs_four_points():
    ts = np.array([1.0, 2.0, 3.0])
    ens = EnsembleResult(checkpoints=ts, front_values=np.zeros((3, 0)),
                         Z=np.ones((10, 3), dtype=np.int64), L=np.ones((10, 3)),
                         R=np.ones((10, 3)), M=np.ones((10, 3)), Y=np.zeros((10, 3)),
                         ZR=np.zeros((10, 3, 0), dtype=np.int64),
                         e0=np.full(10, np.nan))
    with pytest.raises(ValueError):
        speed_and_centring_fit(ens)
