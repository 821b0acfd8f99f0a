"""Estimators turning replicate ensembles into verdicts on the limit laws.

Everything here is a pure function of recorded ensembles: tail-probability
estimates with Wilson intervals against the first-moment predictions, the
empirical law of the recentred maximum against its Gumbel mixture, the
conditional front-count distribution, and the speed/centring fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fronts import FrontSpec, LimitConstants, eta, predicted_tail
from .simulator import EnsembleResult
from .spectral import SpectralData

__all__ = [
    "TailEstimate", "GumbelMixtureFit", "YaglomCount", "SpeedFit",
    "wilson_interval", "median_with_se", "ecdf_noise_floor",
    "estimate_tail", "gumbel_mixture_test", "yaglom_front_count",
    "speed_and_centring_fit",
]

_Z95 = 1.959963984540054


def wilson_interval(hits: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0, 1.0
    phat = hits / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    # widen to the point estimate at the extremes so the interval contains phat
    return min(phat, max(0.0, center - half)), max(phat, min(1.0, center + half))


def median_with_se(samples: np.ndarray, z: float = _Z95) -> tuple[float, float]:
    """Sample median and an order-statistic standard error."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        return float("nan"), float("nan")
    med = float(np.median(x))
    if n < 8:
        return med, float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    half = z * math.sqrt(n) / 2.0
    lo = int(np.clip(math.floor(n / 2 - half), 0, n - 1))
    hi = int(np.clip(math.ceil(n / 2 + half), 0, n - 1))
    return med, float((x[hi] - x[lo]) / (2.0 * z))


def ecdf_noise_floor(n: int, alpha: float = 0.05) -> float:
    """Dvoretzky-Kiefer-Wolfowitz sup-norm band for an n-sample ECDF."""
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


# ---------------------------------------------------------------------------
# tail estimates (first moments and exceedance probabilities)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailEstimate:
    t: float
    front_value: float
    hits: int
    n: int
    phat: float
    wilson: tuple[float, float]
    oracle_m1: float
    prediction: float
    ratio: float                      # phat / prediction (nan if undefined)
    eta_exact: float
    graded: bool                      # eta < 0.1: comparison is meaningful
    regime_too_early: bool            # eta > 0.5


def estimate_tail(ens: EnsembleResult, front: FrontSpec, sd: SpectralData,
                  consts: LimitConstants, t: float, x0: float = 0.0,
                  oracle_m1: float = float("nan")) -> TailEstimate:
    """Exceedance estimate at checkpoint t with its Wilson interval.

    Hits are L_t > R(t) for two-sided fronts (R_t > R(t) for side="right"),
    which equals {Z_t^{R(t)} >= 1} whenever the front is positive; a negative
    front gives phat = 1 exactly since L_t >= 0 by convention.
    """
    ci = int(np.argmin(np.abs(ens.checkpoints - t)))
    tv = float(ens.checkpoints[ci])
    Rv = float(front.value(tv, sd))
    vals = ens.R[:, ci] if front.side == "right" else ens.L[:, ci]
    hits = int(np.sum(vals > Rv))
    n = ens.n_replicates
    phat = hits / n
    e_exact, _ = eta(sd, consts, front, tv)
    pred = predicted_tail(sd, consts, front, tv, x0)
    ratio = phat / pred if hits > 0 and pred > 0 else float("nan")
    return TailEstimate(t=tv, front_value=Rv, hits=hits, n=n, phat=phat,
                        wilson=wilson_interval(hits, n), oracle_m1=oracle_m1,
                        prediction=pred, ratio=ratio, eta_exact=e_exact,
                        graded=e_exact < 0.1, regime_too_early=e_exact > 0.5)


# ---------------------------------------------------------------------------
# Gumbel mixture comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GumbelMixtureFit:
    t: float
    T_proxy: float
    kappa_grid: np.ndarray
    empirical: np.ndarray            # P(Y_t <= kappa)
    mixture: np.ndarray              # E[exp(-c_* e^{-sqrt(-2 lam) kappa} M_T)]
    D: float                         # sup distance over the grid
    noise_floor: float


def gumbel_mixture_test(ens: EnsembleResult, sd: SpectralData, consts: LimitConstants,
                        t: float, T_proxy: float | None = None,
                        kappa_grid: np.ndarray | None = None,
                        ens_M: EnsembleResult | None = None) -> GumbelMixtureFit:
    """Sup distance between the ECDF of Y_t and the Gumbel-mixture prediction.

    The limiting martingale is proxied by M at T = t/2 (same replicates by
    default, which keeps the two curves coupled); ens_M may supply the proxy
    from a separate ensemble recorded with the same seed and model.
    """
    src = ens if ens_M is None else ens_M
    if ens_M is not None and ens_M.seed != ens.seed:
        raise ValueError("mixture proxy ensemble does not match (different seed)")
    T_proxy = t / 2.0 if T_proxy is None else T_proxy
    ci = int(np.argmin(np.abs(ens.checkpoints - t)))
    cm = int(np.argmin(np.abs(src.checkpoints - T_proxy)))
    if abs(src.checkpoints[cm] - T_proxy) > 1e-9:
        raise ValueError(f"no checkpoint at the martingale proxy time {T_proxy:g}")
    tv = float(ens.checkpoints[ci])
    Y = ens.Y[:, ci].copy()
    Y[ens.Z[:, ci] == 0] = -np.inf       # extinct runs sit below every level
    M = src.M[:, cm]
    k = sd.kappa
    if kappa_grid is None:
        kappa_grid = np.linspace(-4.0 / k, 8.0 / k, 121)
    emp = np.array([(Y <= kap).mean() for kap in kappa_grid])
    mix = np.array([np.mean(np.exp(-consts.c_star * math.exp(-k * kap) * M))
                    for kap in kappa_grid])
    D = float(np.max(np.abs(emp - mix)))
    return GumbelMixtureFit(t=tv, T_proxy=T_proxy, kappa_grid=kappa_grid,
                            empirical=emp, mixture=mix, D=D,
                            noise_floor=ecdf_noise_floor(ens.n_replicates))


# ---------------------------------------------------------------------------
# conditional front count (one particle beyond the front in the limit)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class YaglomCount:
    t: float
    front_value: float
    hits: int
    pmf: dict[int, float]             # conditional law of Z^R given >= 1
    p_one: float
    p_one_wilson: tuple[float, float]
    inconclusive: bool                # fewer than 50 hits


def yaglom_front_count(ens: EnsembleResult, front_index: int, t: float) -> YaglomCount:
    """Conditional distribution of the count beyond the front given a hit."""
    ci = int(np.argmin(np.abs(ens.checkpoints - t)))
    counts = ens.ZR[:, ci, front_index]
    hit = counts >= 1
    nh = int(hit.sum())
    if nh == 0:
        return YaglomCount(t=float(ens.checkpoints[ci]),
                           front_value=float(ens.front_values[ci, front_index]),
                           hits=0, pmf={}, p_one=float("nan"),
                           p_one_wilson=(0.0, 1.0), inconclusive=True)
    vals, freq = np.unique(counts[hit], return_counts=True)
    pmf = {int(v): float(f) / nh for v, f in zip(vals, freq)}
    ones = int(freq[vals == 1][0]) if np.any(vals == 1) else 0
    return YaglomCount(t=float(ens.checkpoints[ci]),
                       front_value=float(ens.front_values[ci, front_index]),
                       hits=nh, pmf=pmf, p_one=ones / nh,
                       p_one_wilson=wilson_interval(ones, nh), inconclusive=nh < 50)


# ---------------------------------------------------------------------------
# speed and centring fit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedFit:
    times: np.ndarray
    medians: np.ndarray
    median_ses: np.ndarray
    slope: float
    slope_se: float
    log_coef: float
    log_coef_se: float
    intercept: float


def speed_and_centring_fit(ens: EnsembleResult, checkpoints: Sequence[float] | None = None,
                           survivors_only: bool = True) -> SpeedFit:
    """Weighted least squares of the surviving-run median of L_t on (t, log t).

    Needs at least 4 ladder points; returns the linear speed and the log
    coefficient with their standard errors from the weighted normal equations.
    """
    ts = np.asarray(checkpoints if checkpoints is not None else ens.checkpoints, dtype=float)
    ts = ts[ts > 0]
    if ts.size < 4:
        raise ValueError("speed fit needs at least 4 ladder points")
    meds, ses = [], []
    for t in ts:
        ci = int(np.argmin(np.abs(ens.checkpoints - t)))
        vals = ens.L[:, ci]
        if survivors_only:
            vals = vals[ens.Z[:, ci] > 0]
        med, se = median_with_se(vals)
        meds.append(med)
        ses.append(se)
    meds = np.array(meds)
    ses = np.maximum(np.array(ses), 1e-12)
    X = np.column_stack([ts, np.log(ts), np.ones_like(ts)])
    W = 1.0 / ses ** 2
    XtW = X.T * W
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ meds)
    resid = meds - X @ beta
    dof = max(ts.size - 3, 1)
    scale = max(float(resid @ (W * resid)) / dof, 1.0)
    err = np.sqrt(np.diag(cov) * scale)
    return SpeedFit(times=ts, medians=meds, median_ses=ses,
                    slope=float(beta[0]), slope_se=float(err[0]),
                    log_coef=float(beta[1]), log_coef_se=float(err[1]),
                    intercept=float(beta[2]))
