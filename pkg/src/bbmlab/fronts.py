"""Centring fronts, the tail weight eta(t), and the limit constants.

All constants reduce to finite sums (atoms, d = 1) or elementary integrals
(spherical shell, d = 3), so two genuinely independent routes are available:
the closed forms here and angular quadrature kept for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralData

__all__ = [
    "CorrectionSpec", "FrontSpec", "LimitConstants", "FrontAdmissibilityError",
    "constants", "eta", "predicted_tail", "surface_factor_quad",
]


class FrontAdmissibilityError(ValueError):
    """Front parameters violate the admissible window."""


@dataclass(frozen=True)
class CorrectionSpec:
    """Named slowly varying correction, kept serializable.

    zero: 0; loglog: coef * log log t; sqrtlog: coef * sqrt(log t).
    Both named families are o(log t) and, with coef > 0, diverge.
    """

    name: str = "zero"
    coef: float = 0.0

    def __post_init__(self):
        if self.name not in ("zero", "loglog", "sqrtlog"):
            raise FrontAdmissibilityError(f"unknown correction preset {self.name!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "zero":
            out = np.zeros_like(t)
        elif self.name == "loglog":
            out = self.coef * np.log(np.log(np.maximum(t, math.e)))
        else:
            out = self.coef * np.sqrt(np.log(np.maximum(t, 1.0)))
        return float(out) if out.shape == () else out

    @property
    def diverges(self) -> bool:
        return self.name != "zero" and self.coef > 0.0

    def to_dict(self):
        return {"name": self.name, "coef": self.coef}


@dataclass(frozen=True)
class FrontSpec:
    """One of the three centring fronts.

    kind R1: speed * t + ((d-1)/(2 kappa)) log t + shift
    kind R2: delta * t + a(t), with delta strictly inside (speed, kappa)
    kind R3: speed * t + (gamma/(2 kappa)) log t + b(t), gamma >= d - 1
    side "abs" counts |x| > R(t); side "right" counts x > R(t) (d = 1).
    """

    kind: str
    shift: float = 0.0                    # R1 offset kappa in the paper's notation
    delta: float = 0.0                    # R2 linear rate
    gamma: float = 0.0                    # R3 log coefficient scale
    correction: CorrectionSpec = field(default_factory=CorrectionSpec)
    side: str = "abs"

    def __post_init__(self):
        if self.kind not in ("R1", "R2", "R3"):
            raise FrontAdmissibilityError(f"unknown front kind {self.kind!r}")
        if self.side not in ("abs", "right"):
            raise FrontAdmissibilityError(f"unknown side {self.side!r}")

    def validate(self, sd: SpectralData) -> None:
        if self.side == "right" and sd.d != 1:
            raise FrontAdmissibilityError("rightmost-particle fronts need d = 1")
        if self.kind == "R2":
            if not (sd.speed < self.delta < sd.kappa):
                raise FrontAdmissibilityError(
                    f"delta = {self.delta:.6g} outside ({sd.speed:.6g}, {sd.kappa:.6g})")
            if self.correction.name == "zero" and self.correction.coef != 0.0:
                raise FrontAdmissibilityError("zero correction takes coef 0")
        if self.kind == "R3":
            if self.gamma < sd.d - 1:
                raise FrontAdmissibilityError(
                    f"gamma = {self.gamma:.6g} below d - 1 = {sd.d - 1}")
            if self.gamma == sd.d - 1 and not self.correction.diverges:
                raise FrontAdmissibilityError(
                    "gamma = d - 1 requires a diverging correction b(t)")

    def value(self, t, sd: SpectralData):
        t = np.asarray(t, dtype=float)
        if self.kind == "R1":
            out = sd.speed * t + ((sd.d - 1) / (2.0 * sd.kappa)) * np.log(np.maximum(t, 1e-300)) \
                + self.shift
        elif self.kind == "R2":
            out = self.delta * t + self.correction(t)
        else:
            out = sd.speed * t + (self.gamma / (2.0 * sd.kappa)) * np.log(np.maximum(t, 1e-300)) \
                + self.correction(t)
        return float(out) if out.shape == () else out

    def to_dict(self):
        return {"kind": self.kind, "shift": self.shift, "delta": self.delta,
                "gamma": self.gamma, "correction": self.correction.to_dict(),
                "side": self.side}

    @staticmethod
    def from_dict(d: dict) -> "FrontSpec":
        corr = d.get("correction", {"name": "zero", "coef": 0.0})
        return FrontSpec(kind=d["kind"], shift=d.get("shift", 0.0), delta=d.get("delta", 0.0),
                         gamma=d.get("gamma", 0.0),
                         correction=CorrectionSpec(corr["name"], corr["coef"]),
                         side=d.get("side", "abs"))


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

def surface_factor_quad(kappa: float, z: float, d: int, n_nodes: int = 64,
                        hemisphere: int = 0) -> float:
    """int_Theta e^{kappa <theta, z e_1>} dtheta by Gauss-Legendre in the polar angle.

    hemisphere 0 integrates over the whole sphere, +1/-1 over theta_1 >< 0.
    In d = 1 the 'sphere' is the two-point set {-1, +1} with counting measure.
    """
    if d == 1:
        if hemisphere == 0:
            return math.exp(kappa * z) + math.exp(-kappa * z)
        return math.exp(hemisphere * kappa * z)
    nodes, wts = np.polynomial.legendre.leggauss(n_nodes)
    if hemisphere == 0:
        lo, hi = -1.0, 1.0
    elif hemisphere > 0:
        lo, hi = 0.0, 1.0
    else:
        lo, hi = -1.0, 0.0
    u = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    jac = 0.5 * (hi - lo)
    if d == 3:
        # dtheta = 2 pi du on the unit 2-sphere
        return float(2.0 * math.pi * jac * np.sum(wts * np.exp(kappa * z * u)))
    if d == 2:
        raise NotImplementedError("surface factor implemented for d in {1, 3}")
    raise NotImplementedError


@dataclass(frozen=True)
class LimitConstants:
    """c_d, c_*, and the one-sided/two-sided d = 1 constants."""

    d: int
    lam: float
    c_d: float
    c_star: float
    c_zero: float = float("nan")       # d = 1 rightmost constant
    c_two_sided: float = float("nan")  # d = 1 closed-form C0 (equals c_1)

    @property
    def kappa(self) -> float:
        return math.sqrt(-2.0 * self.lam)

    def to_dict(self):
        return {"d": self.d, "c_d": self.c_d, "c_star": self.c_star,
                "c_zero": None if math.isnan(self.c_zero) else self.c_zero,
                "c_two_sided": None if math.isnan(self.c_two_sided) else self.c_two_sided}


def _nu_pairs(sd: SpectralData, nu) -> list[tuple[float, float]]:
    return [(float(a), float(w)) for a, w in nu]


def constants(sd: SpectralData, nu, n_nodes: int = 64, use_quadrature: bool = False) -> LimitConstants:
    """Limit constants for the given spectral data.

    nu is the signed branching intensity: (location, weight) pairs in d = 1,
    or the signed weight per unit shell area in d = 3 (the shell geometry is
    read off sd.profile).  use_quadrature switches the surface factor to
    Gauss-Legendre quadrature, the independent route used in cross-checks.
    """
    k = sd.kappa
    if sd.d == 1:
        pairs = _nu_pairs(sd, nu)
        total = 0.0
        right = 0.0
        for a, w in pairs:
            total += w * surface_factor_quad(k, a, 1) * float(sd.h(a))
            right += w * math.exp(k * a) * float(sd.h(a))
        c_d = total / (k ** 2)
        c0 = right / (k ** 2)
        # (speed)^{(d-1)/2} = 1 in d = 1, so c_* coincides with c_1
        return LimitConstants(d=1, lam=sd.lam, c_d=c_d, c_star=c_d,
                              c_zero=c0, c_two_sided=c_d)
    if sd.d == 3:
        prof = sd.profile
        R = prof.radius
        w_per_area = nu if np.isscalar(nu) else float(nu[0][1])
        h_s = float(sd.h(R))
        if use_quadrature:
            fac = surface_factor_quad(k, R, 3, n_nodes)
        else:
            fac = 4.0 * math.pi * math.sinh(k * R) / (k * R)
        # c_3 = (kappa^{-1} / (2 pi)) * fac * h(R) * (w * 4 pi R^2)
        c_d = (1.0 / (k * 2.0 * math.pi)) * fac * h_s * w_per_area * 4.0 * math.pi * R ** 2
        c_star = c_d * sd.speed
        return LimitConstants(d=3, lam=sd.lam, c_d=c_d, c_star=c_star)
    raise NotImplementedError("constants implemented for d in {1, 3}")


def directional_constant(sd: SpectralData, nu, hemisphere: int) -> float:
    """c_{d,Theta} for the right/left hemisphere (d = 1) or half-sphere (d = 3)."""
    k = sd.kappa
    if sd.d == 1:
        pairs = _nu_pairs(sd, nu)
        return sum(w * math.exp(hemisphere * k * a) * float(sd.h(a)) for a, w in pairs) / k ** 2
    if sd.d == 3:
        prof = sd.profile
        R = prof.radius
        w_per_area = nu if np.isscalar(nu) else float(nu[0][1])
        fac = surface_factor_quad(k, R, 3, hemisphere=hemisphere)
        return (1.0 / (k * 2.0 * math.pi)) * fac * float(sd.h(R)) * w_per_area * 4.0 * math.pi * R ** 2
    raise NotImplementedError


# ---------------------------------------------------------------------------
# eta and tail predictions
# ---------------------------------------------------------------------------

def eta_log(sd: SpectralData, consts: LimitConstants, front: FrontSpec, t: float):
    """(log exact, log asymptotic) tail weight; safe at any exponential scale."""
    R = float(front.value(t, sd)) if t > 0 else 0.0
    if front.side == "right":
        log_mass = sd.profile.log_integral_right(R) if R > 0 else math.log(sd.mass_right(R))
        c = consts.c_zero
    else:
        log_mass = sd.profile.log_mass_beyond(R) if R > 0 else math.log(sd.l1_norm())
        c = consts.c_d
    log_exact = -sd.lam * t + log_mass
    if R <= 0.0:
        return log_exact, log_exact
    log_asym = math.log(c) + ((sd.d - 1) / 2.0) * math.log(R) - sd.lam * t - sd.kappa * R
    return log_exact, log_asym


def eta(sd: SpectralData, consts: LimitConstants, front: FrontSpec, t: float):
    """(exact, asymptotic) tail weight at time t.

    exact = e^{-lam t} int_{|y| > R(t)} h dy (one-sided for side="right");
    asymptotic = c R(t)^{(d-1)/2} e^{-lam t - kappa R(t)} with c = c_d or c_0.
    Values outside float range come back as 0/inf; use eta_log for ratios.
    """
    le, la = eta_log(sd, consts, front, t)
    clip = lambda v: math.exp(min(v, 709.0)) if v > -745.0 else 0.0
    return clip(le), clip(la)


def predicted_tail(sd: SpectralData, consts: LimitConstants, front: FrontSpec,
                   t: float, x) -> float:
    """First-moment tail asymptote at (t, x) for the admissible front.

    R2 fronts give c delta^{(d-1)/2} h(x) e^{(-lam - kappa delta) t}
    e^{-kappa a(t)} t^{(d-1)/2}; R3 fronts give the c_* h(x) e^{-kappa b(t)}
    t^{(d-1-gamma)/2} law; R1 fronts give the constant-level limit
    c_* e^{-kappa shift} h(x).  side="right" swaps in the one-sided constant.
    """
    front.validate(sd)
    k = sd.kappa
    hx = float(sd.h(x))
    right = front.side == "right"
    if front.kind == "R2":
        c = consts.c_zero if right else consts.c_d
        return c * front.delta ** ((sd.d - 1) / 2.0) * hx \
            * math.exp((-sd.lam - k * front.delta) * t) \
            * math.exp(-k * float(front.correction(t))) * t ** ((sd.d - 1) / 2.0)
    if front.kind == "R3":
        c = consts.c_zero if right else consts.c_d
        c = c * sd.speed ** ((sd.d - 1) / 2.0)
        return c * hx * math.exp(-k * float(front.correction(t))) \
            * t ** ((sd.d - 1 - front.gamma) / 2.0)
    c = consts.c_zero if right else consts.c_star
    return c * math.exp(-k * front.shift) * hx
