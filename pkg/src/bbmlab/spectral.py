"""Principal eigenvalue and ground state of -Delta/2 - nu.

For atomic nu on the line the resolvent identity closes into the m x m system
h_i = sum_j G_alpha(x_i, x_j) w_j h_j, so the eigenvalue is the largest alpha
at which det(I - M(alpha)) vanishes and the ground state is a finite sum of
two-sided exponentials.  Everything downstream (L2 norm, tail masses, decay
envelope) is then exact.

The d = 3 spherical shell reduces to one transcendental equation via the
closed-form e^{-kr}/(2 pi r) resolvent; the ground state is sinh(kr)/r inside
the shell and e^{-kr}/r outside.

Finite-difference discretizations of the operator are kept as independent
oracles (they never share code with the resolvent route).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .kernels import solve_volterra

__all__ = [
    "SpectralData", "SubcriticalModelError", "principal_eigenvalue",
    "principal_eigenvalue_shell", "eigen_residual_report",
    "fd_eigenvalue_1d", "fd_eigenvalue_radial", "density_eigenvalue_fd",
    "density_threshold_beta_star",
]


class SubcriticalModelError(ValueError):
    """The potential admits no negative eigenvalue (assumption violated)."""


# ---------------------------------------------------------------------------
# ground-state profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomicGroundState:
    """h(x) = sum_j coef_j exp(-kappa |x - loc_j|) on the line."""

    locs: np.ndarray
    coefs: np.ndarray
    kappa: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = np.zeros_like(x)
        for a, c in zip(self.locs, self.coefs):
            vals = vals + c * np.exp(-self.kappa * np.abs(x - a))
        return float(vals) if vals.shape == () else vals

    def l2_norm_sq(self) -> float:
        k = self.kappa
        total = 0.0
        for ai, ci in zip(self.locs, self.coefs):
            for aj, cj in zip(self.locs, self.coefs):
                D = abs(ai - aj)
                total += ci * cj * math.exp(-k * D) * (D + 1.0 / k)
        return total

    def integral_right(self, R: float) -> float:
        """int_R^inf h(y) dy, exact piecewise form."""
        k = self.kappa
        total = 0.0
        for a, c in zip(self.locs, self.coefs):
            if R >= a:
                total += c * math.exp(-k * (R - a)) / k
            else:
                total += c * (2.0 - math.exp(-k * (a - R))) / k
        return total

    def mass_beyond(self, R: float) -> float:
        """int_{|y| > R} h(y) dy."""
        if R <= 0.0:
            return self.l1_norm()
        mirror = AtomicGroundState(-self.locs, self.coefs, self.kappa)
        return self.integral_right(R) + mirror.integral_right(R)

    def log_mass_beyond(self, R: float) -> float:
        """log of mass_beyond, exact beyond the outer atoms (underflow-safe)."""
        if R < float(np.max(np.abs(self.locs))):
            return math.log(self.mass_beyond(R))
        k = self.kappa
        terms = np.concatenate([k * self.locs, -k * self.locs])
        coefs = np.concatenate([self.coefs, self.coefs])
        peak = float(np.max(terms))
        return math.log(np.sum(coefs * np.exp(terms - peak)) / k) + peak - k * R

    def log_integral_right(self, R: float) -> float:
        """log of int_R^inf h, exact for R beyond the rightmost atom."""
        if R < float(np.max(self.locs)):
            return math.log(self.integral_right(R))
        k = self.kappa
        peak = float(np.max(k * self.locs))
        return math.log(np.sum(self.coefs * np.exp(k * self.locs - peak)) / k) + peak - k * R

    def l1_norm(self) -> float:
        return float(np.sum(self.coefs)) * 2.0 / self.kappa


@dataclass(frozen=True)
class ShellGroundState:
    """Radial h in d = 3: C_in sinh(k r)/r inside, C_out e^{-k r}/r outside."""

    radius: float
    c_in: float
    c_out: float
    kappa: float

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        k = self.kappa
        small = r < 1e-12
        rs = np.where(small, 1.0, r)
        inside = self.c_in * np.sinh(k * rs) / rs
        outside = self.c_out * np.exp(-k * rs) / rs
        vals = np.where(r <= self.radius, inside, outside)
        vals = np.where(small, self.c_in * k, vals)
        return float(vals) if vals.shape == () else vals

    def l2_norm_sq(self) -> float:
        k, R = self.kappa, self.radius
        inner = self.c_in ** 2 * (math.sinh(2 * k * R) / (4 * k) - R / 2.0)
        outer = self.c_out ** 2 * math.exp(-2 * k * R) / (2 * k)
        return 4.0 * math.pi * (inner + outer)

    def mass_beyond(self, R: float) -> float:
        """int_{|y| > R} h(y) dy over R^3."""
        k, Rs = self.kappa, self.radius
        R = max(R, 0.0)
        if R >= Rs:
            return 4.0 * math.pi * self.c_out * math.exp(-k * R) * (R / k + 1.0 / k ** 2)
        outer = 4.0 * math.pi * self.c_out * math.exp(-k * Rs) * (Rs / k + 1.0 / k ** 2)

        def anti(r):
            return r * math.cosh(k * r) / k - math.sinh(k * r) / k ** 2

        return outer + 4.0 * math.pi * self.c_in * (anti(Rs) - anti(R))

    def log_mass_beyond(self, R: float) -> float:
        """log of mass_beyond, underflow-safe for R beyond the shell."""
        k, Rs = self.kappa, self.radius
        if R < Rs:
            return math.log(self.mass_beyond(R))
        return math.log(4.0 * math.pi * self.c_out * (R / k + 1.0 / k ** 2)) - k * R

    def l1_norm(self) -> float:
        return self.mass_beyond(0.0)


# ---------------------------------------------------------------------------
# spectral data bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralData:
    """Principal eigenvalue, L2-normalized ground state and derived exacts."""

    d: int
    lam: float
    profile: AtomicGroundState | ShellGroundState
    h_at_support: np.ndarray
    l2_norm_residual: float
    envelope: tuple[float, float]
    lambda2_diag: float = float("nan")

    @property
    def kappa(self) -> float:
        """Decay rate sqrt(-2 lambda)."""
        return math.sqrt(-2.0 * self.lam)

    @property
    def sqrt_m2l(self) -> float:
        return self.kappa

    @property
    def speed(self) -> float:
        """Linear front speed sqrt(-lambda/2)."""
        return math.sqrt(-self.lam / 2.0)

    def h(self, x):
        return self.profile(x)

    def mass_beyond(self, R: float) -> float:
        return self.profile.mass_beyond(R)

    def mass_right(self, R: float) -> float:
        if self.d != 1:
            raise ValueError("one-sided mass defined in d = 1 only")
        return self.profile.integral_right(R)

    def l1_norm(self) -> float:
        return self.profile.l1_norm()

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "lambda": self.lam,
            "sqrt_minus_2lambda": self.kappa,
            "h_at_support": [float(v) for v in np.atleast_1d(self.h_at_support)],
            "l2_norm_residual": self.l2_norm_residual,
            "envelope_c1": self.envelope[0],
            "envelope_c2": self.envelope[1],
            "lambda2_diag": None if math.isnan(self.lambda2_diag) else self.lambda2_diag,
        }


# ---------------------------------------------------------------------------
# atomic solver (d = 1)
# ---------------------------------------------------------------------------

def _resolvent_matrix(alpha: float, locs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    s = math.sqrt(2.0 * alpha)
    D = np.abs(locs[:, None] - locs[None, :])
    return np.exp(-s * D) / s * weights[None, :]


def _det_gap(alpha: float, locs, weights) -> float:
    M = _resolvent_matrix(alpha, locs, weights)
    return float(np.linalg.det(np.eye(len(locs)) - M))


def _envelope_1d(profile: AtomicGroundState) -> tuple[float, float]:
    # h(x) e^{kappa |x|} over |x| >= 1; exactly constant beyond the outer atoms
    k = profile.kappa
    lo = min(-1.0, float(np.min(profile.locs)) - 1e-9)
    hi = max(1.0, float(np.max(profile.locs)) + 1e-9)
    xs = np.concatenate([np.linspace(lo, -1.0, 400), np.linspace(1.0, hi, 400)])
    vals = profile(xs) * np.exp(k * np.abs(xs))
    right_const = float(np.sum(profile.coefs * np.exp(k * profile.locs)))
    left_const = float(np.sum(profile.coefs * np.exp(-k * profile.locs)))
    allv = np.concatenate([vals, [right_const, left_const]])
    return float(np.min(allv)), float(np.max(allv))


def _l2_residual_quad(profile, d: int) -> float:
    k = profile.kappa
    if d == 1:
        lo = float(np.min(profile.locs)); hi = float(np.max(profile.locs))
        trunc = hi + 40.0 / k
        val, _ = quad(lambda x: profile(x) ** 2, lo - 40.0 / k, trunc, limit=400)
        # analytic exponential tails beyond truncation
        right = float(np.sum(profile.coefs * np.exp(k * profile.locs))) ** 2 * math.exp(-2 * k * trunc) / (2 * k)
        left = float(np.sum(profile.coefs * np.exp(-k * profile.locs))) ** 2 * math.exp(-2 * k * (trunc)) / (2 * k)
        return abs(math.sqrt(val + right + left) - 1.0)
    trunc = profile.radius + 40.0 / k
    val, _ = quad(lambda r: 4.0 * math.pi * r * r * profile(r) ** 2, 0.0, trunc, limit=400)
    tail = 4.0 * math.pi * profile.c_out ** 2 * math.exp(-2 * k * trunc) / (2 * k)
    return abs(math.sqrt(val + tail) - 1.0)


def _lambda2_fit(locs, weights, lam: float, h0sq: float) -> float:
    """Fitted decay rate of e^{lam t} p_t^nu(x0,x0) - h(x0)^2 (diagnostic only)."""
    x0 = float(locs[np.argmax(weights)])
    try:
        sol = solve_volterra(list(zip(locs, weights)), x0, 8.0, 192, check=False)
    except Exception:
        return float("nan")
    idx = [i for i in range(len(sol.grid)) if sol.grid[i] >= 2.0]
    ts, resid = [], []
    for i in idx[:: max(1, len(idx) // 24)]:
        t = sol.grid[i]
        r = math.exp(lam * t) * sol.kernel_at(x0, i) - h0sq
        if r > 1e-14:
            ts.append(t)
            resid.append(math.log(r))
    if len(ts) < 4:
        return float("nan")
    slope = np.polyfit(ts, resid, 1)[0]
    return lam - slope if slope < 0 else float("nan")


def principal_eigenvalue(nu_atoms: Sequence[tuple[float, float]],
                         with_lambda2: bool = True) -> SpectralData:
    """Spectral data for a signed atomic potential nu on the line.

    nu_atoms are (location, signed weight) pairs with positive total positive
    part.  Raises SubcriticalModelError when no negative eigenvalue exists in
    the bracket (1e-8, alpha_max).
    """
    locs = np.array([a for a, _ in nu_atoms], dtype=float)
    weights = np.array([w for _, w in nu_atoms], dtype=float)
    if np.sum(weights[weights > 0]) <= 0.0:
        raise SubcriticalModelError("no negative eigenvalue: positive part of nu vanishes")

    wsum = float(np.sum(np.abs(weights)))
    alpha_hi = max(1.0, wsum ** 2)      # ensures spectral radius < 1 at the top
    alpha_lo = 1e-8

    # largest root of det(I - M(alpha)): scan down a log grid for a sign change
    grid = np.geomspace(alpha_hi, alpha_lo, 600)
    dets = np.array([_det_gap(a, locs, weights) for a in grid])
    flips = np.flatnonzero(dets[:-1] * dets[1:] <= 0.0)
    if len(flips) == 0:
        raise SubcriticalModelError("no negative eigenvalue: det(I - M(alpha)) has no root")
    i = int(flips[0])                       # first flip from the top = largest root
    bracket = (float(grid[i + 1]), float(grid[i]))

    alpha_star = brentq(lambda a: _det_gap(a, locs, weights), bracket[0], bracket[1],
                        xtol=1e-300, rtol=8.9e-16, maxiter=200)
    lam = -alpha_star
    kappa = math.sqrt(2.0 * alpha_star)

    M = _resolvent_matrix(alpha_star, locs, weights)
    _, _, vh = np.linalg.svd(np.eye(len(locs)) - M)
    v = vh[-1]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    if np.any(v <= 0.0):
        raise SubcriticalModelError("ground-state vector is not strictly positive")

    coefs = weights * v / kappa
    raw = AtomicGroundState(locs=locs, coefs=coefs, kappa=kappa)
    scale = 1.0 / math.sqrt(raw.l2_norm_sq())
    profile = AtomicGroundState(locs=locs, coefs=coefs * scale, kappa=kappa)
    h_at = profile(locs)

    sd = SpectralData(
        d=1, lam=lam, profile=profile, h_at_support=np.atleast_1d(h_at),
        l2_norm_residual=_l2_residual_quad(profile, 1),
        envelope=_envelope_1d(profile),
        lambda2_diag=_lambda2_fit(locs, weights, lam, float(np.atleast_1d(h_at)[0] ** 2))
        if with_lambda2 else float("nan"),
    )
    return sd


# ---------------------------------------------------------------------------
# spherical shell (d = 3)
# ---------------------------------------------------------------------------

def principal_eigenvalue_shell(radius: float, beta: float, p2: float, d: int = 3) -> SpectralData:
    """Spectral data for nu = (2 p2 - 1) beta * (surface measure at |x| = radius).

    Only d = 3 has the elementary resolvent; subcritical shells
    ((2p-1) beta R <= 1/2) raise SubcriticalModelError.
    """
    if d != 3:
        raise ValueError("shell eigenvalue implemented for d = 3 only")
    w = (2.0 * p2 - 1.0) * beta
    if w * radius <= (d - 2) / 2.0:
        raise SubcriticalModelError(
            f"subcritical shell: (2p-1)*beta*R = {w * radius:.6g} <= {(d - 2) / 2.0}")

    # consistency equation w (1 - e^{-2 k R}) = k, largest positive root
    f = lambda k: w * (1.0 - math.exp(-2.0 * k * radius)) - k
    k_hi = w + 1.0
    k_lo = 1e-12
    kappa = brentq(f, k_lo, k_hi, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    lam = -kappa ** 2 / 2.0

    c_in = 2.0 * w * radius * math.exp(-kappa * radius) / kappa
    c_out = 2.0 * w * radius * math.sinh(kappa * radius) / kappa
    raw = ShellGroundState(radius=radius, c_in=c_in, c_out=c_out, kappa=kappa)
    scale = 1.0 / math.sqrt(raw.l2_norm_sq())
    profile = ShellGroundState(radius=radius, c_in=c_in * scale, c_out=c_out * scale, kappa=kappa)

    # envelope of h(r) r e^{kappa r} over r >= 1 (constant beyond the shell)
    rs = np.linspace(1.0, max(1.0, radius), 400)
    vals = profile(rs) * rs * np.exp(kappa * rs)
    allv = np.concatenate([vals, [profile.c_out]])
    envelope = (float(np.min(allv)), float(np.max(allv)))

    return SpectralData(
        d=3, lam=lam, profile=profile, h_at_support=np.atleast_1d(profile(radius)),
        l2_norm_residual=_l2_residual_quad(profile, 3), envelope=envelope,
    )


# ---------------------------------------------------------------------------
# eigen-identity residuals via the Volterra oracle
# ---------------------------------------------------------------------------

def eigen_residual_report(sd: SpectralData, nu_atoms: Sequence[tuple[float, float]],
                          times: Sequence[float] = (0.5, 1.0, 2.0),
                          points: Sequence[float] | None = None, N: int = 384) -> dict:
    """Residuals |e^{lam t} (p_t^nu h)(x) / h(x) - 1| checked by quadrature."""
    from .kernels import gauss_twosided_exp

    if sd.d != 1:
        raise ValueError("residual report uses the d = 1 Volterra oracle")
    locs = np.array([a for a, _ in nu_atoms], dtype=float)
    if points is None:
        points = sorted({0.0, *[float(a) for a in locs]})
    prof: AtomicGroundState = sd.profile

    def action_at(point):
        def act(u):
            u = np.asarray(u, dtype=float)
            out = np.zeros_like(u)
            zero = u <= 0.0
            out[zero] = prof(point)
            if np.any(~zero):
                up = u[~zero]
                out[~zero] = sum(c * gauss_twosided_exp(point, up, prof.kappa, b)
                                 for c, b in zip(prof.coefs, prof.locs))
            return out
        return act

    out = {}
    for x in points:
        sol = solve_volterra(list(nu_atoms), float(x), max(times), N, check=False)
        free_act = action_at(float(x))
        atom_acts = [action_at(float(a)) for a in locs]
        for t in times:
            n = int(np.argmin(np.abs(sol.grid - t)))
            t_eff = sol.grid[n]
            val = sol.smooth_functional(free_act, lambda j, u: atom_acts[j](u), n)
            out[(float(x), float(t))] = abs(math.exp(sd.lam * t_eff) * val / prof(x) - 1.0)
    return out


# ---------------------------------------------------------------------------
# finite-difference oracles (independent discretization route)
# ---------------------------------------------------------------------------

def fd_eigenvalue_1d(potential: Callable[[np.ndarray], np.ndarray],
                     lo: float, hi: float, mesh: float) -> float:
    """Smallest eigenvalue of -(1/2) u'' - V(x) u on [lo, hi], Dirichlet ends."""
    n = int(round((hi - lo) / mesh)) - 1
    xs = lo + mesh * np.arange(1, n + 1)
    diag = 1.0 / mesh ** 2 - potential(xs)
    off = np.full(n - 1, -0.5 / mesh ** 2)
    vals = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0), eigvals_only=True)
    return float(vals[0])


def fd_eigenvalue_atoms(nu_atoms: Sequence[tuple[float, float]],
                        lo: float = -40.0, hi: float = 41.0, mesh: float = 2.0 ** -10) -> float:
    """FD oracle with each atom smeared over its nearest grid cell (w/mesh)."""
    n = int(round((hi - lo) / mesh)) - 1

    def V(xs):
        v = np.zeros_like(xs)
        for a, w in nu_atoms:
            j = int(np.argmin(np.abs(xs - a)))
            v[j] += w / mesh
        return v

    return fd_eigenvalue_1d(V, lo, hi, mesh)


def fd_eigenvalue_radial(radius: float, w: float, hi: float = 60.0,
                         mesh: float = 2.0 ** -10) -> float:
    """d = 3 radial oracle: -(1/2) u'' - w delta_R u on (0, hi), u = r h."""
    return fd_eigenvalue_atoms([(radius, w)], lo=0.0, hi=hi, mesh=mesh)


def density_eigenvalue_fd(v_profile: Callable[[np.ndarray], np.ndarray], r0: float,
                          p2: float, d: int = 1, box: float = 60.0,
                          mesh: float = 2.0 ** -8) -> float:
    """lambda for nu = (2 p2 - 1) V(x) dx by finite differences (d = 1)."""
    if d != 1:
        raise NotImplementedError("density FD oracle implemented for d = 1")
    q = 2.0 * p2 - 1.0
    return fd_eigenvalue_1d(lambda xs: q * v_profile(np.abs(xs)), -box, box, mesh)


def density_threshold_beta_star(shape: Callable[[np.ndarray], np.ndarray], r0: float,
                                p2: float = 1.0, lo: float = 1e-3, hi: float = 50.0,
                                mesh: float = 2.0 ** -8, tol: float = 1e-3) -> float:
    """Bisection for the amplitude beta_* where lambda crosses 0 (d = 1 density)."""

    def lam_of(beta):
        return density_eigenvalue_fd(lambda r: beta * shape(r), r0, p2, mesh=mesh)

    lam_hi = lam_of(hi)
    if lam_hi >= 0.0:
        raise SubcriticalModelError("no supercritical amplitude in the bracket")
    a, b = lo, hi
    while lam_of(a) < 0.0:
        a /= 4.0
        if a < 1e-8:
            return a
    while b - a > tol * max(1.0, a):
        mid = 0.5 * (a + b)
        if lam_of(mid) < 0.0:
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)
