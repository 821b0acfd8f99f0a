"""Fused per-step kernels for the particle engine.

One pass over the population draws the keyed move/clock variates, updates
positions and budgets of non-crossing particles in place, and collects the
threshold crossings into preallocated buffers.  The keyed hashing matches
bbmlab.rng bit for bit (same splitmix64 chain, same float conversion), so a
run is deterministic for a given installation regardless of thread count or
batch split.

Compiled with numba when available (nogil, so batches thread in parallel);
otherwise a vectorized numpy fallback with identical semantics is used.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng as crng

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:               # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap(args[0]) if args and callable(args[0]) else wrap


_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0xD6E8FEB86659FD93)
_INV_2_53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi

_NSLOTS = crng.NSLOTS
_SLOT_MOVE = crng.SLOT_MOVE
_SLOT_MOVE2 = crng.SLOT_MOVE2
_SLOT_LT_BASE = crng.SLOT_LT_BASE

CANDIDATE_SIGMAS = 5.5
RHO_FLOOR = 1e-6

DENSITY_UNIFORM = 0
DENSITY_BUMP = 1


@njit(nogil=True, cache=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(nogil=True, cache=True, inline="always")
def _unif(sk, step, slot):
    raw = _mix(sk + _GAMMA * np.uint64(step * _NSLOTS + slot))
    return np.float64(raw >> np.uint64(11)) * _INV_2_53 + 0.5 * _INV_2_53


@njit(nogil=True, cache=True, inline="always")
def _normal(sk, step):
    u1 = _unif(sk, step, _SLOT_MOVE)
    u2 = _unif(sk, step, _SLOT_MOVE2)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


@njit(nogil=True, cache=True)
def step_atoms(pos, budget, sk, dt, step, locs, betas,
               cross_idx, cross_frac, cross_share):
    """One step for atomic rates on the line; returns the crossing count."""
    n = pos.shape[0]
    m = locs.shape[0]
    share = np.empty(m)
    nc = 0
    for i in range(n):
        dti = dt[i]
        sq = math.sqrt(dti)
        y = pos[i] + sq * _normal(sk[i], step)
        window = CANDIDATE_SIGMAS * sq
        dl = 0.0
        for j in range(m):
            a1 = pos[i] - locs[j]
            a2 = y - locs[j]
            sj = 0.0
            if (abs(a1) < window) or (abs(a2) < window) or (a1 * a2 < 0.0):
                u = _unif(sk[i], step, _SLOT_LT_BASE + j)
                c = abs(a1) + abs(a2)
                g = a1 - a2
                lt = math.sqrt(g * g - 2.0 * dti * math.log(u)) - c
                if lt > 0.0:
                    sj = betas[j] * lt
                    dl += sj
            share[j] = sj
        if dl >= budget[i]:
            cross_idx[nc] = i
            cross_frac[nc] = budget[i] / dl
            for j in range(m):
                cross_share[nc, j] = share[j]
            nc += 1
        else:
            budget[i] -= dl
            pos[i] = y
    return nc


@njit(nogil=False, cache=True)
def step_atoms_shell_scheme(pos, budget, sk, dt, step, locs, betas,
                            cross_idx, cross_frac, cross_share):
    """Cross-check scheme: eps-shell occupation instead of the exact law."""
    n = pos.shape[0]
    m = locs.shape[0]
    share = np.empty(m)
    nc = 0
    for i in range(n):
        dti = dt[i]
        sq = math.sqrt(dti)
        y = pos[i] + sq * _normal(sk[i], step)
        dl = 0.0
        for j in range(m):
            a1 = pos[i] - locs[j]
            a2 = y - locs[j]
            u1 = _unif(sk[i], step, _SLOT_LT_BASE + j)
            u2 = _unif(sk[i], step, _SLOT_LT_BASE + j + 8)
            zmid = math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)
            mid = 0.5 * (a1 + a2) + 0.5 * sq * zmid
            sj = betas[j] * (dti / (2.0 * sq)) if abs(mid) < sq else 0.0
            dl += sj
            share[j] = sj
        if dl >= budget[i]:
            cross_idx[nc] = i
            cross_frac[nc] = budget[i] / dl
            for j in range(m):
                cross_share[nc, j] = share[j]
            nc += 1
        else:
            budget[i] -= dl
            pos[i] = y
    return nc


@njit(nogil=True, cache=True)
def step_radial_shell(pos, budget, sk, dt, step, radius, beta, dim,
                      cross_idx, cross_frac, cross_share):
    """One step of the radial (Bessel-like) part with a shell clock at radius."""
    n = pos.shape[0]
    nc = 0
    for i in range(n):
        dti = dt[i]
        sq = math.sqrt(dti)
        drift = (dim - 1.0) / (2.0 * max(pos[i], sq)) * dti
        y = pos[i] + sq * _normal(sk[i], step) + drift
        if y < RHO_FLOOR:
            y = 2.0 * RHO_FLOOR - y
        a1 = pos[i] - radius
        a2 = y - radius
        dl = 0.0
        window = CANDIDATE_SIGMAS * sq
        if (abs(a1) < window) or (abs(a2) < window) or (a1 * a2 < 0.0):
            u = _unif(sk[i], step, _SLOT_LT_BASE)
            c = abs(a1) + abs(a2)
            g = a1 - a2
            lt = math.sqrt(g * g - 2.0 * dti * math.log(u)) - c
            if lt > 0.0:
                dl = beta * lt
        if dl >= budget[i]:
            cross_idx[nc] = i
            cross_frac[nc] = budget[i] / dl
            cross_share[nc, 0] = dl
            nc += 1
        else:
            budget[i] -= dl
            pos[i] = y
    return nc


@njit(nogil=True, cache=True, inline="always")
def _density_v(r, profile_id, amplitude, r0):
    s = abs(r) / r0
    if s > 1.0:
        return 0.0
    if profile_id == DENSITY_UNIFORM:
        return amplitude
    return amplitude * (1.0 - s * s)


@njit(nogil=True, cache=True)
def step_density(pos, budget, sk, dt, step, profile_id, amplitude, r0, dim,
                 cross_idx, cross_frac, cross_share):
    """One step with a bounded radial density clock (trapezoid increments).

    cross_share[:, 0] receives the step midpoint used as the branch site.
    """
    n = pos.shape[0]
    nc = 0
    for i in range(n):
        dti = dt[i]
        sq = math.sqrt(dti)
        y = pos[i] + sq * _normal(sk[i], step)
        if dim > 1:
            y += (dim - 1.0) / (2.0 * max(pos[i], sq)) * dti
            if y < RHO_FLOOR:
                y = 2.0 * RHO_FLOOR - y
        dl = 0.5 * (_density_v(pos[i], profile_id, amplitude, r0)
                    + _density_v(y, profile_id, amplitude, r0)) * dti
        if dl >= budget[i] and dl > 0.0:
            cross_idx[nc] = i
            cross_frac[nc] = budget[i] / dl
            cross_share[nc, 0] = 0.5 * (pos[i] + y)
            nc += 1
        else:
            budget[i] -= dl
            pos[i] = y
    return nc


# ---------------------------------------------------------------------------
# numpy fallback with identical keyed-draw semantics
# ---------------------------------------------------------------------------

def _np_step_atoms(pos, budget, sk, dt, step, locs, betas,
                   cross_idx, cross_frac, cross_share, scheme="bridge"):
    n = pos.size
    sq = np.sqrt(dt)
    y = pos + sq * crng.normal(sk, step)
    window = CANDIDATE_SIGMAS * sq
    dl = np.zeros(n)
    shares = np.zeros((n, len(locs)))
    for j, loc in enumerate(locs):
        a1 = pos - loc
        a2 = y - loc
        if scheme == "bridge":
            cand = (np.abs(a1) < window) | (np.abs(a2) < window) | (a1 * a2 < 0.0)
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                continue
            u = crng.uniform(sk[idx], step, _SLOT_LT_BASE + j)
            c = np.abs(a1[idx]) + np.abs(a2[idx])
            g = a1[idx] - a2[idx]
            dtv = dt[idx]
            lt = np.maximum(np.sqrt(g * g - 2.0 * dtv * np.log(u)) - c, 0.0)
            amt = betas[j] * lt
        else:
            zmid = crng.normal(sk, step, _SLOT_LT_BASE + j, _SLOT_LT_BASE + j + 8)
            mid = 0.5 * (a1 + a2) + 0.5 * sq * zmid
            amt = np.where(np.abs(mid) < sq, betas[j] * dt / (2.0 * sq), 0.0)
            idx = np.arange(n)
        dl[idx] += amt
        shares[idx, j] = amt
    crossed = dl >= budget
    cidx = np.flatnonzero(crossed)
    nc = cidx.size
    cross_idx[:nc] = cidx
    cross_frac[:nc] = budget[cidx] / dl[cidx]
    cross_share[:nc, :] = shares[cidx]
    keep = ~crossed
    budget[keep] -= dl[keep]
    pos[keep] = y[keep]
    return nc


def _np_step_radial_shell(pos, budget, sk, dt, step, radius, beta, dim,
                          cross_idx, cross_frac, cross_share):
    sq = np.sqrt(dt)
    drift = (dim - 1.0) / (2.0 * np.maximum(pos, sq)) * dt
    y = pos + sq * crng.normal(sk, step) + drift
    y = np.where(y < RHO_FLOOR, 2.0 * RHO_FLOOR - y, y)
    a1 = pos - radius
    a2 = y - radius
    window = CANDIDATE_SIGMAS * sq
    dl = np.zeros(pos.size)
    cand = (np.abs(a1) < window) | (np.abs(a2) < window) | (a1 * a2 < 0.0)
    idx = np.flatnonzero(cand)
    if idx.size:
        u = crng.uniform(sk[idx], step, _SLOT_LT_BASE)
        c = np.abs(a1[idx]) + np.abs(a2[idx])
        g = a1[idx] - a2[idx]
        lt = np.maximum(np.sqrt(g * g - 2.0 * dt[idx] * np.log(u)) - c, 0.0)
        dl[idx] = beta * lt
    crossed = dl >= budget
    cidx = np.flatnonzero(crossed)
    nc = cidx.size
    cross_idx[:nc] = cidx
    cross_frac[:nc] = budget[cidx] / dl[cidx]
    cross_share[:nc, 0] = dl[cidx]
    keep = ~crossed
    budget[keep] -= dl[keep]
    pos[keep] = y[keep]
    return nc


def _np_step_density(pos, budget, sk, dt, step, profile_id, amplitude, r0, dim,
                     cross_idx, cross_frac, cross_share):
    sq = np.sqrt(dt)
    y = pos + sq * crng.normal(sk, step)
    if dim > 1:
        y = y + (dim - 1.0) / (2.0 * np.maximum(pos, sq)) * dt
        y = np.where(y < RHO_FLOOR, 2.0 * RHO_FLOOR - y, y)
    v1 = np.where(np.abs(pos) <= r0,
                  amplitude if profile_id == DENSITY_UNIFORM else amplitude * (1.0 - (np.abs(pos) / r0) ** 2),
                  0.0)
    v2 = np.where(np.abs(y) <= r0,
                  amplitude if profile_id == DENSITY_UNIFORM else amplitude * (1.0 - (np.abs(y) / r0) ** 2),
                  0.0)
    dl = 0.5 * (v1 + v2) * dt
    crossed = (dl >= budget) & (dl > 0.0)
    cidx = np.flatnonzero(crossed)
    nc = cidx.size
    cross_idx[:nc] = cidx
    cross_frac[:nc] = budget[cidx] / dl[cidx]
    cross_share[:nc, 0] = 0.5 * (pos[cidx] + y[cidx])
    keep = ~crossed
    budget[keep] -= dl[keep]
    pos[keep] = y[keep]
    return nc


if not HAVE_NUMBA:               # pragma: no cover
    step_atoms = lambda *a: _np_step_atoms(*a)
    step_radial_shell = _np_step_radial_shell
    step_density = _np_step_density
    step_atoms_shell_scheme = lambda *a: _np_step_atoms(*a, scheme="shell")
