"""Counter-based random number generation.

Every variate consumed by the particle system is a pure function of the key
tuple (master seed, replicate index, particle lineage id, step index, slot).
Nothing is stateful, so replicates are order-independent and a run is bitwise
reproducible under any batch split or thread schedule.

The mixing function is splitmix64 (Steele/Lea/Flood finalizer), applied to a
per-particle stream key plus a step/slot counter.  All operations are plain
uint64 numpy arithmetic and vectorize over particle arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = np.uint64
_GAMMA = _U64(0x9E3779B97F4A7C15)   # golden-ratio increment
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)

# Slot layout inside one step.  NSLOTS bounds how many distinct draws one
# particle may make per step; local-time slots are indexed per atom.
SLOT_MOVE = 0
SLOT_BRANCH = 1
SLOT_WHICH_ATOM = 2
SLOT_THRESHOLD = 3
SLOT_MOVE2 = 4          # second uniform of the Box-Muller pair
SLOT_LT_BASE = 5
NSLOTS = 24

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0    # 2^-53


def mix64(z):
    """splitmix64 finalizer; uint64 scalar or array in, same out."""
    z = np.asarray(z, dtype=_U64)
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


def stream_key(seed: int, replicate, lineage):
    """Per-particle stream key; hashed once, then cheap per-step draws."""
    with np.errstate(over="ignore"):
        k = mix64(_U64(seed) * _GAMMA + _U64(0xD6E8FEB86659FD93))
        k = mix64(k + _GAMMA * np.asarray(replicate, dtype=_U64))
        k = mix64(k + _GAMMA * np.asarray(lineage, dtype=_U64))
    return k


def _raw(stream, step: int, slot: int):
    with np.errstate(over="ignore"):
        ctr = _U64(int(step) * NSLOTS + slot)
        return mix64(stream + _GAMMA * ctr)


def uniform(stream, step: int, slot: int):
    """U(0,1) open on both ends (safe under log)."""
    return (_raw(stream, step, slot) >> _U64(11)).astype(np.float64) * _INV_2_53 + 0.5 * _INV_2_53


def exponential(stream, step: int, slot: int):
    return -np.log(uniform(stream, step, slot))


def normal(stream, step: int, slot: int = SLOT_MOVE, slot2: int = SLOT_MOVE2):
    """One standard normal per stream element (Box-Muller, cosine branch)."""
    u1 = uniform(stream, step, slot)
    u2 = uniform(stream, step, slot2)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@dataclass(frozen=True)
class RngStream:
    """Handle identifying one replicate's key space.

    The particle lineage and step index complete the key at draw time, so the
    handle itself carries no mutable state.
    """

    seed: int
    replicate: int = 0

    def particle_stream(self, lineage):
        return stream_key(self.seed, self.replicate, lineage)

    def uniform(self, lineage, step: int, slot: int):
        return uniform(self.particle_stream(lineage), step, slot)

    def normal(self, lineage, step: int):
        return normal(self.particle_stream(lineage), step)

    def exponential(self, lineage, step: int, slot: int = SLOT_THRESHOLD):
        return exponential(self.particle_stream(lineage), step, slot)
