"""Deterministic per-trajectory seed derivation and noise-stream layout.

Seed splitting (documented contract, fixed for reproducibility):

    s0 = splitmix64(master_seed)
    s1 = splitmix64(s0 XOR (hypothesis + 0x9E3779B97F4A7C15))
    seed_i = splitmix64(s1 XOR trajectory_index)

where splitmix64 is the standard finalizer
(Steele/Lea/Flood Vigna constants).  ``seed_i`` feeds
numpy.random.PCG64, so trajectory #i can be re-run in isolation.

Per-trajectory stream layout (fixed order, consumed blockwise):

    1. n_steps uniforms in [0,1)          -- the per-step jump draws
    2. n_steps x n_channels standard normals, row-major, i.e. per step
       the channel noises in channel order

Sweeps derive an independent sub-master seed per value index with the
same mixing function keyed by 0xB5297A4D6C9C2B45.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_PHI = 0x9E3779B97F4A7C15
_SWEEP_KEY = 0xB5297A4D6C9C2B45


def splitmix64(x: int) -> int:
    """One splitmix64 finalization round of x (mod 2^64)."""
    x = (x + _PHI) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def derive_trajectory_seed(master_seed: int, hypothesis: int, index: int) -> int:
    """64-bit per-trajectory seed: split(master_seed, hypothesis, index)."""
    s0 = splitmix64(master_seed & _MASK)
    s1 = splitmix64(s0 ^ ((hypothesis + _PHI) & _MASK))
    return splitmix64(s1 ^ (index & _MASK))


def derive_sweep_seed(master_seed: int, value_index: int) -> int:
    """Independent sub-master seed for sweep point #value_index."""
    s0 = splitmix64(master_seed & _MASK)
    return splitmix64(s0 ^ ((_SWEEP_KEY + value_index) & _MASK))


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def trajectory_draws(seed: int, n_steps: int, n_channels: int, dt: float):
    """Pre-generate the documented noise stream: (uniforms, dW) with dW ~ N(0, dt)."""
    rng = make_generator(seed)
    u = rng.random(n_steps)
    dW = rng.standard_normal((n_steps, n_channels)) * np.sqrt(dt)
    return u, dW
