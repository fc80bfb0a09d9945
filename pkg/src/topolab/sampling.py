"""Deterministic random design fields.

Uses the SplitMix64 mixing function so that a (seed, index) pair maps to the
same uniform variate on every platform and numpy version; the generators in
numpy.random make no such cross-version promise.  Sampled fields are projected
onto the volume constraint by repeated multiplicative rescaling with clamping.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

VOLUME_TOL = 1e-9
_MAX_RESCALE_ITERS = 10_000


def splitmix64_uniform(seed: int, n: int) -> np.ndarray:
    """n uniforms in [0, 1) from the SplitMix64 stream started at seed.

    Value k of the stream mixes the state seed + (k+1)*golden-gamma through
    two xor-shift-multiply rounds; the top 53 bits become the mantissa.
    """
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a uint64, got {seed}")
    if n < 0:
        raise ValueError(f"sample count must be nonnegative, got {n}")
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + _GOLDEN * (np.arange(1, n + 1, dtype=np.uint64))
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(float) / float(2**53)


def rescale_to_volume(
    rho: np.ndarray, volumes: np.ndarray, vf_target: float, tol: float = VOLUME_TOL
) -> np.ndarray:
    """Scale a field in [0, 1] until its volume fraction matches vf_target.

    Each pass multiplies by target/current and clamps to [0, 1]; clamping can
    undershoot the target, so the pass repeats until the relative volume error
    drops below tol.  Converges because the clamped volume is monotone in the
    scale factor.
    """
    if not 0.0 < vf_target < 1.0:
        raise ValueError(f"volume fraction must lie in (0, 1), got {vf_target}")
    rho = np.clip(np.asarray(rho, dtype=float), 0.0, 1.0)
    volumes = np.asarray(volumes, dtype=float)
    vtot = volumes.sum()
    for _ in range(_MAX_RESCALE_ITERS):
        vf = float(volumes @ rho) / vtot
        if abs(vf - vf_target) <= tol * vf_target:
            return rho
        if vf == 0.0:
            raise ValueError("cannot rescale an identically zero field")
        rho = np.clip(rho * (vf_target / vf), 0.0, 1.0)
    raise RuntimeError(
        f"volume rescaling did not converge to {vf_target} within "
        f"{_MAX_RESCALE_ITERS} passes"
    )


def random_feasible_field(
    n: int, vf_target: float, volumes: np.ndarray, seed: int
) -> np.ndarray:
    """Uniformly random densities rescaled to the exact volume fraction."""
    rho = splitmix64_uniform(seed, n)
    return rescale_to_volume(rho, volumes, vf_target)
