"""Counter-based per-pixel random draws.

Each pixel's uniform is a pure function of (seed, view_id, u, v) through a
splitmix64-style avalanche, so draws are independent of raster traversal
order, trivially parallel, and stable across runs.  Holding the seed fixed
while growing the probability map can only add pixels, never drop them,
which is what makes sample sets nested in the temperature parameter.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = float(2.0**-53)


def _splitmix64(x):
    x = (x + _GOLDEN).astype(np.uint64) if isinstance(x, np.ndarray) else np.uint64(x) + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def uniform_grid(seed, view_id, height, width):
    """Uniforms in [0, 1) for every pixel of an H x W raster.

    Result[v, u] depends only on (seed, view_id, u, v).
    """
    with np.errstate(over="ignore"):
        base = _splitmix64(_splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.uint64(view_id & 0xFFFFFFFFFFFFFFFF))
        v = np.arange(height, dtype=np.uint64)[:, None]
        u = np.arange(width, dtype=np.uint64)[None, :]
        counter = (v << np.uint64(32)) | u
        bits = _splitmix64(_splitmix64(counter ^ base))
    return (bits >> np.uint64(11)).astype(np.float64) * _INV_2_53


def uniform_at(seed, view_id, u, v):
    """Scalar draw for one pixel; bit-identical to uniform_grid[v, u]."""
    with np.errstate(over="ignore"):
        base = _splitmix64(_splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.uint64(view_id & 0xFFFFFFFFFFFFFFFF))
        counter = (np.uint64(v) << np.uint64(32)) | np.uint64(u)
        bits = _splitmix64(_splitmix64(counter ^ base))
    return float(bits >> np.uint64(11)) * _INV_2_53
