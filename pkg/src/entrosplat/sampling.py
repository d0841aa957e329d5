"""Entropy-guided probabilistic pixel sampling.

The information map is the Shannon entropy of the quantized gray levels in
an N x N window around each pixel,

    E(u, v) = -sum_i p_i log2 p_i,

normalized by its theoretical maximum log2(L) and scaled by a temperature
tau to give a per-pixel selection probability

    P_tau(u, v) = clip(tau * E(u, v) / log2(L), 0, 1).

Pixels are then kept where a counter-based per-pixel uniform falls below
P.  Two ablation baselines ship alongside: a constant probability map and
a Laplacian edge-magnitude map used in place of the normalized entropy.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from .errors import Unreachable, ValidationError
from .rng import uniform_grid

STRATEGIES = ("entropy", "random", "laplacian")


@dataclass(frozen=True)
class EntropyMap:
    values: np.ndarray  # (H, W) float64, bits
    window_size: int
    gray_levels: int

    @property
    def max_bits(self):
        return math.log2(self.gray_levels)


@dataclass(frozen=True)
class ProbabilityMap:
    values: np.ndarray  # (H, W) float64 in [0, 1]
    tau: Optional[float] = None


@dataclass(frozen=True)
class PixelSampleSet:
    view_id: int
    coords: np.ndarray  # (n, 2) int64 (u, v), row-major order
    seed: int

    @property
    def count(self):
        return self.coords.shape[0]


@dataclass(frozen=True)
class SamplerConfig:
    strategy: str = "entropy"
    window_size: int = 7
    gray_levels: int = 256
    tau: float = 0.3
    seed: int = 0
    uniform_p: float = 0.1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown sampling strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValidationError(f"window size must be odd and >= 3, got {self.window_size}")
        if not (2 <= self.gray_levels <= 65536):
            raise ValidationError(f"gray levels must be in [2, 65536], got {self.gray_levels}")
        if self.tau < 0:
            raise ValidationError(f"tau must be nonnegative, got {self.tau}")
        if not (0.0 <= self.uniform_p <= 1.0):
            raise ValidationError(f"uniform_p must be in [0, 1], got {self.uniform_p}")


def quantize_gray(gray, levels):
    """bin = floor(g * L), clamped to L - 1."""
    bins = np.floor(np.asarray(gray, dtype=np.float64) * levels).astype(np.int32)
    return np.clip(bins, 0, levels - 1)


def entropy_term_table(window_count):
    """table[c] = (c/W) * log2(c/W); shared by both kernel backends so
    their accumulated sums land on the same float grid."""
    c = np.arange(window_count + 1, dtype=np.float64)
    table = np.zeros(window_count + 1)
    p = c[1:] / float(window_count)
    table[1:] = p * np.log2(p)
    return table


def local_entropy(gray, window_size=7, gray_levels=256):
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValidationError(f"gray raster must be 2-d, got shape {gray.shape}")
    if window_size < 3 or window_size % 2 == 0:
        raise ValidationError(f"window size must be odd and >= 3, got {window_size}")
    bins = quantize_gray(gray, gray_levels)
    r = window_size // 2
    padded = np.ascontiguousarray(np.pad(bins, r, mode="edge"))
    table = entropy_term_table(window_size * window_size)
    values = _backend.active.entropy_map(padded, window_size, table, gray_levels)
    return EntropyMap(values=values, window_size=window_size, gray_levels=gray_levels)


def probability_map(entropy, tau):
    if tau < 0:
        raise ValidationError(f"tau must be nonnegative, got {tau}")
    values = np.clip(tau * entropy.values / entropy.max_bits, 0.0, 1.0)
    return ProbabilityMap(values=values, tau=float(tau))


def scaled_probability(normalized, tau):
    """clip(tau * m, 0, 1) for an already-normalized map in [0, 1]."""
    if tau < 0:
        raise ValidationError(f"tau must be nonnegative, got {tau}")
    return ProbabilityMap(values=np.clip(tau * np.asarray(normalized, dtype=np.float64), 0.0, 1.0), tau=float(tau))


def uniform_probability(height, width, p):
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"probability must be in [0, 1], got {p}")
    return ProbabilityMap(values=np.full((height, width), float(p)), tau=None)


def laplacian_map(gray):
    """|Laplacian| response, replicate padded, normalized by its maximum.

    Kernel [[0,1,0],[1,-4,1],[0,1,0]].  An all-flat raster stays all-zero.
    """
    gray = np.asarray(gray, dtype=np.float64)
    padded = np.pad(gray, 1, mode="edge")
    response = (
        padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
        - 4.0 * padded[1:-1, 1:-1]
    )
    response = np.abs(response)
    peak = response.max()
    if peak > 0:
        response = response / peak
    return response


def bernoulli_sample(prob, validity, seed, view_id=0):
    """Selects pixel (u, v) iff valid and r(seed, view, u, v) < P(u, v).

    Draws come from the counter-based generator, so the selected set for a
    smaller map is always a subset of the set for a pointwise larger map
    under the same seed.
    """
    p = np.asarray(prob.values, dtype=np.float64)
    valid = np.asarray(validity, dtype=bool)
    if valid.shape != p.shape:
        raise ValidationError(f"validity {valid.shape} does not match probability map {p.shape}")
    r = uniform_grid(seed, view_id, p.shape[0], p.shape[1])
    picked = valid & (r < p)
    vs, us = np.nonzero(picked)
    coords = np.stack([us, vs], axis=1).astype(np.int64)
    return PixelSampleSet(view_id=view_id, coords=coords, seed=int(seed))


def probability_for_view(view, config):
    """Strategy dispatch used by the pipeline and the ablation harness."""
    if config.strategy == "entropy":
        ent = local_entropy(view.image.gray, config.window_size, config.gray_levels)
        return probability_map(ent, config.tau)
    if config.strategy == "laplacian":
        return scaled_probability(laplacian_map(view.image.gray), config.tau)
    return uniform_probability(view.image.gray.shape[0], view.image.gray.shape[1], config.uniform_p)


def expected_count(prob_values, validity):
    return float(np.asarray(prob_values, dtype=np.float64)[np.asarray(validity, dtype=bool)].sum())


def calibrate_tau(entropy_maps, target_count, tol=0.02, validity=None, max_iter=200):
    """Bisection on tau so the expected sample count over all views matches
    target_count within tol (a fraction of the target).

    Pixels with zero entropy never sample at any tau, so the reachable
    supremum is the count of valid pixels with positive entropy, not the
    raw valid-pixel count.
    """
    maps = list(entropy_maps)
    if validity is None:
        validity = [np.ones(m.values.shape, dtype=bool) for m in maps]
    validity = [np.asarray(v, dtype=bool) for v in validity]
    normalized = [m.values[v] / m.max_bits for m, v in zip(maps, validity)]
    total_valid = sum(int(v.sum()) for v in validity)
    if target_count > total_valid:
        raise Unreachable(f"target {target_count} exceeds {total_valid} valid pixels")
    if target_count == 0:
        return 0.0
    supremum = sum(int((n > 0).sum()) for n in normalized)
    if target_count > supremum:
        raise Unreachable(
            f"target {target_count} exceeds the {supremum} valid pixels with positive entropy"
        )

    def total(tau):
        return sum(float(np.minimum(tau * n, 1.0).sum()) for n in normalized)

    lo, hi = 0.0, 1.0
    while total(hi) < target_count and hi < 1e12:
        hi *= 2.0
    if total(hi) < target_count:
        raise Unreachable(f"target {target_count} not reachable (sum saturates below it)")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = total(mid)
        if abs(s - target_count) <= tol * target_count:
            return mid
        if s < target_count:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
