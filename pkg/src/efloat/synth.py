"""Synthetic embedding matrices with embedding-like exponent histograms."""

from __future__ import annotations

import numpy as np

from efloat.fp_bits import EXPONENT_BIAS, bits_float32
from efloat.model_io import EmbeddingModel


def exponent_weights(center: int, spread: float, uniques: int, floor: float = 0.1):
    """Support and probabilities of the unbiased exponent distribution.

    The support is ``uniques`` consecutive exponents whose top sits
    ``round(1.5 * spread)`` above ``center``: trained weights are norm-bounded from
    above but trail off towards tiny magnitudes. Probabilities are a Gaussian
    bell of width ``spread`` around ``center`` mixed with a ``floor`` fraction
    of uniform mass so the whole support shows up in a modest sample.
    """
    if uniques < 1:
        raise ValueError(f"uniques must be >= 1, got {uniques}")
    if spread <= 0:
        raise ValueError(f"spread must be positive, got {spread}")
    if not 0 <= floor < 1:
        raise ValueError(f"floor must be in [0, 1), got {floor}")
    top = center + int(round(1.5 * spread))
    support = np.arange(top - uniques + 1, top + 1)
    if support[0] + EXPONENT_BIAS < 1 or top + EXPONENT_BIAS > 254:
        raise ValueError(f"exponents {support[0]}..{top} leave the FP32 normal range")
    bell = np.exp(-0.5 * ((support - center) / spread) ** 2)
    probs = (1 - floor) * bell / bell.sum() + floor / uniques
    return support, probs / probs.sum()


def synth_matrix(
    tokens: int,
    dim: int,
    exp_center: int = -2,
    exp_spread: float = 2.0,
    uniques: int = 23,
    seed: int = 0,
) -> np.ndarray:
    """FP32 matrix with bell-shaped exponents and uniform random signs and significands."""
    if tokens < 0 or dim < 1:
        raise ValueError(f"need tokens >= 0 and dim >= 1, got {tokens}x{dim}")
    rng = np.random.default_rng(seed)
    support, probs = exponent_weights(exp_center, exp_spread, uniques)
    size = tokens * dim
    exps = rng.choice(support, size=size, p=probs) + EXPONENT_BIAS
    signs = rng.integers(0, 2, size=size)
    sigs = rng.integers(0, 1 << 23, size=size)
    bits = (signs.astype(np.uint32) << 31) | (exps.astype(np.uint32) << 23) | sigs.astype(np.uint32)
    return bits_float32(bits).reshape(tokens, dim)


def synth_model(tokens: int = 1000, dim: int = 50, exp_center: int = -2, exp_spread: float = 2.0, uniques: int = 23, seed: int = 0) -> EmbeddingModel:
    matrix = synth_matrix(tokens, dim, exp_center, exp_spread, uniques, seed)
    width = len(str(max(tokens - 1, 0)))
    return EmbeddingModel([f"t{i:0{width}d}" for i in range(tokens)], matrix)
