"""Bit-level FP32 handling and the BF16/FP16 baseline conversions.

Everything here is vectorized over numpy arrays; scalar inputs are accepted
and come back as numpy scalars (or Python ints for the field helpers).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SIGNIFICAND_BITS = 23
EXPONENT_BIAS = 127
EXPONENT_MASK = 0xFF
SIGNIFICAND_MASK = (1 << SIGNIFICAND_BITS) - 1

BF16_SIGNIFICAND_BITS = 7
FP16_SIGNIFICAND_BITS = 10
FP16_BIAS = 15


class Rounding(enum.Enum):
    DETR = "detr"
    STOC = "stoc"


@dataclass(frozen=True)
class RoundingMode:
    """How dropped significand bits are folded into the kept ones.

    DETR increments when the leading dropped bit is 1. STOC increments with
    probability ``value / 2**(d + 1)`` where ``value`` is the integer formed by
    the ``d`` dropped bits. Either way the increment is skipped when it would
    carry out of the kept field.
    """

    kind: Rounding = Rounding.DETR
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")

    @property
    def stochastic(self) -> bool:
        return self.kind is Rounding.STOC

    @classmethod
    def parse(cls, name: str, seed: int = 0) -> "RoundingMode":
        return cls(Rounding(name.lower()), seed)


DETR = RoundingMode()


def stoc(seed: int = 0) -> RoundingMode:
    return RoundingMode(Rounding.STOC, seed)


class Fp32Parts(NamedTuple):
    sign: int | np.ndarray
    biased_exponent: int | np.ndarray
    significand: int | np.ndarray


def float32_bits(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).view(np.uint32)


def bits_float32(bits) -> np.ndarray:
    return np.asarray(bits, dtype=np.uint32).view(np.float32)


def decompose_fp32(bits) -> Fp32Parts:
    if isinstance(bits, (int, np.integer)):
        b = int(bits)
        if not 0 <= b < 2**32:
            raise ValueError(f"not a 32-bit pattern: {bits:#x}")
        return Fp32Parts(b >> 31, (b >> 23) & EXPONENT_MASK, b & SIGNIFICAND_MASK)
    b = np.asarray(bits, dtype=np.uint32)
    return Fp32Parts(
        (b >> 31).astype(np.uint32),
        ((b >> 23) & EXPONENT_MASK).astype(np.uint32),
        (b & SIGNIFICAND_MASK).astype(np.uint32),
    )


def compose_fp32(parts: Fp32Parts):
    sign, exp, sig = parts
    if all(isinstance(v, (int, np.integer)) for v in parts):
        sign, exp, sig = int(sign), int(exp), int(sig)
        if not (0 <= sign <= 1 and 0 <= exp <= EXPONENT_MASK and 0 <= sig <= SIGNIFICAND_MASK):
            raise ValueError(f"field overflow in {parts}")
        return (sign << 31) | (exp << 23) | sig
    sign, exp, sig = (np.asarray(v, dtype=np.int64) for v in parts)
    if (
        np.any((sign < 0) | (sign > 1))
        or np.any((exp < 0) | (exp > EXPONENT_MASK))
        or np.any((sig < 0) | (sig > SIGNIFICAND_MASK))
    ):
        raise ValueError("field overflow")
    return ((sign << 31) | (exp << 23) | sig).astype(np.uint32)


_GAMMA = 0x9E3779B97F4A7C15
_M64 = (1 << 64) - 1


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def counter_uniform(seed: int, index) -> np.ndarray:
    """Uniform [0, 1) draws keyed by ``(seed, index)``.

    A pure function of its arguments, so element ``i`` always receives the
    same draw no matter how a stream is split across calls or workers.
    """
    key = int(_splitmix64(np.array([seed & _M64], dtype=np.uint64))[0])
    idx = np.atleast_1d(np.asarray(index, dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = _splitmix64(idx * np.uint64(_GAMMA) + np.uint64(key))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def round_significand(m, keep_width, mode: RoundingMode = DETR, draws=None, index=None):
    """Reduce a 23-bit significand to its top ``keep_width`` bits.

    ``keep_width`` may be an array (one width per element). For STOC the
    uniform draws come from ``draws`` if given, else from ``counter_uniform``
    at ``index`` (default ``0..size-1``).
    """
    scalar = np.ndim(m) == 0 and np.ndim(keep_width) == 0
    m = np.atleast_1d(np.asarray(m, dtype=np.int64))
    keep = np.broadcast_to(np.asarray(keep_width, dtype=np.int64), m.shape)
    if np.any((keep < 1) | (keep > SIGNIFICAND_BITS)):
        raise ValueError(f"keep_width must be in [1, {SIGNIFICAND_BITS}]")
    if np.any((m < 0) | (m > SIGNIFICAND_MASK)):
        raise ValueError("significand exceeds 23 bits")

    d = SIGNIFICAND_BITS - keep
    kept = m >> d
    dropped = m & ((np.int64(1) << d) - 1)
    if mode.stochastic:
        if draws is None:
            if index is None:
                index = np.arange(m.size)
            draws = counter_uniform(mode.seed, index)
        draws = np.asarray(draws, dtype=np.float64)
        draws = draws.reshape(m.shape) if draws.size == m.size else np.broadcast_to(draws, m.shape)
        # verbatim denominator 2**(d+1), not the textbook 2**d
        bump = draws * np.ldexp(1.0, d + 1) < dropped
    else:
        bump = (d > 0) & (((m >> np.maximum(d - 1, 0)) & 1) == 1)
    bump &= kept + 1 < (np.int64(1) << keep)
    out = kept + bump
    return int(out[0]) if scalar else out


def _nan_guard(exp, m, kept, keep_width):
    """Keep NaNs NaN when rounding wipes out every stored payload bit."""
    lost = (exp == EXPONENT_MASK) & (m != 0) & (kept == 0)
    return np.where(lost, np.int64(1) << (np.asarray(keep_width, dtype=np.int64) - 1), kept)


def to_bf16(x, mode: RoundingMode = DETR, index=None) -> np.ndarray:
    scalar = np.ndim(x) == 0
    sign, exp, m = decompose_fp32(np.atleast_1d(float32_bits(x)))
    kept = round_significand(m, BF16_SIGNIFICAND_BITS, mode, index=index)
    kept = _nan_guard(exp, m, kept, BF16_SIGNIFICAND_BITS)
    out = ((sign.astype(np.int64) << 15) | (exp.astype(np.int64) << 7) | kept).astype(np.uint16)
    return out[0] if scalar else out


def widen_bf16(b) -> np.ndarray:
    return bits_float32(np.asarray(b, dtype=np.uint32) << np.uint32(16))


def to_fp16(x, mode: RoundingMode = DETR, index=None) -> np.ndarray:
    """FP32 to IEEE half with carry suppression and flush-to-zero underflow."""
    scalar = np.ndim(x) == 0
    sign, exp, m = decompose_fp32(np.atleast_1d(float32_bits(x)))
    sign = sign.astype(np.int64)
    exp = exp.astype(np.int64)
    kept = round_significand(m, FP16_SIGNIFICAND_BITS, mode, index=index)
    kept = _nan_guard(exp, m, kept, FP16_SIGNIFICAND_BITS)

    e16 = exp - EXPONENT_BIAS + FP16_BIAS
    special = exp == EXPONENT_MASK
    overflow = ~special & (e16 >= 31)
    underflow = ~special & (e16 <= 0)

    e16 = np.where(special | overflow, 31, np.where(underflow, 0, e16))
    kept = np.where(overflow | underflow, 0, kept)
    out = ((sign << 15) | (e16 << 10) | kept).astype(np.uint16)
    return out[0] if scalar else out


def widen_fp16(h) -> np.ndarray:
    return np.asarray(h, dtype=np.uint16).view(np.float16).astype(np.float32)
