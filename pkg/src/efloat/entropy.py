"""Exponent histograms and length-limited canonical Huffman codes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from efloat.errors import CapacityError, ConfigError
from efloat.fp_bits import decompose_fp32, float32_bits


class CodingMode(enum.Enum):
    EXPONENT = "exponent"
    JOINT = "joint"

    @property
    def alphabet_size(self) -> int:
        return 256 if self is CodingMode.EXPONENT else 512

    @property
    def symbol_bits(self) -> int:
        return 8 if self is CodingMode.EXPONENT else 9


def symbols_of(values, mode: CodingMode) -> np.ndarray:
    """Per-value symbol: the biased exponent, or ``sign << 8 | exponent``."""
    sign, exp, _ = decompose_fp32(np.atleast_1d(float32_bits(values)).ravel())
    if mode is CodingMode.JOINT:
        return ((sign << 8) | exp).astype(np.int64)
    return exp.astype(np.int64)


@dataclass
class SymbolHistogram:
    mode: CodingMode
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.mode.alphabet_size, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.mode.alphabet_size,):
            raise ValueError(f"{self.mode} histogram needs {self.mode.alphabet_size} bins")
        if np.any(self.counts < 0):
            raise ValueError("negative count")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def present(self) -> np.ndarray:
        return np.flatnonzero(self.counts)

    def __add__(self, other: "SymbolHistogram") -> "SymbolHistogram":
        if other.mode is not self.mode:
            raise ValueError("cannot merge histograms of different modes")
        return SymbolHistogram(self.mode, self.counts + other.counts)

    @classmethod
    def from_counts(cls, counts: dict[int, int], mode: CodingMode = CodingMode.EXPONENT):
        arr = np.zeros(mode.alphabet_size, dtype=np.int64)
        for sym, c in counts.items():
            arr[sym] = c
        return cls(mode, arr)


def build_histogram(values, mode: CodingMode = CodingMode.EXPONENT, sample_stride: int = 1) -> SymbolHistogram:
    if sample_stride < 1:
        raise ValueError(f"sample_stride must be >= 1, got {sample_stride}")
    flat = np.asarray(values, dtype=np.float32).ravel()[::sample_stride]
    if flat.size == 0:
        return SymbolHistogram(mode)
    counts = np.bincount(symbols_of(flat, mode), minlength=mode.alphabet_size)
    return SymbolHistogram(mode, counts)


def _package_merge(weights: list[int], limit: int) -> list[int]:
    """Optimal code lengths <= ``limit`` for ``weights`` (ascending order)."""
    n = len(weights)
    # items are (weight, node); node is a leaf index or a (left, right) pair
    leaves = [(w, i) for i, w in enumerate(weights)]
    row = leaves
    for _ in range(limit - 1):
        packages = [
            (row[j][0] + row[j + 1][0], (row[j], row[j + 1]))
            for j in range(0, len(row) - 1, 2)
        ]
        row = _merge(leaves, packages)

    lengths = [0] * n
    stack = [item[1] for item in row[: 2 * n - 2]]
    while stack:
        node = stack.pop()
        if isinstance(node, int):
            lengths[node] += 1
        else:
            stack.append(node[0][1])
            stack.append(node[1][1])
    return lengths


def _merge(a: list, b: list) -> list:
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        # leaves win ties, which keeps the result independent of package layout
        if a[i][0] <= b[j][0]:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


def limited_huffman_lengths(hist: SymbolHistogram, max_length: int, include_all: bool = False) -> np.ndarray:
    """Minimum-redundancy code lengths with no code longer than ``max_length``.

    Returns one length per alphabet symbol, 0 for symbols without a code.
    With ``include_all`` every zero-count symbol is treated as count 1 so the
    table covers exponents never seen in the sample.
    """
    if max_length < 1:
        raise ConfigError(f"max code length must be >= 1, got {max_length}")
    counts = hist.counts.copy()
    if include_all:
        counts[counts == 0] = 1
    present = np.flatnonzero(counts)
    lengths = np.zeros(hist.mode.alphabet_size, dtype=np.int64)
    if present.size == 0:
        return lengths
    if present.size > 2**max_length:
        raise CapacityError(
            f"{present.size} symbols cannot be coded with at most {max_length} bits"
        )
    if present.size == 1:
        lengths[present[0]] = 1
        return lengths

    # (count desc, symbol asc): most frequent first
    order = sorted(present.tolist(), key=lambda s: (-counts[s], s))
    ascending = [int(counts[s]) for s in reversed(order)]
    multiset = sorted(_package_merge(ascending, max_length))
    for sym, ln in zip(order, multiset):
        lengths[sym] = ln
    return lengths


def _padded(lengths, mode: CodingMode) -> np.ndarray:
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.size > mode.alphabet_size:
        raise ValueError(f"{lengths.size} lengths for a {mode.alphabet_size}-symbol alphabet")
    out = np.zeros(mode.alphabet_size, dtype=np.int64)
    out[: lengths.size] = lengths
    return out


def kraft_sum(lengths) -> float:
    lens = np.asarray(lengths)
    lens = lens[lens > 0]
    return float(np.sum(np.ldexp(1.0, -lens)))


@dataclass(frozen=True)
class CanonicalCodeTable:
    """Canonical prefix code: ``codes[s]`` is valid where ``lengths[s] > 0``."""

    codes: np.ndarray
    lengths: np.ndarray
    mode: CodingMode = CodingMode.EXPONENT

    @property
    def max_length(self) -> int:
        return int(self.lengths.max(initial=0))

    @property
    def symbols(self) -> np.ndarray:
        return np.flatnonzero(self.lengths)

    def __contains__(self, symbol: int) -> bool:
        return 0 <= symbol < self.lengths.size and self.lengths[symbol] > 0

    def __len__(self) -> int:
        return int(np.count_nonzero(self.lengths))

    def code(self, symbol: int) -> tuple[int, int]:
        return int(self.codes[symbol]), int(self.lengths[symbol])

    def bitstrings(self) -> dict[int, str]:
        return {
            int(s): format(int(self.codes[s]), f"0{int(self.lengths[s])}b")
            for s in self.symbols
        }


def canonical_codes(lengths, mode: CodingMode | None = None) -> CanonicalCodeTable:
    lengths = np.asarray(lengths, dtype=np.int64)
    if mode is None:
        mode = CodingMode.JOINT if lengths.size > 256 else CodingMode.EXPONENT
    lengths = _padded(lengths, mode)
    if np.any(lengths < 0):
        raise ValueError("negative code length")
    if kraft_sum(lengths) > 1.0:
        raise ValueError(f"code lengths violate Kraft inequality (sum {kraft_sum(lengths)})")

    codes = np.zeros_like(lengths)
    code = 0
    prev_len = 0
    for sym in sorted(np.flatnonzero(lengths).tolist(), key=lambda s: (lengths[s], s)):
        ln = int(lengths[sym])
        code <<= ln - prev_len
        codes[sym] = code
        code += 1
        prev_len = ln
    return CanonicalCodeTable(codes, lengths, mode)


def build_code_table(
    hist: SymbolHistogram, max_length: int, include_all: bool = False
) -> CanonicalCodeTable:
    return canonical_codes(limited_huffman_lengths(hist, max_length, include_all), hist.mode)


def average_code_width(hist: SymbolHistogram, lengths) -> float:
    """Mean coded bits per sampled value."""
    total = hist.total
    if total == 0:
        raise ValueError("average code width of an empty histogram")
    lengths = _padded(lengths, hist.mode)
    if np.any((hist.counts > 0) & (lengths == 0)):
        raise ValueError("histogram has symbols without a code length")
    return float(np.dot(hist.counts, lengths) / total)
