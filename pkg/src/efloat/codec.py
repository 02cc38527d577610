"""EFn word encoding, bit packing, and constant-time table decoding.

Word layout, most significant bit first:

    exponent mode:  [sign | coded exponent | significand]
    joint mode:     [coded sign+exponent   | significand]

Every value occupies exactly ``n`` bits so row ``r`` of a ``dim``-wide matrix
starts at bit ``r * dim * n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from efloat.entropy import CanonicalCodeTable, CodingMode, symbols_of
from efloat.errors import ConfigError, CorruptStreamError, MissingSymbolError
from efloat.fp_bits import (
    DETR,
    EXPONENT_MASK,
    SIGNIFICAND_BITS,
    SIGNIFICAND_MASK,
    RoundingMode,
    bits_float32,
    decompose_fp32,
    float32_bits,
    round_significand,
)

MIN_BITS = 8
MAX_BITS = 28


@dataclass(frozen=True)
class EFloatConfig:
    n: int = 16
    max_code: int = 8
    mode: CodingMode = CodingMode.EXPONENT
    rounding: RoundingMode = field(default=DETR)

    def __post_init__(self):
        if not MIN_BITS <= self.n <= MAX_BITS:
            raise ConfigError(f"EF{self.n}: bit budget must be in [{MIN_BITS}, {MAX_BITS}]")
        if self.max_code < 1:
            raise ConfigError(f"max code width must be >= 1, got {self.max_code}")
        if self.max_code > self.code_budget:
            raise ConfigError(
                f"EF{self.n} {self.mode.value} mode allows codes of at most "
                f"{self.code_budget} bits, got max code {self.max_code}"
            )

    @property
    def code_budget(self) -> int:
        """Longest code that still leaves one significand bit."""
        return self.n - 2 if self.mode is CodingMode.EXPONENT else self.n - 1

    @property
    def prefix_bits(self) -> int:
        """Bits ahead of the coded field (the sign in exponent mode)."""
        return 1 if self.mode is CodingMode.EXPONENT else 0

    def significand_width(self, code_len):
        return self.n - self.prefix_bits - code_len

    @classmethod
    def for_format(cls, n: int, max_code: int = 8, mode=CodingMode.EXPONENT, rounding=DETR):
        """Config for EF``n`` with ``max_code`` clamped to what ``n`` allows."""
        budget = n - 2 if mode is CodingMode.EXPONENT else n - 1
        return cls(n, min(max_code, budget), mode, rounding)


class DecoderTable:
    """One-level lookup of ``2**K`` entries indexed by a K-bit window.

    A code of length ``l`` fills ``2**(K - l)`` consecutive entries; entries not
    covered by any code keep length 0 and are rejected on lookup.
    """

    def __init__(self, symbols: np.ndarray, code_lengths: np.ndarray, max_code: int):
        self.symbols = symbols
        self.code_lengths = code_lengths
        self.max_code = max_code

    def __len__(self) -> int:
        return self.symbols.size

    @property
    def entry_count(self) -> int:
        return self.symbols.size

    @property
    def invalid_count(self) -> int:
        return int(np.count_nonzero(self.code_lengths == 0))

    def lookup(self, windows):
        windows = np.asarray(windows, dtype=np.int64)
        lens = self.code_lengths[windows]
        if np.any(lens == 0):
            bad = int(np.flatnonzero(lens == 0)[0])
            raise CorruptStreamError(
                f"window {int(windows[bad]):0{self.max_code}b} at word {bad} matches no code"
            )
        return self.symbols[windows], lens


def build_decoder_table(table: CanonicalCodeTable, max_code: int) -> DecoderTable:
    if table.max_length > max_code:
        raise ConfigError(f"code of {table.max_length} bits exceeds decoder width {max_code}")
    size = 1 << max_code
    symbols = np.zeros(size, dtype=np.int64)
    lens = np.zeros(size, dtype=np.int64)
    for sym in table.symbols:
        code, ln = table.code(sym)
        start = code << (max_code - ln)
        stop = start + (1 << (max_code - ln))
        symbols[start:stop] = sym
        lens[start:stop] = ln
    return DecoderTable(symbols, lens, max_code)


class TwoLevelDecoderTable:
    """Root table on the first ``root_bits`` of the window plus sub-tables.

    Root entries either resolve a short code directly or point at a sub-table
    sized for the longest code sharing that root prefix.
    """

    def __init__(self, root_bits, max_code, root_symbols, root_lens, root_sub, sub_offsets, sub_bits, sub_symbols, sub_lens):
        self.root_bits = root_bits
        self.max_code = max_code
        self.root_symbols = root_symbols
        self.root_lens = root_lens
        self.root_sub = root_sub
        self.sub_offsets = sub_offsets
        self.sub_bits = sub_bits
        self.sub_symbols = sub_symbols
        self.sub_lens = sub_lens

    @property
    def entry_count(self) -> int:
        return self.root_symbols.size + self.sub_symbols.size

    def lookup(self, windows):
        windows = np.asarray(windows, dtype=np.int64)
        root = windows >> (self.max_code - self.root_bits)
        symbols = self.root_symbols[root].copy()
        lens = self.root_lens[root].copy()
        sub = self.root_sub[root]
        nested = sub >= 0
        if np.any(nested):
            sid = sub[nested]
            bits = self.sub_bits[sid]
            rest = windows[nested] & ((1 << (self.max_code - self.root_bits)) - 1)
            idx = self.sub_offsets[sid] + (rest >> (self.max_code - self.root_bits - bits))
            symbols[nested] = self.sub_symbols[idx]
            lens[nested] = self.sub_lens[idx]
        if np.any(lens == 0):
            bad = int(np.flatnonzero(lens == 0)[0])
            raise CorruptStreamError(f"window at word {bad} matches no code")
        return symbols, lens


def build_two_level_table(table: CanonicalCodeTable, max_code: int, root_bits: int) -> TwoLevelDecoderTable:
    if not 1 <= root_bits < max_code:
        raise ConfigError(f"root width must be in [1, {max_code - 1}], got {root_bits}")
    if table.max_length > max_code:
        raise ConfigError(f"code of {table.max_length} bits exceeds decoder width {max_code}")
    root_size = 1 << root_bits
    root_symbols = np.zeros(root_size, dtype=np.int64)
    root_lens = np.zeros(root_size, dtype=np.int64)
    root_sub = np.full(root_size, -1, dtype=np.int64)

    long_codes: dict[int, list[tuple[int, int, int]]] = {}
    for sym in table.symbols:
        code, ln = table.code(sym)
        if ln <= root_bits:
            start = code << (root_bits - ln)
            root_symbols[start : start + (1 << (root_bits - ln))] = sym
            root_lens[start : start + (1 << (root_bits - ln))] = ln
        else:
            prefix = code >> (ln - root_bits)
            long_codes.setdefault(prefix, []).append((int(sym), code, ln))

    offsets, widths, sub_syms, sub_lens = [], [], [], []
    offset = 0
    for sid, prefix in enumerate(sorted(long_codes)):
        entries = long_codes[prefix]
        width = max(ln for _, _, ln in entries) - root_bits
        syms = np.zeros(1 << width, dtype=np.int64)
        lens = np.zeros(1 << width, dtype=np.int64)
        for sym, code, ln in entries:
            tail = code & ((1 << (ln - root_bits)) - 1)
            start = tail << (width - (ln - root_bits))
            syms[start : start + (1 << (width - (ln - root_bits)))] = sym
            lens[start : start + (1 << (width - (ln - root_bits)))] = ln
        root_sub[prefix] = sid
        offsets.append(offset)
        widths.append(width)
        sub_syms.append(syms)
        sub_lens.append(lens)
        offset += syms.size

    def cat(parts):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    return TwoLevelDecoderTable(
        root_bits,
        max_code,
        root_symbols,
        root_lens,
        root_sub,
        np.asarray(offsets, dtype=np.int64),
        np.asarray(widths, dtype=np.int64),
        cat(sub_syms),
        cat(sub_lens),
    )


def _check_table(table: CanonicalCodeTable, cfg: EFloatConfig):
    if table.mode is not cfg.mode:
        raise ConfigError(f"table is for {table.mode.value} mode, config wants {cfg.mode.value}")
    if table.max_length > cfg.max_code:
        raise ConfigError(f"table has {table.max_length}-bit codes, config allows {cfg.max_code}")


def encode_words(values, table: CanonicalCodeTable, cfg: EFloatConfig, start_index: int = 0) -> np.ndarray:
    """Encode FP32 values into n-bit words (returned as int64, one per value).

    ``start_index`` is the stream position of ``values[0]``; it keys the
    stochastic rounding draws so chunked encodes match a single pass.
    """
    _check_table(table, cfg)
    flat = np.asarray(values, dtype=np.float32).ravel()
    sign, exp, m = (v.astype(np.int64) for v in decompose_fp32(float32_bits(flat)))
    syms = symbols_of(flat, cfg.mode)
    lens = table.lengths[syms]
    if np.any(lens == 0):
        bad = int(np.flatnonzero(lens == 0)[0])
        raise MissingSymbolError(int(syms[bad]), start_index + bad)
    codes = table.codes[syms]
    width = cfg.significand_width(lens)

    kept = np.empty_like(m)
    wide = width >= SIGNIFICAND_BITS
    kept[wide] = m[wide] << (width[wide] - SIGNIFICAND_BITS)
    narrow = ~wide
    if np.any(narrow):
        idx = start_index + np.flatnonzero(narrow)
        kept[narrow] = round_significand(m[narrow], width[narrow], cfg.rounding, index=idx)
        nan_lost = narrow & (exp == EXPONENT_MASK) & (m != 0) & (kept == 0)
        kept[nan_lost] = np.int64(1) << (width[nan_lost] - 1)

    words = (codes << width) | kept
    if cfg.mode is CodingMode.EXPONENT:
        words |= sign << (cfg.n - 1)
    return words


def decode_words(words, dec: DecoderTable | TwoLevelDecoderTable, cfg: EFloatConfig) -> np.ndarray:
    words = np.asarray(words, dtype=np.int64)
    if dec.max_code != cfg.max_code:
        raise ConfigError(f"decoder width {dec.max_code} does not match config max code {cfg.max_code}")
    window_shift = cfg.n - cfg.prefix_bits - cfg.max_code
    windows = (words >> window_shift) & ((1 << cfg.max_code) - 1)
    syms, lens = dec.lookup(windows)
    width = cfg.significand_width(lens)
    stored = words & ((np.int64(1) << width) - 1)
    m = np.where(
        width >= SIGNIFICAND_BITS,
        stored >> np.maximum(width - SIGNIFICAND_BITS, 0),
        stored << np.maximum(SIGNIFICAND_BITS - width, 0),
    )
    if cfg.mode is CodingMode.EXPONENT:
        sign = words >> (cfg.n - 1)
        exp = syms
    else:
        sign = syms >> 8
        exp = syms & EXPONENT_MASK
    bits = (sign << 31) | (exp << 23) | (m & SIGNIFICAND_MASK)
    return bits_float32(bits.astype(np.uint32))


def encode_value(x, table: CanonicalCodeTable, cfg: EFloatConfig, index: int = 0) -> int:
    return int(encode_words(np.float32(x), table, cfg, start_index=index)[0])


def decode_value(word: int, dec: DecoderTable | TwoLevelDecoderTable, cfg: EFloatConfig) -> np.float32:
    if not 0 <= word < (1 << cfg.n):
        raise ValueError(f"word {word:#x} wider than {cfg.n} bits")
    return decode_words(np.array([word]), dec, cfg)[0]


def pack_words(words, n: int) -> bytes:
    """Concatenate n-bit words MSB-first, zero-padding to a byte boundary."""
    words = np.asarray(words, dtype=np.int64).ravel()
    if words.size == 0:
        return b""
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = ((words[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.ravel()).tobytes()


def unpack_words(payload: bytes, n: int, count: int, bit_offset: int = 0) -> np.ndarray:
    need = bit_offset + count * n
    if len(payload) * 8 < need:
        raise CorruptStreamError(
            f"payload has {len(payload) * 8} bits, need {need} for {count} EF{n} words"
        )
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    first = bit_offset // 8
    last = (need + 7) // 8
    chunk = np.frombuffer(payload, dtype=np.uint8, count=last - first, offset=first)
    skip = bit_offset - first * 8
    bits = np.unpackbits(chunk)[skip : skip + count * n].reshape(count, n).astype(np.int64)
    weights = np.int64(1) << np.arange(n - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def encode_stream(values, table: CanonicalCodeTable, cfg: EFloatConfig, start_index: int = 0) -> bytes:
    return pack_words(encode_words(values, table, cfg, start_index), cfg.n)


def decode_stream(payload: bytes, dec, cfg: EFloatConfig, count: int) -> np.ndarray:
    return decode_words(unpack_words(payload, cfg.n, count), dec, cfg)


def decode_row(payload: bytes, dec, cfg: EFloatConfig, dim: int, row_index: int, row_count: int | None = None) -> np.ndarray:
    if row_count is None:
        row_count = (len(payload) * 8) // (dim * cfg.n) if dim else 0
    if not 0 <= row_index < row_count:
        raise IndexError(f"row {row_index} out of range for {row_count} rows")
    words = unpack_words(payload, cfg.n, dim, bit_offset=row_index * dim * cfg.n)
    return decode_words(words, dec, cfg)


def reconstruct(values, table: CanonicalCodeTable, cfg: EFloatConfig) -> np.ndarray:
    """FP32 -> EFn -> FP32 without materializing the packed payload."""
    arr = np.asarray(values, dtype=np.float32)
    dec = build_decoder_table(table, cfg.max_code)
    return decode_words(encode_words(arr, table, cfg), dec, cfg).reshape(arr.shape)
