"""Embedding model parsers and the EFLT compressed-model container.

Container layout (integers little-endian, payload MSB-first):

    offset  size  field
    0       4     magic b"EFLT"
    4       2     version (1)
    6       1     n, bits per value
    7       1     K, max code width
    8       1     coding mode (0 exponent, 1 joint)
    9       1     rounding (0 DETR, 1 STOC)
    10      8     rounding seed
    18      4     token count
    22      4     dim
    26      8     payload length in bytes
    34      4     CRC-32 of the payload
    38      2     S, number of coded symbols
    40      3*S   S x (u16 symbol, u8 code length), ascending symbol
    ...           token count x (u16 byte length, UTF-8 bytes)
    ...           payload: token_count * dim * n bits, zero-padded to a byte
"""

from __future__ import annotations

import io
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from efloat.codec import (
    DecoderTable,
    EFloatConfig,
    build_decoder_table,
    decode_row,
    decode_stream,
    encode_stream,
)
from efloat.entropy import CanonicalCodeTable, CodingMode, canonical_codes
from efloat.errors import ContainerError, ModelFormatError
from efloat.fp_bits import Rounding, RoundingMode

MAGIC = b"EFLT"
VERSION = 1
_HEADER = struct.Struct("<4sHBBBBQIIQI")
_ENTRY = struct.Struct("<HB")
_MODES = [CodingMode.EXPONENT, CodingMode.JOINT]
_ROUNDINGS = [Rounding.DETR, Rounding.STOC]


@dataclass
class EmbeddingModel:
    tokens: list[str]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise ModelFormatError(f"matrix must be 2-D, got shape {self.matrix.shape}")
        if self.matrix.shape[0] != len(self.tokens):
            raise ModelFormatError(
                f"{len(self.tokens)} tokens but {self.matrix.shape[0]} rows"
            )
        if len(set(self.tokens)) != len(self.tokens):
            seen = set()
            dup = next(t for t in self.tokens if t in seen or seen.add(t))
            raise ModelFormatError(f"duplicate token {dup!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        try:
            return self.tokens.index(token)
        except ValueError:
            raise KeyError(token) from None


def _read_source(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        return Path(source).read_bytes()
    data = source.read()
    return data.encode("utf-8") if isinstance(data, str) else data


def _is_header(fields: list[str]) -> bool:
    return len(fields) == 2 and all(f.isdigit() for f in fields)


def load_text_model(source) -> EmbeddingModel:
    """Parse word2vec text (``count dim`` header) or headerless GloVe text."""
    text = _read_source(source).decode("utf-8")
    lines = text.splitlines()
    declared = None
    start = 0
    if lines and _is_header(lines[0].split()):
        declared = tuple(int(f) for f in lines[0].split())
        start = 1

    tokens: list[str] = []
    rows: list[list[float]] = []
    dim = declared[1] if declared else None
    for lineno, line in enumerate(lines[start:], start=start + 1):
        fields = line.split()
        if not line.strip():
            continue
        token, values = fields[0], fields[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise ModelFormatError(f"line {lineno}: expected {dim} values, got {len(values)}")
        try:
            rows.append([float(v) for v in values])
        except ValueError as exc:
            raise ModelFormatError(f"line {lineno}: {exc}") from None
        tokens.append(token)

    if declared and declared[0] != len(tokens):
        raise ModelFormatError(f"header declares {declared[0]} tokens, found {len(tokens)}")
    matrix = np.array(rows, dtype=np.float32).reshape(len(tokens), dim or 0)
    return EmbeddingModel(tokens, matrix)


def load_binary_model(source) -> EmbeddingModel:
    """Parse the word2vec binary convention (little-endian FP32 vectors)."""
    data = _read_source(source)
    nl = data.find(b"\n")
    try:
        count, dim = (int(f) for f in data[:nl].split())
    except ValueError:
        raise ModelFormatError("binary model: bad 'count dim' header") from None
    if nl < 0 or count < 0 or dim < 1:
        raise ModelFormatError("binary model: bad 'count dim' header")

    pos = nl + 1
    tokens = []
    matrix = np.empty((count, dim), dtype=np.float32)
    width = 4 * dim
    for row in range(count):
        while pos < len(data) and data[pos : pos + 1] == b"\n":
            pos += 1
        space = data.find(b" ", pos)
        if space < 0:
            raise ModelFormatError(f"binary model: token {row} unterminated at byte {pos}")
        try:
            tokens.append(data[pos:space].decode("utf-8"))
        except UnicodeDecodeError:
            raise ModelFormatError(f"binary model: token at byte {pos} is not UTF-8") from None
        pos = space + 1
        if pos + width > len(data):
            raise ModelFormatError(
                f"binary model: truncated vector for token {row} at byte {pos} "
                f"({len(data) - pos} of {width} bytes)"
            )
        matrix[row] = np.frombuffer(data, dtype="<f4", count=dim, offset=pos)
        pos += width
    return EmbeddingModel(tokens, matrix)


def load_model(path) -> EmbeddingModel:
    """Load by extension: ``.bin`` is word2vec binary, anything else text."""
    if str(path).endswith(".bin"):
        return load_binary_model(path)
    return load_text_model(path)


def dump_text_model(model: EmbeddingModel, header: bool = True) -> bytes:
    out = io.StringIO()
    if header:
        out.write(f"{len(model)} {model.dim}\n")
    for token, row in zip(model.tokens, model.matrix):
        # 9 significant digits round-trip any float32
        out.write(token + " " + " ".join(f"{v:.9g}" for v in row.tolist()) + "\n")
    return out.getvalue().encode("utf-8")


def dump_binary_model(model: EmbeddingModel) -> bytes:
    out = io.BytesIO()
    out.write(f"{len(model)} {model.dim}\n".encode())
    for token, row in zip(model.tokens, model.matrix):
        out.write(token.encode("utf-8") + b" ")
        out.write(row.astype("<f4").tobytes())
        out.write(b"\n")
    return out.getvalue()


def save_model(model: EmbeddingModel, path) -> None:
    data = dump_binary_model(model) if str(path).endswith(".bin") else dump_text_model(model)
    Path(path).write_bytes(data)


@dataclass(frozen=True)
class ContainerHeader:
    n: int
    max_code: int
    mode: CodingMode
    rounding: RoundingMode
    token_count: int
    dim: int

    @property
    def config(self) -> EFloatConfig:
        return EFloatConfig(self.n, self.max_code, self.mode, self.rounding)


@dataclass
class CompressedModel:
    header: ContainerHeader
    table: CanonicalCodeTable
    tokens: list[str]
    payload: bytes
    decoder: DecoderTable | None = None

    def __post_init__(self):
        if self.decoder is None:
            self.decoder = build_decoder_table(self.table, self.header.max_code)

    @property
    def config(self) -> EFloatConfig:
        return self.header.config

    def decode_row(self, row: int) -> np.ndarray:
        h = self.header
        return decode_row(self.payload, self.decoder, self.config, h.dim, row, h.token_count)

    def decode_all(self) -> np.ndarray:
        h = self.header
        flat = decode_stream(self.payload, self.decoder, self.config, h.token_count * h.dim)
        return flat.reshape(h.token_count, h.dim)

    def to_model(self) -> EmbeddingModel:
        return EmbeddingModel(list(self.tokens), self.decode_all())


def code_table_size(table: CanonicalCodeTable) -> int:
    """Bytes taken by the code-table section of a container."""
    return 2 + _ENTRY.size * len(table)


def write_compressed(model: EmbeddingModel, cfg: EFloatConfig, table: CanonicalCodeTable) -> bytes:
    payload = encode_stream(model.matrix, table, cfg)
    out = io.BytesIO()
    out.write(
        _HEADER.pack(
            MAGIC,
            VERSION,
            cfg.n,
            cfg.max_code,
            _MODES.index(cfg.mode),
            _ROUNDINGS.index(cfg.rounding.kind),
            cfg.rounding.seed,
            len(model),
            model.dim,
            len(payload),
            zlib.crc32(payload),
        )
    )
    symbols = table.symbols
    out.write(struct.pack("<H", len(symbols)))
    for sym in symbols:
        out.write(_ENTRY.pack(int(sym), int(table.lengths[sym])))
    for token in model.tokens:
        raw = token.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ContainerError(f"token longer than 65535 bytes: {token[:20]!r}...")
        out.write(struct.pack("<H", len(raw)) + raw)
    out.write(payload)
    return out.getvalue()


def read_compressed(data: bytes | BinaryIO) -> CompressedModel:
    if not isinstance(data, (bytes, bytearray)):
        data = data.read()
    data = bytes(data)
    if len(data) < _HEADER.size:
        raise ContainerError(f"container truncated: {len(data)} bytes, header needs {_HEADER.size}")
    magic, version, n, k, mode, rounding, seed, count, dim, plen, crc = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    try:
        header = ContainerHeader(
            n, k, _MODES[mode], RoundingMode(_ROUNDINGS[rounding], seed), count, dim
        )
        header.config
    except (IndexError, ValueError) as exc:
        raise ContainerError(f"invalid header: {exc}") from None

    pos = _HEADER.size
    try:
        (nsym,) = struct.unpack_from("<H", data, pos)
        pos += 2
        lengths = np.zeros(header.mode.alphabet_size, dtype=np.int64)
        for _ in range(nsym):
            sym, ln = _ENTRY.unpack_from(data, pos)
            pos += _ENTRY.size
            if sym >= lengths.size or ln == 0 or ln > k:
                raise ContainerError(f"bad code-table entry (symbol {sym}, length {ln})")
            lengths[sym] = ln
        tokens = []
        for _ in range(count):
            (tlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            if pos + tlen > len(data):
                raise ContainerError("container truncated in token section")
            tokens.append(data[pos : pos + tlen].decode("utf-8"))
            pos += tlen
    except struct.error:
        raise ContainerError("container truncated before payload") from None
    except UnicodeDecodeError:
        raise ContainerError(f"token at byte {pos} is not UTF-8") from None

    payload = data[pos : pos + plen]
    if len(payload) != plen:
        raise ContainerError(f"payload truncated: {len(payload)} of {plen} bytes")
    if zlib.crc32(payload) != crc:
        raise ContainerError("payload checksum mismatch")
    if plen != (count * dim * n + 7) // 8:
        raise ContainerError(f"payload length {plen} inconsistent with {count}x{dim} EF{n}")
    try:
        table = canonical_codes(lengths, header.mode)
    except ValueError as exc:
        raise ContainerError(f"invalid code table: {exc}") from None
    return CompressedModel(header, table, tokens, payload)
