"""Entropy-coded floating point (EFn) compression for FP32 embedding models."""

from efloat.errors import (
    CapacityError,
    ConfigError,
    ContainerError,
    CorruptStreamError,
    EFloatError,
    MissingSymbolError,
    ModelFormatError,
)
from efloat.fp_bits import DETR, Fp32Parts, Rounding, RoundingMode, stoc
from efloat.entropy import (
    CanonicalCodeTable,
    CodingMode,
    SymbolHistogram,
    average_code_width,
    build_histogram,
    canonical_codes,
    limited_huffman_lengths,
)
from efloat.codec import (
    DecoderTable,
    EFloatConfig,
    TwoLevelDecoderTable,
    build_decoder_table,
    build_two_level_table,
    decode_row,
    decode_stream,
    decode_value,
    encode_stream,
    encode_value,
)
from efloat.model_io import EmbeddingModel, read_compressed, write_compressed

__version__ = "0.1.0"
