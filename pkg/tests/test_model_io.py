import io
import struct

import numpy as np
import pytest

from efloat.codec import EFloatConfig, build_decoder_table, decode_stream
from efloat.entropy import CodingMode, build_code_table, build_histogram
from efloat.errors import ContainerError, ModelFormatError
from efloat.fp_bits import stoc
from efloat.model_io import (
    EmbeddingModel,
    code_table_size,
    dump_binary_model,
    dump_text_model,
    load_binary_model,
    load_model,
    load_text_model,
    read_compressed,
    save_model,
    write_compressed,
)


def test_word2vec_text():
    m = load_text_model(b"2 3\na 1 2 3\nb 4 5 6\n")
    assert m.tokens == ["a", "b"] and m.dim == 3
    assert m.matrix.tolist() == [[1, 2, 3], [4, 5, 6]]


def test_glove_text_detected():
    m = load_text_model(io.StringIO("a 1 2 3\nb 4 5 6\n"))
    assert len(m) == 2 and m.dim == 3


@pytest.mark.parametrize(
    "text",
    ["2 3\na 1 2\nb 4 5 6\n", "a 1 2 3\nb 4 5\n", "a 1 x 3\n", "a 1 2\na 3 4\n", "3 2\na 1 2\n"],
)
def test_text_errors(text):
    with pytest.raises(ModelFormatError):
        load_text_model(text.encode())


def test_binary_model():
    data = b"1 2\n" + b"a " + struct.pack("<2f", 1.5, -2.0)
    m = load_binary_model(data)
    assert m.tokens == ["a"] and m.matrix.tolist() == [[1.5, -2.0]]


def test_binary_truncated_reports_offset():
    data = b"1 2\n" + b"a " + struct.pack("<f", 1.5)
    with pytest.raises(ModelFormatError, match="byte 6"):
        load_binary_model(data)
    with pytest.raises(ModelFormatError):
        load_binary_model(b"x y\n")


def test_binary_text_round_trip(rng, tmp_path):
    m = EmbeddingModel([f"w{i}" for i in range(30)], rng.standard_normal((30, 7)).astype(np.float32))
    binary = load_binary_model(dump_binary_model(m))
    text = load_text_model(dump_text_model(binary))
    assert np.array_equal(text.matrix.view(np.uint32), m.matrix.view(np.uint32))
    save_model(m, tmp_path / "m.bin")
    save_model(m, tmp_path / "m.txt")
    assert np.array_equal(load_model(tmp_path / "m.bin").matrix, m.matrix)
    assert np.array_equal(load_model(tmp_path / "m.txt").matrix, m.matrix)


def compress(m, cfg):
    table = build_code_table(build_histogram(m.matrix, cfg.mode), cfg.max_code)
    return write_compressed(m, cfg, table), table


def test_empty_model_container():
    m = EmbeddingModel([], np.zeros((0, 50), dtype=np.float32))
    blob, _ = compress(m, EFloatConfig(16, 8))
    cm = read_compressed(blob)
    assert cm.tokens == [] and cm.payload == b"" and cm.header.dim == 50
    assert cm.decode_all().shape == (0, 50)


def test_payload_size_1000x50(synth):
    blob, table = compress(synth, EFloatConfig(16, 8))
    cm = read_compressed(blob)
    assert len(cm.payload) == 100_000
    assert len(blob) == 38 + code_table_size(table) + sum(2 + len(t) for t in synth.tokens) + 100_000


def test_container_round_trip(synth):
    cfg = EFloatConfig(12, 7, CodingMode.JOINT, stoc(3))
    blob, table = compress(synth, cfg)
    cm = read_compressed(blob)
    assert cm.config == cfg
    assert cm.tokens == synth.tokens
    assert np.array_equal(cm.table.lengths, table.lengths)
    full = decode_stream(cm.payload, build_decoder_table(table, 7), cfg, synth.matrix.size)
    assert np.array_equal(cm.decode_all().ravel(), full)
    assert np.array_equal(cm.decode_row(17), full[17 * 50 : 18 * 50])


def test_container_rejects_damage(synth):
    blob, _ = compress(synth, EFloatConfig(16, 8))
    with pytest.raises(ContainerError, match="magic"):
        read_compressed(b"XXXX" + blob[4:])
    with pytest.raises(ContainerError, match="version"):
        read_compressed(blob[:4] + b"\x02\x00" + blob[6:])
    with pytest.raises(ContainerError, match="checksum"):
        read_compressed(blob[:-1] + bytes([blob[-1] ^ 1]))
    with pytest.raises(ContainerError):
        read_compressed(blob[:-10])
    with pytest.raises(ContainerError):
        read_compressed(blob[:20])


def test_code_table_is_tens_of_bytes(synth):
    _, table = compress(synth, EFloatConfig(16, 8))
    assert len(table) == 23
    assert code_table_size(table) < 120
