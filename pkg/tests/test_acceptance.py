"""Exit criteria. Each test is one criterion; a PASS/FAIL line per criterion
is printed in the terminal summary."""

import itertools
import math
import string
import time

import numpy as np
import pytest

from efloat.cli import main
from efloat.codec import (
    EFloatConfig,
    build_decoder_table,
    build_two_level_table,
    decode_words,
    encode_stream,
    encode_words,
)
from efloat.entropy import (
    CodingMode,
    SymbolHistogram,
    average_code_width,
    build_code_table,
    build_histogram,
    canonical_codes,
    kraft_sum,
    limited_huffman_lengths,
)
from efloat.errors import CapacityError
from efloat.eval import (
    Direction,
    QuerySuiteConfig,
    benford_digits,
    exponent_stats,
    query_suite,
    rmse_ratio_report,
)
from efloat.fp_bits import float32_bits, stoc
from efloat.model_io import EmbeddingModel, load_model, read_compressed, write_compressed
from efloat.synth import synth_matrix


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


@pytest.fixture(scope="module")
def bell(tmp_path_factory):
    """The model written by ``efloat synth`` with the reference parameters."""
    path = tmp_path_factory.mktemp("accept") / "bell.txt"
    argv = ["synth", "--tokens", "1000", "--dim", "50", "--exp-center", "-2",
            "--exp-spread", "2", "--uniques", "23", "--seed", "0", "-o", str(path)]
    assert main(argv, out=open("/dev/null", "w")) == 0
    return load_model(path).matrix


def hist_of(counts):
    return SymbolHistogram.from_counts(dict(enumerate(counts)))


def exhaustive_cost(counts, limit):
    ordered = sorted(counts, reverse=True)
    best = math.inf
    for lens in itertools.combinations_with_replacement(range(1, limit + 1), len(ordered)):
        if sum(2.0**-l for l in lens) <= 1.0:
            best = min(best, sum(c * l for c, l in zip(ordered, lens)))
    return best


def prefix_free(bitstrings):
    codes = sorted(bitstrings)
    # in sorted order a prefix sorts immediately before its extensions
    return not any(b.startswith(a) for a, b in zip(codes, codes[1:]))


@pytest.mark.criterion(1, "Huffman ground truth {2,1,1} -> {1,2,2}, 1.5 bits/symbol")
def test_huffman_ground_truth():
    with Timer() as t:
        hist = hist_of([2, 1, 1])
        lengths = limited_huffman_lengths(hist, 8)
        width = average_code_width(hist, lengths)
    assert lengths[:3].tolist() == [1, 2, 2]
    assert canonical_codes(lengths).bitstrings() == {0: "0", 1: "10", 2: "11"}
    assert width == 1.5
    assert t.elapsed < 1.0


@pytest.mark.criterion(2, "length limit, Kraft, prefix property, exhaustive optimum")
def test_length_limit_property():
    rng = np.random.default_rng(2)
    histograms = [rng.integers(1, 10**6, size=rng.integers(1, 37)).tolist() for _ in range(200)]
    a, b = 1, 1
    fib = []
    for _ in range(36):
        fib.append(a)
        a, b = b, a + b
    histograms += [fib[:n] for n in (8, 12, 16, 20, 30, 36)]

    checked_optimum = capacity = 0
    with Timer() as t:
        for counts in histograms:
            for limit in (4, 5, 8, 10):
                hist = hist_of(counts)
                if len(counts) > 2**limit:
                    # infeasible by pigeonhole: must be refused, not truncated
                    with pytest.raises(CapacityError):
                        limited_huffman_lengths(hist, limit)
                    capacity += 1
                    continue
                lengths = limited_huffman_lengths(hist, limit)
                used = lengths[: len(counts)]
                assert used.min() >= 1 and used.max() <= limit
                assert kraft_sum(lengths) <= 1.0
                assert prefix_free(canonical_codes(lengths).bitstrings().values())
                if len(counts) <= 8:
                    assert int(np.dot(counts, used)) == exhaustive_cost(counts, limit)
                    checked_optimum += 1
    assert checked_optimum > 50 and capacity > 0
    assert t.elapsed < 30.0


@pytest.mark.criterion(3, "round-trip exactness EF16/EF12, signed zeros, infinities, NaNs")
def test_round_trip_exactness():
    rng = np.random.default_rng(3)
    bits = rng.integers(0, 2**32, size=10**5, dtype=np.uint64).astype(np.uint32)
    bits = bits[((bits >> 23) & 0xFF) != 0xFF]
    bell = float32_bits(synth_matrix(1000, 50, seed=3)).ravel()
    specials = np.array([0x00000000, 0x80000000, 0x7F800000, 0xFF800000], dtype=np.uint32)
    nans = (rng.integers(0, 2, 1000).astype(np.uint32) << 31) | np.uint32(0x7F800000) | rng.integers(1, 1 << 23, 1000).astype(np.uint32)

    failures = 0
    for population in (bits[:50_000], np.concatenate([bell, bits[50_000:]])):
        values = np.concatenate([population, specials, nans]).view(np.float32)
        for n in (16, 12):
            cfg = EFloatConfig(n, 8)
            table = build_code_table(build_histogram(values), 8)
            dec = build_decoder_table(table, 8)
            exp = (float32_bits(values) >> 23) & 0xFF
            width = cfg.significand_width(table.lengths[exp.astype(np.int64)])
            drop = np.maximum(23 - width, 0).astype(np.uint32)
            zeroed = float32_bits(values) & ~((np.uint32(1) << drop) - np.uint32(1))
            finite_or_inf = ~np.isnan(values)
            x = zeroed.view(np.float32)
            y = decode_words(encode_words(x, table, cfg), dec, cfg)
            failures += int(np.count_nonzero(float32_bits(y)[finite_or_inf] != zeroed[finite_or_inf]))
            # NaNs keep only NaN-ness; use the raw (unzeroed) payloads
            y_nan = decode_words(encode_words(values[~finite_or_inf], table, cfg), dec, cfg)
            failures += int(np.count_nonzero(~np.isnan(y_nan)))
            assert np.count_nonzero(finite_or_inf) >= 50_000
            assert np.count_nonzero(~finite_or_inf) == 1000
    assert failures == 0


class Trie:
    """Binary prefix tree over a code table, walked one bit at a time."""

    def __init__(self, table):
        self.child = [[-1, -1]]
        self.leaf = [-1]
        self.depth = [0]
        for sym, code in table.bitstrings().items():
            node = 0
            for ch in code:
                b = int(ch)
                if self.child[node][b] < 0:
                    self.child[node][b] = len(self.leaf)
                    self.child.append([-1, -1])
                    self.leaf.append(-1)
                    self.depth.append(self.depth[node] + 1)
                node = self.child[node][b]
            self.leaf[node] = sym
        self.child = np.array(self.child)
        self.leaf = np.array(self.leaf)
        self.depth = np.array(self.depth)

    def walk(self, windows, width):
        node = np.zeros(windows.size, dtype=np.int64)
        for step in range(width):
            active = self.leaf[node] < 0
            bit = (windows >> (width - 1 - step)) & 1
            node[active] = self.child[node[active], bit[active]]
            assert np.all(node >= 0)
        return self.leaf[node], self.depth[node]


@pytest.mark.criterion(4, "one-level, two-level and prefix-tree decode agree")
def test_decoder_equivalence():
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(20):
        mode = CodingMode.JOINT if rng.random() < 0.3 else CodingMode.EXPONENT
        K = int(rng.integers(5, 11))
        cfg = EFloatConfig(16, K, mode)
        nsym = int(rng.integers(2, min(2**K, 60) + 1))
        symbols = rng.choice(mode.alphabet_size, size=nsym, replace=False)
        hist = SymbolHistogram(mode)
        hist.counts[symbols] = rng.geometric(0.2, size=nsym) ** 3
        table = build_code_table(hist, K)
        one = build_decoder_table(table, K)
        two = build_two_level_table(table, K, int(rng.integers(1, K)))
        trie = Trie(table)

        chosen = rng.choice(table.symbols, size=10**5)
        lens = table.lengths[chosen]
        width = cfg.significand_width(lens)
        sig = rng.integers(0, 2**62, size=chosen.size) & ((np.int64(1) << width) - 1)
        words = (table.codes[chosen] << width) | sig
        if mode is CodingMode.EXPONENT:
            words |= rng.integers(0, 2, size=chosen.size) << 15

        windows = (words >> (16 - cfg.prefix_bits - K)) & ((1 << K) - 1)
        s1, l1 = one.lookup(windows)
        s2, l2 = two.lookup(windows)
        s3, l3 = trie.walk(windows, K)
        mismatches += int(np.count_nonzero((s1 != s2) | (s1 != s3) | (l1 != l2) | (l1 != l3)))
        mismatches += int(np.count_nonzero(s1 != chosen))
        f1 = float32_bits(decode_words(words, one, cfg))
        f2 = float32_bits(decode_words(words, two, cfg))
        mismatches += int(np.count_nonzero(f1 != f2))
    assert mismatches == 0


@pytest.mark.criterion(5, "RMSE ratios on synthetic bell: BF16/EF16 >= 10, BF16/EF12 in [0.8, 3.0]")
def test_rmse_ratios(bell):
    with Timer() as t:
        report = rmse_ratio_report(bell, ["bf16", "ef16", "ef12"])
    print(f"BF16/EF16 = {report.ratio('bf16', 'ef16'):.2f}, BF16/EF12 = {report.ratio('bf16', 'ef12'):.2f}")
    assert report.ratio("bf16", "ef16") >= 10
    assert 0.8 <= report.ratio("bf16", "ef12") <= 3.0
    assert t.elapsed < 10.0


@pytest.mark.criterion(6, "DETR RMSE <= STOC RMSE for BF16, FP16, EF16")
def test_rounding_comparison(bell):
    formats = ["bf16", "fp16", "ef16"]
    with Timer() as t:
        detr = rmse_ratio_report(bell, formats)
        sto = rmse_ratio_report(bell, formats, rounding=stoc(0))
    for fmt in formats:
        assert detr.rmse[fmt] <= sto.rmse[fmt], fmt
    assert t.elapsed < 10.0


@pytest.mark.criterion(7, "NDCG@10: FP32 == 1, EF16 >= BF16 - 0.02, EF8 <= EF16 + 0.02")
def test_ndcg(bell):
    with Timer() as t:
        for direction in Direction:
            cfg = QuerySuiteConfig(queries=20, k=10, seed=0, direction=direction)
            scores = query_suite(bell, cfg, ["fp32", "bf16", "ef16", "ef8"])
            print(direction.value, scores)
            assert scores["fp32"] == 1.0
            assert scores["ef16"] >= scores["bf16"] - 0.02
            assert scores["ef8"] <= scores["ef16"] + 0.02
    assert t.elapsed < 30.0


@pytest.mark.criterion(8, "exponent stats: avg code width in [3, 6], significand = 15 - code >= 10.5")
def test_exponent_stats(bell):
    with Timer() as t:
        stats = exponent_stats(bell, EFloatConfig(16, 8))
    assert 3.0 <= stats.avg_code_width <= 6.0
    assert stats.avg_significand_width == pytest.approx(15 - stats.avg_code_width, abs=1e-12)
    assert stats.avg_significand_width >= 10.5
    assert t.elapsed < 5.0


@pytest.mark.criterion(9, "Benford digits: P(1) = 0.301 +/- 0.01, P(9) = 0.046 +/- 0.005")
def test_benford():
    rng = np.random.default_rng(9)
    with Timer() as t:
        freq = benford_digits(10.0 ** rng.uniform(-3, 3, size=10**6))
    assert abs(freq[0] - 0.301) <= 0.01
    assert abs(freq[8] - 0.046) <= 0.005
    assert t.elapsed < 5.0


def random_model(rng, count):
    dim = int(rng.integers(1, 40))
    alphabet = string.ascii_letters + "äßλ中"
    tokens = set()
    while len(tokens) < count:
        tokens.add("".join(rng.choice(list(alphabet), size=int(rng.integers(1, 12)))))
    scale = np.exp2(rng.integers(-20, 5, size=(count, dim)))
    matrix = (rng.standard_normal((count, dim)) * scale).astype(np.float32)
    return EmbeddingModel(sorted(tokens), matrix)


@pytest.mark.criterion(10, "container round-trip for 50 models, decode_row == full decode")
def test_container_round_trip():
    rng = np.random.default_rng(10)
    failures = rows_checked = 0
    for i in range(50):
        model = random_model(rng, 0 if i == 0 else int(rng.integers(1, 200)))
        mode = CodingMode.JOINT if rng.random() < 0.3 else CodingMode.EXPONENT
        n = int(rng.integers(8, 29))
        rounding = stoc(int(rng.integers(0, 2**63))) if rng.random() < 0.3 else EFloatConfig().rounding
        cfg = EFloatConfig.for_format(n, int(rng.integers(4, 11)), mode, rounding)
        try:
            table = build_code_table(build_histogram(model.matrix, mode), cfg.max_code)
        except CapacityError:
            table = build_code_table(build_histogram(model.matrix, mode), cfg.code_budget)
            cfg = EFloatConfig(n, cfg.code_budget, mode, rounding)
        blob = write_compressed(model, cfg, table)
        cm = read_compressed(blob)
        h = cm.header
        failures += (h.n, h.max_code, h.mode, h.rounding, h.token_count, h.dim) != (
            cfg.n, cfg.max_code, cfg.mode, cfg.rounding, len(model), model.dim
        )
        failures += not np.array_equal(cm.table.lengths, table.lengths)
        failures += cm.tokens != model.tokens
        failures += cm.payload != encode_stream(model.matrix, table, cfg)
        failures += write_compressed(cm.to_model(), cfg, cm.table) != blob
        if len(model):
            full = cm.decode_all()
            for r in rng.integers(0, len(model), size=2):
                failures += not np.array_equal(float32_bits(cm.decode_row(int(r))), float32_bits(full[r]))
                rows_checked += 1
    assert rows_checked >= 98
    assert failures == 0
