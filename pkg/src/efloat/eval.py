"""Precision and ranking-quality evaluation of reduced-precision formats."""

from __future__ import annotations

import enum
import math
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from efloat.codec import EFloatConfig, reconstruct
from efloat.entropy import CodingMode, average_code_width, build_code_table, build_histogram, limited_huffman_lengths
from efloat.fp_bits import (
    DETR,
    RoundingMode,
    decompose_fp32,
    float32_bits,
    to_bf16,
    to_fp16,
    widen_bf16,
    widen_fp16,
)
from efloat.model_io import code_table_size

_EF_NAME = re.compile(r"^ef(\d+)$")


def parse_format(name: str) -> tuple[str, int]:
    """``"bf16"`` -> ``("bf16", 16)``, ``"ef12"`` -> ``("ef", 12)``."""
    key = name.strip().lower()
    if key in ("fp32", "bf16", "fp16"):
        return key, 32 if key == "fp32" else 16
    match = _EF_NAME.match(key)
    if match:
        n = int(match.group(1))
        EFloatConfig.for_format(n)  # range check
        return "ef", n
    raise ValueError(f"unknown format {name!r} (expected fp32, bf16, fp16 or efN)")


def convert(
    matrix,
    fmt: str,
    rounding: RoundingMode = DETR,
    max_code: int = 8,
    mode: CodingMode = CodingMode.EXPONENT,
) -> np.ndarray:
    """Round-trip ``matrix`` through ``fmt`` and return the FP32 result.

    EFn code tables are built from the full histogram of ``matrix`` with the
    limit clamped to what EFn can hold.
    """
    arr = np.asarray(matrix, dtype=np.float32)
    kind, n = parse_format(fmt)
    if kind == "fp32":
        return arr.copy()
    if kind == "bf16":
        return widen_bf16(to_bf16(arr, rounding)).reshape(arr.shape)
    if kind == "fp16":
        return widen_fp16(to_fp16(arr, rounding)).reshape(arr.shape)
    cfg = EFloatConfig.for_format(n, max_code, mode, rounding)
    table = build_code_table(build_histogram(arr, mode), cfg.max_code)
    return reconstruct(arr, table, cfg)


def _finite_pairs(original, reconstructed):
    a = np.asarray(original, dtype=np.float64).ravel()
    b = np.asarray(reconstructed, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("rmse of empty sequences")
    keep = np.isfinite(a) & np.isfinite(b)
    return a[keep], b[keep], int(a.size - keep.sum())


def rmse(original, reconstructed) -> float:
    """Root mean square difference; pairs with a NaN or Inf on either side are skipped."""
    a, b, _ = _finite_pairs(original, reconstructed)
    if a.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _ratio(num: float, den: float) -> float:
    if den == 0.0:
        return math.nan if num == 0.0 else math.inf
    return num / den


@dataclass
class RmseReport:
    rmse: dict[str, float] = field(default_factory=dict)
    excluded: dict[str, int] = field(default_factory=dict)
    rounding: str = "detr"

    def ratio(self, base: str, efn: str) -> float:
        """``rmse[base] / rmse[efn]``; above 1 means the EFn error is smaller."""
        if base == efn:
            return 1.0
        return _ratio(self.rmse[base], self.rmse[efn])

    @property
    def ratios(self) -> dict[tuple[str, str], float]:
        bases = [f for f in self.rmse if parse_format(f)[0] in ("bf16", "fp16")]
        efs = [f for f in self.rmse if parse_format(f)[0] == "ef"]
        return {(b, e): self.ratio(b, e) for b in bases for e in efs}

    def rows(self, model_name: str = "model") -> list[dict]:
        bases = [f for f in self.rmse if parse_format(f)[0] in ("bf16", "fp16")]
        out = []
        for fmt, value in self.rmse.items():
            row = {
                "model": model_name,
                "format": fmt,
                "rounding": self.rounding,
                "rmse": value,
                "excluded": self.excluded[fmt],
            }
            for base in bases:
                row[f"ratio_{base}"] = self.ratio(base, fmt)
            out.append(row)
        return out


def rmse_ratio_report(
    matrix,
    formats,
    max_code: int = 8,
    rounding: RoundingMode = DETR,
    mode: CodingMode = CodingMode.EXPONENT,
) -> RmseReport:
    arr = np.asarray(matrix, dtype=np.float32)
    report = RmseReport(rounding=rounding.kind.value)
    for fmt in formats:
        rec = convert(arr, fmt, rounding, max_code, mode)
        a, b, skipped = _finite_pairs(arr, rec)
        report.rmse[fmt] = float(np.sqrt(np.mean((a - b) ** 2))) if a.size else 0.0
        report.excluded[fmt] = skipped
    return report


class Direction(enum.Enum):
    SIMILAR = "sim"
    DISSIMILAR = "dissim"


@dataclass(frozen=True)
class RankedResult:
    indices: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return self.indices.size


def _unit_rows(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = m / norms[:, None]
    return unit, norms


def topk_query(matrix, query: int, k: int, direction: Direction = Direction.SIMILAR, _unit=None) -> RankedResult:
    """Exact top-``k`` by cosine similarity, query excluded, ties by index."""
    unit, norms = _unit if _unit is not None else _unit_rows(matrix)
    count = unit.shape[0]
    if not 0 <= query < count:
        raise IndexError(f"query {query} out of range for {count} tokens")
    if norms[query] == 0 or not np.isfinite(norms[query]):
        raise ValueError(f"query vector {query} has zero or non-finite norm")
    scores = unit @ unit[query]
    candidates = np.isfinite(scores) & (norms > 0)
    candidates[query] = False
    if _unit is None and np.count_nonzero(~candidates) > 1:
        warnings.warn(f"{np.count_nonzero(~candidates) - 1} zero-norm vectors excluded", stacklevel=2)
    idx = np.flatnonzero(candidates)
    if k > idx.size:
        raise ValueError(f"k={k} exceeds {idx.size} candidates")
    primary = -scores[idx] if direction is Direction.SIMILAR else scores[idx]
    order = np.lexsort((idx, primary))[:k]
    return RankedResult(idx[order], scores[idx[order]])


def ndcg_at_k(test: RankedResult | list, baseline: RankedResult | list, k: int) -> float:
    """Graded NDCG: the baseline's item at 0-based rank ``p`` has relevance ``k - p``."""
    test_ids = list(test.indices if isinstance(test, RankedResult) else test)[:k]
    base_ids = list(baseline.indices if isinstance(baseline, RankedResult) else baseline)[:k]
    if not base_ids:
        raise ValueError("empty baseline ranking")
    if k < 1 or len(test_ids) < k or len(base_ids) < k:
        raise ValueError(f"k={k} exceeds ranking length")
    rel = {item: k - pos for pos, item in enumerate(base_ids)}
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = sum(rel.get(item, 0) * discounts[i] for i, item in enumerate(test_ids))
    idcg = sum((k - i) * discounts[i] for i in range(k))
    return float(dcg / idcg)


@dataclass(frozen=True)
class QuerySuiteConfig:
    queries: int = 20
    k: int = 10
    seed: int = 0
    direction: Direction = Direction.SIMILAR

    def __post_init__(self):
        if self.queries < 1 or self.k < 1:
            raise ValueError("queries and k must be >= 1")


def sample_queries(token_count: int, cfg: QuerySuiteConfig) -> np.ndarray:
    if cfg.queries > token_count:
        raise ValueError(f"{cfg.queries} queries requested from {token_count} tokens")
    rng = np.random.default_rng(cfg.seed)
    return np.sort(rng.choice(token_count, size=cfg.queries, replace=False))


def query_suite(
    matrix,
    cfg: QuerySuiteConfig,
    formats,
    rounding: RoundingMode = DETR,
    max_code: int = 8,
    mode: CodingMode = CodingMode.EXPONENT,
    threads: int | None = None,
) -> dict[str, float]:
    """Mean NDCG@k of each format's rankings against FP32 rankings."""
    arr = np.asarray(matrix, dtype=np.float32)
    queries = sample_queries(arr.shape[0], cfg)
    base_unit = _unit_rows(arr)
    baselines = [topk_query(arr, int(q), cfg.k, cfg.direction, base_unit) for q in queries]

    results = {}
    for fmt in formats:
        unit = _unit_rows(convert(arr, fmt, rounding, max_code, mode))

        def score(i, unit=unit):
            ranked = topk_query(None, int(queries[i]), cfg.k, cfg.direction, unit)
            return ndcg_at_k(ranked, baselines[i], cfg.k)

        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(score, range(len(queries))))
        results[fmt] = float(np.mean(scores))
    return results


def benford_digits(values) -> np.ndarray:
    """Frequency of leading decimal digits 1..9 over the nonzero finite values."""
    v = np.abs(np.asarray(values, dtype=np.float64).ravel())
    v = v[np.isfinite(v) & (v > 0)]
    if v.size == 0:
        raise ValueError("no nonzero finite values")
    lead = np.floor(v / 10.0 ** np.floor(np.log10(v)))
    lead = np.clip(lead, 1, 9).astype(np.int64)
    return np.bincount(lead, minlength=10)[1:] / v.size


def benford_expected() -> np.ndarray:
    d = np.arange(1, 10)
    return np.log10(1 + 1 / d)


def significand_bit_distribution(values) -> np.ndarray:
    """P(bit == 1) for significand positions 1 (most significant) through 23."""
    bits = float32_bits(np.asarray(values, dtype=np.float32)).ravel()
    if bits.size == 0:
        raise ValueError("no values")
    _, _, m = decompose_fp32(bits)
    shifts = np.arange(22, -1, -1, dtype=np.uint32)
    return ((m[:, None] >> shifts) & 1).mean(axis=0)


@dataclass(frozen=True)
class ExponentStats:
    unique_exponents: int
    min_code_width: int
    max_code_width: int
    avg_code_width: float
    avg_significand_width: float
    code_table_bytes: int
    histogram: np.ndarray


def exponent_stats(matrix, cfg: EFloatConfig, sample_stride: int = 1, include_all: bool = False) -> ExponentStats:
    hist = build_histogram(matrix, cfg.mode, sample_stride)
    if hist.total == 0:
        raise ValueError("exponent stats of an empty model")
    lengths = limited_huffman_lengths(hist, cfg.max_code, include_all)
    used = lengths[hist.counts > 0]
    avg = average_code_width(hist, lengths)
    table = build_code_table(hist, cfg.max_code, include_all)
    if cfg.mode is CodingMode.EXPONENT:
        uniques = hist.present.size
    else:
        uniques = np.unique(hist.present & 0xFF).size
    return ExponentStats(
        unique_exponents=int(uniques),
        min_code_width=int(used.min()),
        max_code_width=int(used.max()),
        avg_code_width=avg,
        avg_significand_width=cfg.n - cfg.prefix_bits - avg,
        code_table_bytes=code_table_size(table),
        histogram=hist.counts,
    )
