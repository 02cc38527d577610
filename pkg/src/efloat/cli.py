"""``efloat`` command line: stats, encode, decode, eval, synth.

Exit codes: 0 success, 2 usage error, 3 data error, 4 config error. Failures
print one ``error: <kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from efloat.codec import EFloatConfig
from efloat.entropy import CodingMode, build_code_table, build_histogram
from efloat.errors import ConfigError, EFloatError, MissingSymbolError
from efloat.eval import (
    Direction,
    QuerySuiteConfig,
    exponent_stats,
    parse_format,
    query_suite,
    rmse_ratio_report,
)
from efloat.fp_bits import EXPONENT_BIAS, RoundingMode, to_bf16, to_fp16, widen_bf16, widen_fp16
from efloat.model_io import EmbeddingModel, load_model, read_compressed, save_model, write_compressed
from efloat.synth import synth_model

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONFIG = 4

DEFAULT_RMSE_FORMATS = "bf16,fp16,ef16,ef15,ef14,ef13,ef12,ef11,ef10,ef9,ef8"
DEFAULT_NDCG_FORMATS = "fp32,bf16,fp16,ef16,ef14,ef12,ef10,ef8"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


def _mode(args) -> CodingMode:
    return CodingMode.JOINT if args.joint else CodingMode.EXPONENT


def _rounding(args) -> RoundingMode:
    return RoundingMode.parse(args.rounding, args.seed)


def _threads(args) -> int | None:
    value = args.threads or os.environ.get("EFC_THREADS")
    if value in (None, ""):
        return None
    try:
        threads = int(value)
    except ValueError:
        raise CliError(EXIT_USAGE, "usage", f"bad thread count {value!r}") from None
    if threads < 1:
        raise CliError(EXIT_USAGE, "usage", f"thread count must be >= 1, got {threads}")
    return threads


def _load(path) -> EmbeddingModel:
    try:
        return load_model(path)
    except OSError as exc:
        raise CliError(EXIT_DATA, "data", f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise CliError(EXIT_DATA, "data", f"{path}: not UTF-8 text (binary models need a .bin name)") from None


def _write_table(rows: list[dict], as_json: bool, out) -> None:
    if as_json:
        json.dump(rows, out, indent=2, default=_json_default)
        out.write("\n")
        return
    if not rows:
        return
    writer = csv.DictWriter(out, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(type(value))


def _json_float(x: float):
    # JSON has no inf/nan literals
    return x if math.isfinite(x) else str(x)


def cmd_stats(args, out) -> int:
    model = _load(args.model)
    cfg = EFloatConfig(args.bits, args.max_code, _mode(args))
    stats = exponent_stats(model.matrix, cfg, args.stride, args.include_all)
    table = build_code_table(build_histogram(model.matrix, cfg.mode, args.stride), cfg.max_code, args.include_all)
    summary = {
        "values": int(model.matrix.size),
        "sampled": int(stats.histogram.sum()),
        "unique_exponents": stats.unique_exponents,
        "min_code_width": stats.min_code_width,
        "max_code_width": stats.max_code_width,
        "avg_code_width": round(stats.avg_code_width, 6),
        "avg_significand_width": round(stats.avg_significand_width, 6),
        "code_table_bytes": stats.code_table_bytes,
    }
    codes = table.bitstrings()
    hist_rows = []
    for sym in np.flatnonzero(stats.histogram):
        sign, exp = divmod(int(sym), 256)
        row = {"symbol": int(sym), "exponent": exp - EXPONENT_BIAS}
        if cfg.mode is CodingMode.JOINT:
            row["sign"] = sign
        row["count"] = int(stats.histogram[sym])
        row["code_length"] = int(table.lengths[sym])
        row["code"] = codes.get(int(sym), "")
        hist_rows.append(row)
    if args.json:
        json.dump({"summary": summary, "histogram": hist_rows}, out, indent=2)
        out.write("\n")
    else:
        _write_table([{"metric": k, "value": v} for k, v in summary.items()], False, out)
        out.write("\n")
        _write_table(hist_rows, False, out)
    return 0


def cmd_encode(args, out) -> int:
    cfg = EFloatConfig(args.bits, args.max_code, _mode(args), _rounding(args))
    model = _load(args.model)
    table = build_code_table(build_histogram(model.matrix, cfg.mode, args.stride), cfg.max_code, args.include_all)
    try:
        blob = write_compressed(model, cfg, table)
    except MissingSymbolError as exc:
        raise CliError(
            EXIT_DATA, "missing-symbol", f"{exc}; rebuild with --include-all or --stride 1"
        ) from None
    Path(args.output).write_bytes(blob)
    original = model.matrix.size * 4
    ratio = original / len(blob) if blob else float("inf")
    payload = (model.matrix.size * cfg.n + 7) // 8
    out.write(
        f"wrote {args.output}: {len(blob)} bytes (payload {payload}), "
        f"FP32 {original} bytes, compression ratio {ratio:.4f}\n"
    )
    return 0


def _to_format(values: np.ndarray, fmt: str) -> np.ndarray:
    if fmt == "bf16":
        return widen_bf16(to_bf16(values)).reshape(values.shape)
    if fmt == "fp16":
        return widen_fp16(to_fp16(values)).reshape(values.shape)
    return values


def cmd_decode(args, out) -> int:
    try:
        data = Path(args.container).read_bytes()
    except OSError as exc:
        raise CliError(EXIT_DATA, "data", f"cannot read {args.container}: {exc.strerror}") from None
    cm = read_compressed(data)
    if args.row is not None:
        if args.row in cm.tokens:
            row = cm.tokens.index(args.row)
        else:
            try:
                row = int(args.row)
            except ValueError:
                raise CliError(EXIT_DATA, "data", f"unknown token {args.row!r}") from None
            if not 0 <= row < len(cm.tokens):
                raise CliError(EXIT_DATA, "data", f"row {row} out of range for {len(cm.tokens)} rows")
        values = _to_format(cm.decode_row(row), args.format)
        line = cm.tokens[row] + " " + " ".join(f"{v:.9g}" for v in values.tolist()) + "\n"
        if args.output:
            Path(args.output).write_text(line)
        else:
            out.write(line)
        return 0
    if not args.output:
        raise CliError(EXIT_USAGE, "usage", "full decode needs -o/--output (or use --row)")
    model = EmbeddingModel(list(cm.tokens), _to_format(cm.decode_all(), args.format))
    save_model(model, args.output)
    out.write(f"wrote {args.output}: {len(model)} tokens x {model.dim} ({args.format})\n")
    return 0


def cmd_eval(args, out) -> int:
    formats = [f.strip().lower() for f in args.formats.split(",") if f.strip()] if args.formats else None
    if formats is None:
        formats = (DEFAULT_RMSE_FORMATS if args.metric == "rmse" else DEFAULT_NDCG_FORMATS).split(",")
    for fmt in formats:
        try:
            parse_format(fmt)
        except ConfigError as exc:
            raise CliError(EXIT_CONFIG, "config", f"format {fmt}: {exc}") from None
        except ValueError as exc:
            raise CliError(EXIT_USAGE, "usage", str(exc)) from None
    rounding = _rounding(args)
    threads = _threads(args)
    model = _load(args.model)
    name = Path(args.model).stem

    if args.metric == "rmse":
        report = rmse_ratio_report(model.matrix, formats, args.max_code, rounding, _mode(args))
        rows = report.rows(name)
        if args.json:
            rows = [{k: _json_float(v) if isinstance(v, float) else v for k, v in r.items()} for r in rows]
    else:
        directions = [Direction.SIMILAR, Direction.DISSIMILAR] if args.direction == "both" else [Direction(args.direction)]
        if args.queries > len(model):
            raise CliError(EXIT_DATA, "data", f"{args.queries} queries requested from {len(model)} tokens")
        rows = []
        for direction in directions:
            qcfg = QuerySuiteConfig(args.queries, args.k, args.seed, direction)
            scores = query_suite(model.matrix, qcfg, formats, rounding, args.max_code, _mode(args), threads)
            for fmt, value in scores.items():
                rows.append({
                    "model": name,
                    "format": fmt,
                    "direction": direction.value,
                    "queries": args.queries,
                    "k": args.k,
                    "seed": args.seed,
                    "ndcg": value,
                })
    _write_table(rows, args.json, out)
    return 0


def cmd_synth(args, out) -> int:
    try:
        model = synth_model(args.tokens, args.dim, args.exp_center, args.exp_spread, args.uniques, args.seed)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "config", str(exc)) from None
    save_model(model, args.output)
    out.write(f"wrote {args.output}: {len(model)} tokens x {model.dim}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="efloat", description="Entropy-coded float (EFn) compression of embedding models.")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (default: $EFC_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def coding_flags(p, bits=16):
        p.add_argument("--bits", type=int, default=bits, help="EFn bit budget n")
        p.add_argument("--max-code", type=int, default=8, help="max coded-exponent width K")
        p.add_argument("--joint", action="store_true", help="code sign and exponent together")
        p.add_argument("--stride", type=int, default=1, help="histogram every stride-th value")
        p.add_argument("--include-all", action="store_true", help="give every exponent a code")

    def rounding_flags(p):
        p.add_argument("--rounding", choices=["detr", "stoc"], default="detr")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("stats", help="exponent histogram and code widths")
    p.add_argument("model")
    coding_flags(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("encode", help="compress a model into an EFLT container")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True)
    coding_flags(p)
    rounding_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="expand an EFLT container")
    p.add_argument("container")
    p.add_argument("-o", "--output")
    p.add_argument("--format", choices=["fp32", "bf16", "fp16"], default="fp32")
    p.add_argument("--row", help="decode one row, by token (preferred) or index")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="RMSE ratio or NDCG@k report")
    p.add_argument("model")
    p.add_argument("--metric", choices=["rmse", "ndcg"], default="rmse")
    p.add_argument("--formats", help="comma-separated: fp32,bf16,fp16,efN")
    p.add_argument("--queries", type=int, default=20)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--direction", choices=["sim", "dissim", "both"], default="both")
    p.add_argument("--max-code", type=int, default=8)
    p.add_argument("--joint", action="store_true")
    p.add_argument("--json", action="store_true")
    p.add_argument("--threads", type=int, default=None, dest="threads_sub", help=argparse.SUPPRESS)
    rounding_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic embedding model")
    p.add_argument("--tokens", type=int, default=1000)
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--exp-center", type=int, default=-2)
    p.add_argument("--exp-spread", type=float, default=2.0)
    p.add_argument("--uniques", type=int, default=23)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _validate(args) -> None:
    if getattr(args, "stride", 1) < 1:
        raise CliError(EXIT_USAGE, "usage", "--stride must be >= 1")
    if getattr(args, "seed", 0) < 0:
        raise CliError(EXIT_USAGE, "usage", "--seed must be non-negative")
    if args.command == "eval" and (args.queries < 1 or args.k < 1):
        raise CliError(EXIT_USAGE, "usage", "--queries and --k must be >= 1")
    if args.command == "synth" and (args.tokens < 0 or args.dim < 1):
        raise CliError(EXIT_CONFIG, "config", "--tokens must be >= 0 and --dim >= 1")
    if getattr(args, "threads_sub", None) is not None:
        args.threads = args.threads_sub
    _threads(args)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        _validate(args)
        if hasattr(args, "bits"):
            # config errors surface before any file is touched
            EFloatConfig(args.bits, args.max_code, _mode(args))
        return args.func(args, out)
    except CliError as exc:
        err = exc
    except ConfigError as exc:
        err = CliError(EXIT_CONFIG, "config", str(exc))
    except EFloatError as exc:
        err = CliError(EXIT_DATA, "data", str(exc))
    except ValueError as exc:
        err = CliError(EXIT_DATA, "data", str(exc))
    print(f"error: {err.kind}: {err}", file=sys.stderr)
    return err.code


if __name__ == "__main__":
    sys.exit(main())
