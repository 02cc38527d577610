"""RMSE of every format against FP32, and the BF16/FP16 ratios, under both roundings.

    python3 scripts/precision_tables.py [MODEL] [--max-code 8] [--seed 0]

Without MODEL the reference synthetic model is generated in memory.
"""

import argparse

from efloat.eval import rmse_ratio_report
from efloat.fp_bits import DETR, stoc
from efloat.model_io import load_model
from efloat.synth import synth_matrix

FORMATS = ["bf16", "fp16"] + [f"ef{n}" for n in range(16, 7, -1)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model", nargs="?")
    ap.add_argument("--max-code", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    matrix = load_model(args.model).matrix if args.model else synth_matrix(1000, 50, seed=args.seed)

    reports = {name: rmse_ratio_report(matrix, FORMATS, args.max_code, rounding)
               for name, rounding in (("detr", DETR), ("stoc", stoc(args.seed)))}
    print(f"{'format':<7}" + "".join(f"{h:>14}" for h in
          ("rmse detr", "bf16/x detr", "fp16/x detr", "rmse stoc", "bf16/x stoc")))
    for fmt in FORMATS:
        d, s = reports["detr"], reports["stoc"]
        print(f"{fmt:<7}{d.rmse[fmt]:>14.4e}{d.ratio('bf16', fmt):>14.3f}"
              f"{d.ratio('fp16', fmt):>14.3f}{s.rmse[fmt]:>14.4e}{s.ratio('bf16', fmt):>14.3f}")


if __name__ == "__main__":
    main()
