"""NDCG@k of reduced formats against FP32 rankings, over several query seeds.

    python3 scripts/ndcg_sweep.py [MODEL] [--seeds 5] [--queries 20] [--k 10]
"""

import argparse

import numpy as np

from efloat.eval import Direction, QuerySuiteConfig, query_suite
from efloat.model_io import load_model
from efloat.synth import synth_matrix

FORMATS = ["fp32", "bf16", "fp16", "ef16", "ef14", "ef12", "ef10", "ef8"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model", nargs="?")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--queries", type=int, default=20)
    ap.add_argument("--k", type=int, default=10)
    args = ap.parse_args()
    matrix = load_model(args.model).matrix if args.model else synth_matrix(1000, 50)

    for direction in Direction:
        runs = [query_suite(matrix, QuerySuiteConfig(args.queries, args.k, s, direction), FORMATS)
                for s in range(args.seeds)]
        print(f"[{direction.value}]  mean +/- std over {args.seeds} query seeds")
        for fmt in FORMATS:
            vals = np.array([r[fmt] for r in runs])
            print(f"  {fmt:<6}{vals.mean():.5f} +/- {vals.std():.5f}")


if __name__ == "__main__":
    main()
