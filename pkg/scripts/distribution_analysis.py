"""Leading-digit and significand-bit distributions, plus the exponent histogram.

    python3 scripts/distribution_analysis.py [MODEL]

Significand bits of real weights sit near P(1) = 0.5 at every position, which is
why only the exponent is worth entropy coding.
"""

import argparse

from efloat.codec import EFloatConfig
from efloat.eval import benford_digits, benford_expected, exponent_stats, significand_bit_distribution
from efloat.fp_bits import EXPONENT_BIAS
from efloat.model_io import load_model
from efloat.synth import synth_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("model", nargs="?")
    args = ap.parse_args()
    matrix = load_model(args.model).matrix if args.model else synth_matrix(1000, 50)

    print("leading digit  observed  log10(1+1/d)")
    for d, (obs, exp) in enumerate(zip(benford_digits(matrix), benford_expected()), start=1):
        print(f"  {d}            {obs:.4f}    {exp:.4f}")

    print("\nsignificand bit  P(1)")
    for pos, p in enumerate(significand_bit_distribution(matrix), start=1):
        print(f"  {pos:>2}             {p:.4f}")

    stats = exponent_stats(matrix, EFloatConfig(16, 8))
    print(f"\n{stats.unique_exponents} exponents, avg code {stats.avg_code_width:.3f} bits, "
          f"avg significand {stats.avg_significand_width:.3f} bits (EF16)")
    total = stats.histogram.sum()
    for sym in stats.histogram.nonzero()[0]:
        share = stats.histogram[sym] / total
        print(f"  2^{sym - EXPONENT_BIAS:<4} {share:7.4f} {'#' * int(round(share * 100))}")


if __name__ == "__main__":
    main()
