#!/usr/bin/env python3
"""Regenerates data/digits8x8.csv from scikit-learn's bundled digits set.

The file is committed, so this only needs to run when refreshing it.
Columns: y0..y63 (integer pixel values 0..16, row-major 8x8), x0 (digit label
0..9).
"""
import argparse

from sklearn.datasets import load_digits


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/digits8x8.csv")
    args = parser.parse_args()

    digits = load_digits()
    with open(args.out, "w") as out:
        out.write(",".join([f"y{j}" for j in range(64)] + ["x0"]) + "\n")
        for row, label in zip(digits.data, digits.target):
            cells = [str(int(v)) for v in row] + [str(int(label))]
            out.write(",".join(cells) + "\n")
    print(f"wrote {args.out}: {digits.data.shape[0]} rows")


if __name__ == "__main__":
    main()
