"""Regenerate the feature table shipped in configs/symbolic_features.csv.

The symbolic benchmark evaluates candidate expressions row-wise on this
table, so the file must stay byte-stable for reproducible runs.
"""

import argparse
from pathlib import Path

import numpy as np

from sagep.embedding import FeatureTable, write_feature_table


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out",
                        default=str(Path(__file__).resolve().parent.parent
                                    / "configs" / "symbolic_features.csv"))
    parser.add_argument("--rows", type=int, default=16)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    table = FeatureTable(columns={
        "I1": rng.uniform(0.0, 1.5, size=args.rows),
        "I2": rng.uniform(-1.0, 0.0, size=args.rows),
    })
    write_feature_table(table, args.out)
    print(f"wrote {args.rows} rows to {args.out}")


if __name__ == "__main__":
    main()
