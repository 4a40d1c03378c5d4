"""Print level-wise condition numbers and iteration counts of a run CSV.

    python3 scripts/summarize.py results/jn.csv
"""
import sys

from fembem.experiments import read_csv


def main():
    for path in sys.argv[1:]:
        rows = read_csv(path)
        print(path)
        cols = ["level", "nT_omega", "M", "cond_mlas", "cond_hb", "cond_diag", "iters_stab", "iters_nostab"]
        print("  " + " ".join(f"{c:>12}" for c in cols))
        for r in rows:
            print("  " + " ".join(f"{r[c][:12]:>12}" for c in cols))


if __name__ == "__main__":
    main()
