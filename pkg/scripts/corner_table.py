"""Artificial corner refinement table: element counts, cond_2 of the
stabilized JN matrix, MLAS and HB condition numbers and mesh sizes per
level, printed as a fixed-width table.

    python3 scripts/table1.py [--levels 23]
"""
import argparse

from fembem.experiments import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=23)
    args = ap.parse_args()
    head = f"{'L':>3} {'#T':>5} {'M':>4} {'cond2(A_jn)':>12} {'cond MLAS':>10} {'cond HB':>10} {'h_max':>8} {'h_min':>9}"
    print(head)
    print("-" * len(head))

    def show(r):
        print(f"{r.level:>3} {r.nT_omega:>5} {r.M:>4} {r.cond2_est:>12.2e} {r.cond_mlas:>10.2f} "
              f"{r.cond_hb:>10.2f} {r.h_max:>8.2f} {r.h_min:>9.2e}", flush=True)

    run_experiment(ExperimentConfig(experiment="artificial", levels=args.levels), show)


if __name__ == "__main__":
    main()
